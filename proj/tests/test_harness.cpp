#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdm/reconstruction.hpp"

using namespace cdm;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "cdm_test_harness" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

SweepConfig small_config() {
  SweepConfig c;
  c.grid = {8, 6, 0.1};
  c.state.waist_px = 2.5;
  c.fractions = {0.25, 0.5};
  c.repetitions = 3;
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("config round trip", "[harness]") {
  auto c = small_config();
  c.solver.tv.mu = 12.5;
  c.model = MeasurementModel::counts;
  c.photon_budget = 1e5;
  const auto back = sweep_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.solver.tv.mu == 12.5);

  const auto j = nlohmann::json::parse(R"({"alpha_deg": 10, "grid": {"nx": 4, "ny": 2}})");
  const auto d = sweep_config_from_json(j);
  CHECK(d.alpha_rad == Approx(10 * std::numbers::pi / 180));
  CHECK(d.grid.nx == 4);
  CHECK(d.repetitions == 100);
  CHECK(d.fractions.size() == 16);
  CHECK_THROWS_AS(sweep_config_from_json(nlohmann::json::parse(R"({"repetitions": "many"})")), std::invalid_argument);
}

TEST_CASE("config validation", "[harness]") {
  auto c = small_config();
  c.fractions = {0.0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.repetitions = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.model = MeasurementModel::counts;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.solver.name = "magic";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.state.kind = "phase-mask";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("run seeds", "[harness]") {
  CHECK(run_seed(1, 0.25, 3, SeedRole::masks) == run_seed(1, 0.25, 3, SeedRole::masks));
  CHECK(run_seed(1, 0.25, 3, SeedRole::masks) != run_seed(1, 0.25, 3, SeedRole::raster));
  CHECK(run_seed(1, 0.25, 3, SeedRole::masks) != run_seed(1, 0.25, 4, SeedRole::masks));
  CHECK(run_seed(1, 0.25, 3, SeedRole::masks) != run_seed(2, 0.25, 3, SeedRole::masks));
  // 0.1 + 0.2 is not 0.3 in binary, but both map to the same fraction key.
  CHECK(run_seed(1, 0.1 + 0.2, 0, SeedRole::masks) == run_seed(1, 0.3, 0, SeedRole::masks));
}

TEST_CASE("aggregate", "[harness]") {
  std::vector<RunSample> runs{{"cdm", 0.5, 0, 0, 0.9, true, {}}, {"cdm", 0.5, 1, 0, 0.7, true, {}}, {"cdm", 0.5, 2, 0, 0.0, false, "x"}};
  std::vector<const RunSample*> sel{&runs[0], &runs[1], &runs[2]};
  const auto p = aggregate(0.5, 10, sel);
  CHECK(p.mean == Approx(0.8));
  CHECK(p.stddev == Approx(std::sqrt(0.02)));
  CHECK(p.samples == 2);
  CHECK(p.failures == 1);
}

TEST_CASE("run_sweep", "[harness]") {
  SECTION("pinv at fraction 1 is exact") {
    auto c = small_config();
    c.fractions = {1.0};
    c.solver.name = "pinv";
    c.repetitions = 4;
    const auto r = run_sweep(c, nullptr);
    REQUIRE(r.cdm.points.size() == 1);
    CHECK(r.cdm.points[0].mean == Approx(1.0).margin(1e-8));
    CHECK(r.cdm.points[0].stddev < 1e-9);
    CHECK(r.cdm.points[0].samples == 4);
    CHECK(r.raster.points[0].mean == Approx(1.0).margin(1e-12));
  }
  SECTION("identity masks at fraction 1") {
    auto c = small_config();
    c.fractions = {1.0};
    c.masks = "identity";
    c.solver.name = "pinv";
    c.repetitions = 1;
    CHECK(run_sweep(c, nullptr).cdm.points[0].mean == Approx(1.0).margin(1e-8));
    c.fractions = {0.5};
    CHECK(run_sweep(c, nullptr).cdm.points[0].failures == 1);
  }
  SECTION("artifacts and byte-identical reports") {
    auto c = small_config();
    const auto a = fresh_dir("sweep_a"), b = fresh_dir("sweep_b");
    c.out_dir = a.string();
    const auto ra = run_sweep(c, nullptr);
    c.out_dir = b.string();
    c.threads = 3;
    run_sweep(c, nullptr);
    CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
    CHECK(slurp(a / "runs" / "fraction_0250000.csv") == slurp(b / "runs" / "fraction_0250000.csv"));
    const auto csv = slurp(a / "report.csv");
    CHECK(line_count(csv) == 1 + 2 * 2);
    CHECK(csv.rfind(report_csv_header(), 0) == 0);
    CHECK(line_count(slurp(a / "runs" / "fraction_0500000.csv")) == 1 + 2 * 3);
    const auto j = nlohmann::json::parse(slurp(a / "report.json"));
    CHECK(j["rows"].size() == 4);
    CHECK(j["config"]["repetitions"] == 3);
    for (const auto& p : ra.cdm.points) {
      CHECK(p.mean >= 0.0);
      CHECK(p.mean <= 1.0);
      CHECK(p.stddev >= 0.0);
      CHECK(p.samples == 3);
    }
  }
  SECTION("subsets of a sweep reproduce the same runs") {
    auto c = small_config();
    const auto full = run_sweep(c, nullptr);
    c.fractions = {0.5};
    const auto part = run_sweep(c, nullptr);
    CHECK(part.cdm.points[0].mean == full.cdm.points[1].mean);
    CHECK(part.raster.points[0].mean == full.raster.points[1].mean);
  }
}

TEST_CASE("emit_report", "[harness]") {
  SECTION("empty directory gives a header-only CSV") {
    const auto d = fresh_dir("empty");
    const auto s = emit_report(d.string());
    CHECK(s.rows == 0);
    CHECK(slurp(d / "report.csv") == report_csv_header());
  }
  SECTION("corrupt run files are listed and skipped") {
    auto c = small_config();
    const auto d = fresh_dir("corrupt");
    c.out_dir = d.string();
    run_sweep(c, nullptr);
    {
      std::ofstream os(d / "runs" / "fraction_0500000.csv");
      os << "garbage\n";
    }
    const auto s = emit_report(d.string());
    CHECK(s.rows == 2);
    CHECK(s.skipped_files == std::vector<std::string>{"runs/fraction_0500000.csv"});
    const auto j = nlohmann::json::parse(slurp(d / "report.json"));
    CHECK(j["skipped_files"].size() == 1);
  }
  SECTION("speed-up column for the large preset") {
    const auto d = fresh_dir("speedup");
    fs::create_directories(d / "runs");
    {
      std::ofstream os(d / "config.json");
      os << R"({"grid": {"nx": 160, "ny": 120}})";
    }
    {
      std::ofstream os(d / "runs" / "fraction_0200000.csv");
      os << runs_csv_header() << "cdm,0.2,0,1,0.99,ok\n";
    }
    emit_report(d.string());
    const auto j = nlohmann::json::parse(slurp(d / "report.json"));
    CHECK(j["rows"][0]["measurements"] == 3840);
    CHECK(j["rows"][0]["speedup"].get<double>() == Approx(346.4).margin(0.1));
  }
  SECTION("missing directory") { CHECK_THROWS_AS(emit_report("/nonexistent/cdm/dir"), std::invalid_argument); }
}

TEST_CASE("run_reconstruction", "[harness]") {
  SECTION("desk preset at 20%") {
    SweepConfig c;
    c.fractions = {0.2};
    const auto d = fresh_dir("recon");
    c.out_dir = d.string();
    const auto r = run_reconstruction(c);
    CHECK(r.fidelity >= 0.85);
    for (const char* name : {"truth_amplitude.txt", "truth_real.txt", "truth_imag.txt", "recon_amplitude.txt", "recon_real.txt",
                             "recon_imag.txt", "recon_phase.txt"}) {
      std::istringstream is(slurp(d / name));
      std::size_t count = 0;
      double v;
      while (is >> v) ++count;
      CHECK(count == 192);
    }
    CHECK(line_count(slurp(d / "recon_amplitude.txt")) == 12);
    const auto rec = read_record((d / "record.cdm").string());
    CHECK(rec.rows() == 38);
    const auto j = nlohmann::json::parse(slurp(d / "reconstruction.json"));
    CHECK(j["fidelity"].get<double>() == r.fidelity);
    CHECK(fs::exists(d / "plot.gp"));
  }
  SECTION("persisted record recovers bit-exactly") {
    SweepConfig c;
    c.fractions = {0.3};
    const auto d = fresh_dir("persist");
    c.out_dir = d.string();
    const auto r = run_reconstruction(c);
    const auto again = recover(read_record((d / "record.cdm").string()), c.solver);
    CHECK(again.state.amps == r.recon.amps);
    CHECK(again.report.trace == r.report.trace);
  }
  SECTION("identity fallback at fraction 1") {
    SweepConfig c;
    c.fractions = {1.0};
    c.masks = "identity";
    c.solver.name = "pinv";
    const auto r = run_reconstruction(c);
    double err = 0.0;
    for (std::size_t j = 0; j < r.truth.size(); ++j) err = std::max(err, std::abs(r.recon.amps[j] - r.truth.amps[j]));
    CHECK(err < 1e-8);
  }
}

TEST_CASE("phase_mask_agreement", "[harness]") {
  const Grid2D g{4, 2, 1.0};
  BinaryImage mask{4, 2, {1, 1, 0, 0, 1, 1, 0, 0}};
  const auto truth = phase_mask_state(g, mask, std::numbers::pi / 2, std::numeric_limits<double>::infinity());
  CHECK(phase_mask_agreement(truth, truth, mask) == 1.0);
  auto rotated = truth;
  for (auto& z : rotated.amps) z *= std::polar(1.0, 1.0);
  CHECK(phase_mask_agreement(rotated, truth, mask) == 1.0);
  BinaryImage wrong{4, 2, {0, 0, 1, 1, 0, 0, 1, 1}};
  auto flipped = phase_mask_state(g, wrong, std::numbers::pi / 2, std::numeric_limits<double>::infinity());
  CHECK(phase_mask_agreement(flipped, truth, mask) == 0.0);
}

TEST_CASE("U-R phase-mask state at N = 19200", "[harness][slow]") {
  SweepConfig c;
  c.grid = {160, 120, 0.01};
  c.state.kind = "phase-mask";
  c.state.mask_file = std::string(CDM_DATA_DIR) + "/ur_mask.pbm";
  c.state.waist_px = 120.0;
  c.state.aberration = {0.0, 0.0};
  c.fractions = {0.2};
  const auto r = run_reconstruction(c);
  REQUIRE(r.phase_agreement.has_value());
  CHECK(*r.phase_agreement >= 0.95);
  CHECK(r.record.rows() == 3840);
}
