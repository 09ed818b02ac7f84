#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cdm/dm_baseline.hpp"
#include "cdm/io.hpp"
#include "cdm/pbm.hpp"
#include "cdm/random.hpp"
#include "cdm/recovery.hpp"
#include "cdm/weak_sim.hpp"

namespace cdm {

namespace fs = std::filesystem;

struct StateSpec {
  std::string kind{"gaussian"};  // gaussian | phase-mask
  double waist_px{4.0};
  Aberration aberration{};
  std::string mask_file;
  double jump_rad{std::numbers::pi / 2.0};
};

struct SolverSpec {
  std::string name{"tv"};  // tv | pinv
  TvParams tv{};
};

struct SweepConfig {
  Grid2D grid{16, 12, 0.1};
  StateSpec state{};
  std::vector<double> fractions{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40,
                                0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80};
  std::size_t repetitions{100};
  double alpha_rad{kDefaultAlpha};
  MeasurementModel model{MeasurementModel::analytic};
  std::optional<double> photon_budget;  // counts model only
  double density{0.5};
  std::string masks{"random"};  // random | identity (identity needs fraction 1)
  SolverSpec solver{};
  std::uint64_t seed{1};
  std::string out_dir;
  std::size_t threads{0};  // 0: hardware concurrency
  bool raster{true};       // also run the partial-raster baseline

  void validate() const {
    grid.validate();
    if (fractions.empty()) throw std::invalid_argument("no measurement fractions given");
    for (double f : fractions)
      if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("fractions must lie in (0, 1]");
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("mask density must lie in (0, 1]");
    if (state.kind != "gaussian" && state.kind != "phase-mask") throw std::invalid_argument("unknown state kind: " + state.kind);
    if (state.kind == "phase-mask" && state.mask_file.empty()) throw std::invalid_argument("phase-mask state needs mask_file");
    if (solver.name != "tv" && solver.name != "pinv") throw std::invalid_argument("unknown solver: " + solver.name);
    if (masks != "random" && masks != "identity") throw std::invalid_argument("masks must be random or identity");
    if (model == MeasurementModel::counts && !(photon_budget && *photon_budget > 0.0))
      throw std::invalid_argument("counts model needs a positive photon budget");
    solver.tv.validate();
  }
};

inline nlohmann::json to_json(const SweepConfig& c) {
  nlohmann::json tv = {{"mu", c.solver.tv.mu ? nlohmann::json(*c.solver.tv.mu) : nlohmann::json(nullptr)},
                       {"beta0", c.solver.tv.beta0},
                       {"beta_max", c.solver.tv.beta_max ? nlohmann::json(*c.solver.tv.beta_max) : nlohmann::json(nullptr)},
                       {"continuation", c.solver.tv.continuation},
                       {"tol", c.solver.tv.tol},
                       {"max_outer", c.solver.tv.max_outer},
                       {"cg_tol", c.solver.tv.cg_tol},
                       {"cg_max_iter", c.solver.tv.cg_max_iter},
                       {"divergence_window", c.solver.tv.divergence_window}};
  return {{"grid", {{"nx", c.grid.nx}, {"ny", c.grid.ny}, {"pitch_mm", c.grid.pitch_mm}}},
          {"state",
           {{"kind", c.state.kind},
            {"waist_px", c.state.waist_px},
            {"defocus", c.state.aberration.defocus},
            {"astigmatism", c.state.aberration.astigmatism},
            {"mask_file", c.state.mask_file},
            {"jump_rad", c.state.jump_rad}}},
          {"fractions", c.fractions},
          {"repetitions", c.repetitions},
          {"alpha_rad", c.alpha_rad},
          {"model", to_string(c.model)},
          {"photon_budget", c.photon_budget ? nlohmann::json(*c.photon_budget) : nlohmann::json(nullptr)},
          {"density", c.density},
          {"masks", c.masks},
          {"solver", {{"name", c.solver.name}, {"tv", tv}}},
          {"seed", c.seed},
          {"out_dir", c.out_dir},
          {"threads", c.threads},
          {"raster", c.raster}};
}

// Missing keys keep their defaults; "alpha_deg" is accepted as an alternative to "alpha_rad".
inline SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig c = {}) {
  try {
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      c.grid.nx = g.value("nx", c.grid.nx);
      c.grid.ny = g.value("ny", c.grid.ny);
      c.grid.pitch_mm = g.value("pitch_mm", c.grid.pitch_mm);
    }
    if (j.contains("state")) {
      const auto& s = j["state"];
      c.state.kind = s.value("kind", c.state.kind);
      c.state.waist_px = s.value("waist_px", c.state.waist_px);
      c.state.aberration.defocus = s.value("defocus", c.state.aberration.defocus);
      c.state.aberration.astigmatism = s.value("astigmatism", c.state.aberration.astigmatism);
      c.state.mask_file = s.value("mask_file", c.state.mask_file);
      c.state.jump_rad = s.value("jump_rad", c.state.jump_rad);
    }
    if (j.contains("fractions")) c.fractions = j["fractions"].get<std::vector<double>>();
    c.repetitions = j.value("repetitions", c.repetitions);
    if (j.contains("alpha_deg")) c.alpha_rad = j["alpha_deg"].get<double>() * std::numbers::pi / 180.0;
    c.alpha_rad = j.value("alpha_rad", c.alpha_rad);
    if (j.contains("model")) c.model = parse_model(j["model"].get<std::string>());
    if (j.contains("photon_budget") && !j["photon_budget"].is_null()) c.photon_budget = j["photon_budget"].get<double>();
    c.density = j.value("density", c.density);
    c.masks = j.value("masks", c.masks);
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      c.solver.name = s.value("name", c.solver.name);
      if (s.contains("tv")) {
        const auto& t = s["tv"];
        if (t.contains("mu") && !t["mu"].is_null()) c.solver.tv.mu = t["mu"].get<double>();
        c.solver.tv.beta0 = t.value("beta0", c.solver.tv.beta0);
        if (t.contains("beta_max") && !t["beta_max"].is_null()) c.solver.tv.beta_max = t["beta_max"].get<double>();
        c.solver.tv.continuation = t.value("continuation", c.solver.tv.continuation);
        c.solver.tv.tol = t.value("tol", c.solver.tv.tol);
        c.solver.tv.max_outer = t.value("max_outer", c.solver.tv.max_outer);
        c.solver.tv.cg_tol = t.value("cg_tol", c.solver.tv.cg_tol);
        c.solver.tv.cg_max_iter = t.value("cg_max_iter", c.solver.tv.cg_max_iter);
        c.solver.tv.divergence_window = t.value("divergence_window", c.solver.tv.divergence_window);
      }
    }
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.threads = j.value("threads", c.threads);
    c.raster = j.value("raster", c.raster);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad config: ") + e.what());
  }
  return c;
}

inline SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad config: ") + e.what());
  }
  return sweep_config_from_json(j);
}

inline StateVector synthesize_truth(const SweepConfig& c) {
  if (c.state.kind == "phase-mask") {
    const auto mask = read_pbm(c.state.mask_file);
    return phase_mask_state(c.grid, mask, c.state.jump_rad, c.state.waist_px, c.state.aberration);
  }
  return gaussian_state(c.grid, c.state.waist_px, c.state.aberration);
}

// Seeds per run coordinate; the fraction enters in parts per million so a sub-sweep
// over some of the fractions reproduces the same runs.
enum class SeedRole : std::uint64_t { masks = 0, raster = 1, cdm_counts = 2, raster_counts = 3 };

inline std::uint64_t fraction_key(double f) { return static_cast<std::uint64_t>(std::llround(f * 1e6)); }

inline std::uint64_t run_seed(std::uint64_t master, double fraction, std::size_t rep, SeedRole role) {
  return derive_seed(master, {fraction_key(fraction), static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(role)});
}

inline std::optional<NoiseMeta> noise_for(const SweepConfig& c, std::uint64_t seed) {
  if (c.model != MeasurementModel::counts) return std::nullopt;
  return NoiseMeta{*c.photon_budget, seed};
}

inline SensingMatrix masks_for(const SweepConfig& c, double fraction, std::size_t rep) {
  const std::size_t n = c.grid.size();
  const std::size_t m = measurement_count(n, fraction);
  if (c.masks == "identity") {
    if (m != n) throw std::invalid_argument("identity masks need fraction 1");
    return SensingMatrix::identity(n);
  }
  return generate_masks(m, c.grid, c.density, run_seed(c.seed, fraction, rep, SeedRole::masks));
}

inline Recovery recover(const MeasurementRecord& rec, const SolverSpec& s) {
  if (s.name == "pinv") return pinv_recover(rec);
  return tv_admm_recover(rec, s.tv);
}

struct RunSample {
  std::string method;  // cdm | raster
  double fraction{0.0};
  std::size_t rep{0};
  std::uint64_t seed{0};
  double fidelity{0.0};
  bool ok{false};
  std::string error;
};

struct CurvePoint {
  double fraction{0.0};
  std::size_t measurements{0};
  double mean{0.0};
  double stddev{0.0};
  std::size_t samples{0};
  std::size_t failures{0};
};

struct FidelityCurve {
  std::string method;
  std::vector<CurvePoint> points;
};

struct SweepResult {
  FidelityCurve cdm;
  FidelityCurve raster;
  std::vector<RunSample> runs;
};

// Mean and sample standard deviation (+-1 sigma error bars) of the successful runs.
inline CurvePoint aggregate(double fraction, std::size_t m, const std::vector<const RunSample*>& runs) {
  CurvePoint p{fraction, m, 0.0, 0.0, 0, 0};
  double sum = 0.0;
  for (const auto* r : runs) {
    if (!r->ok) {
      ++p.failures;
      continue;
    }
    sum += r->fidelity;
    ++p.samples;
  }
  if (p.samples == 0) return p;
  p.mean = sum / static_cast<double>(p.samples);
  if (p.samples > 1) {
    double ss = 0.0;
    for (const auto* r : runs)
      if (r->ok) ss += (r->fidelity - p.mean) * (r->fidelity - p.mean);
    p.stddev = std::sqrt(ss / static_cast<double>(p.samples - 1));
  }
  return p;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline std::string fmt_double(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string fraction_tag(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%07llu", static_cast<unsigned long long>(fraction_key(f)));
  return buf;
}

}  // namespace detail

inline std::string runs_csv_header() { return "method,fraction,rep,seed,fidelity,status\n"; }

inline std::string runs_csv_row(const RunSample& r) {
  std::string status = r.ok ? "ok" : "error";
  if (!r.ok && !r.error.empty()) {
    std::string e = r.error;
    std::replace(e.begin(), e.end(), ',', ';');
    std::replace(e.begin(), e.end(), '\n', ' ');
    status += ":" + e;
  }
  return r.method + "," + detail::fmt_double(r.fraction) + "," + std::to_string(r.rep) + "," + std::to_string(r.seed) + "," +
         detail::fmt_double(r.fidelity) + "," + status + "\n";
}

struct ReportSummary {
  std::size_t rows{0};
  std::vector<std::string> skipped_files;
};

inline ReportSummary emit_report(const std::string& dir);

// Fidelity-vs-fraction sweep for CDM and the partial-raster baseline.
inline SweepResult run_sweep(const SweepConfig& config, std::ostream* log = &std::cerr) {
  config.validate();
  const auto truth = synthesize_truth(config);
  const std::size_t n = config.grid.size();
  const std::size_t per_fraction = config.repetitions;
  const std::size_t methods = config.raster ? 2 : 1;
  const std::size_t total = config.fractions.size() * per_fraction;
  std::vector<RunSample> runs(total * methods);

  std::mutex log_mutex;
  detail::parallel_for(total, config.threads, [&](std::size_t task) {
    const double f = config.fractions[task / per_fraction];
    const std::size_t rep = task % per_fraction;
    auto& cdm_run = runs[task * methods];
    cdm_run = {"cdm", f, rep, run_seed(config.seed, f, rep, SeedRole::masks), 0.0, false, {}};
    try {
      const auto q = masks_for(config, f, rep);
      const auto rec = simulate(truth, q, config.alpha_rad, config.model, noise_for(config, run_seed(config.seed, f, rep, SeedRole::cdm_counts)));
      const auto res = recover(rec, config.solver);
      if (res.report.degenerate) throw DegenerateStateError("reconstruction is the zero vector");
      cdm_run.fidelity = fidelity(res.state, truth);
      cdm_run.ok = true;
    } catch (const std::exception& e) {
      cdm_run.error = e.what();
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << "cdm run failed (fraction " << f << ", rep " << rep << "): " << e.what() << "\n";
      }
    }
    if (!config.raster) return;
    auto& ras = runs[task * methods + 1];
    ras = {"raster", f, rep, run_seed(config.seed, f, rep, SeedRole::raster), 0.0, false, {}};
    try {
      const auto plan = make_raster_plan(n, f, ras.seed);
      const auto rec = partial_raster_recover(truth, plan, config.alpha_rad, config.model,
                                              noise_for(config, run_seed(config.seed, f, rep, SeedRole::raster_counts)));
      ras.fidelity = fidelity(rec, truth);
      ras.ok = true;
    } catch (const std::exception& e) {
      ras.error = e.what();
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << "raster run failed (fraction " << f << ", rep " << rep << "): " << e.what() << "\n";
      }
    }
  });

  SweepResult out;
  out.cdm.method = "cdm";
  out.raster.method = "raster";
  for (std::size_t fi = 0; fi < config.fractions.size(); ++fi) {
    const double f = config.fractions[fi];
    for (std::size_t mi = 0; mi < methods; ++mi) {
      std::vector<const RunSample*> sel;
      for (std::size_t rep = 0; rep < per_fraction; ++rep) sel.push_back(&runs[(fi * per_fraction + rep) * methods + mi]);
      (mi == 0 ? out.cdm : out.raster).points.push_back(aggregate(f, measurement_count(n, f), sel));
    }
  }
  out.runs = std::move(runs);

  if (!config.out_dir.empty()) {
    const fs::path dir(config.out_dir);
    fs::create_directories(dir / "runs");
    {
      std::ofstream os(dir / "config.json");
      os << to_json(config).dump(2) << "\n";
    }
    for (std::size_t fi = 0; fi < config.fractions.size(); ++fi) {
      std::ofstream os(dir / "runs" / ("fraction_" + detail::fraction_tag(config.fractions[fi]) + ".csv"));
      os << runs_csv_header();
      for (std::size_t k = fi * per_fraction * methods; k < (fi + 1) * per_fraction * methods; ++k) os << runs_csv_row(out.runs[k]);
    }
    emit_report(config.out_dir);
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  return out;
}

inline std::vector<RunSample> parse_runs_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line + "\n" != runs_csv_header()) throw FormatError("bad header in " + path.string());
  std::vector<RunSample> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw FormatError("bad row in " + path.string());
    RunSample r;
    try {
      r.method = f[0];
      r.fraction = std::stod(f[1]);
      r.rep = std::stoul(f[2]);
      r.seed = std::stoull(f[3]);
      r.fidelity = std::stod(f[4]);
    } catch (const std::exception&) {
      throw FormatError("bad number in " + path.string());
    }
    if (r.method != "cdm" && r.method != "raster") throw FormatError("unknown method in " + path.string());
    r.ok = f[5] == "ok";
    if (!r.ok) r.error = f[5];
    if (r.ok && !(r.fidelity >= 0.0 && r.fidelity <= 1.0)) throw FormatError("fidelity out of range in " + path.string());
    rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

inline std::string report_csv_header() { return "method,fraction,measurements,mean,std,n,failures,speedup\n"; }

// Aggregates runs/*.csv under dir into report.csv and report.json. Unreadable run
// files are listed in report.json and skipped.
inline ReportSummary emit_report(const std::string& dir_str) {
  const fs::path dir(dir_str);
  if (!fs::is_directory(dir)) throw std::invalid_argument("no such results directory: " + dir_str);
  ReportSummary summary;
  nlohmann::json config = nullptr;
  std::optional<std::size_t> n;
  if (fs::exists(dir / "config.json")) {
    try {
      std::ifstream is(dir / "config.json");
      config = nlohmann::json::parse(is);
      n = config.at("grid").at("nx").get<std::size_t>() * config.at("grid").at("ny").get<std::size_t>();
    } catch (const std::exception&) {
      summary.skipped_files.push_back("config.json");
      config = nullptr;
    }
  }

  std::vector<fs::path> files;
  if (fs::is_directory(dir / "runs"))
    for (const auto& e : fs::directory_iterator(dir / "runs"))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  // (method order, fraction key) -> samples
  std::map<std::pair<int, std::uint64_t>, std::vector<RunSample>> groups;
  std::map<std::uint64_t, double> fraction_of;
  for (const auto& p : files) {
    try {
      for (auto& r : detail::parse_runs_csv(p)) {
        const auto key = fraction_key(r.fraction);
        fraction_of[key] = r.fraction;
        groups[{r.method == "cdm" ? 0 : 1, key}].push_back(std::move(r));
      }
    } catch (const FormatError&) {
      summary.skipped_files.push_back(fs::relative(p, dir).generic_string());
    }
  }

  std::ostringstream csv;
  csv << report_csv_header();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, samples] : groups) {
    const double f = fraction_of[key.second];
    std::vector<const RunSample*> sel;
    for (const auto& s : samples) sel.push_back(&s);
    const std::size_t m = n ? measurement_count(*n, f) : 0;
    const auto pt = aggregate(f, m, sel);
    const std::string method = key.first == 0 ? "cdm" : "raster";
    const std::optional<double> speed = n ? std::optional<double>(speedup_estimate(*n, m)) : std::nullopt;
    csv << method << "," << detail::fmt_double(f, 10) << "," << m << "," << detail::fmt_double(pt.mean, 12) << ","
        << detail::fmt_double(pt.stddev, 12) << "," << pt.samples << "," << pt.failures << ","
        << (speed ? detail::fmt_double(*speed, 10) : std::string{}) << "\n";
    rows.push_back({{"method", method},
                    {"fraction", f},
                    {"measurements", m},
                    {"mean", pt.mean},
                    {"std", pt.stddev},
                    {"n", pt.samples},
                    {"failures", pt.failures},
                    {"speedup", speed ? nlohmann::json(*speed) : nlohmann::json(nullptr)}});
    ++summary.rows;
  }
  {
    std::ofstream os(dir / "report.csv", std::ios::binary | std::ios::trunc);
    os << csv.str();
  }
  {
    std::ofstream os(dir / "report.json", std::ios::binary | std::ios::trunc);
    const nlohmann::json j = {{"config", config}, {"rows", rows}, {"skipped_files", summary.skipped_files}};
    os << j.dump(2) << "\n";
  }
  return summary;
}

}  // namespace cdm
