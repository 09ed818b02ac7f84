#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(CDM_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int raw = pclose(p);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

fs::path fresh(const std::string& name) {
  const auto d = fs::temp_directory_path() / "cdm_test_cli" / name;
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

}  // namespace

TEST_CASE("simulate then recover", "[cli]") {
  const auto d = fresh("stages");
  auto r = cli("simulate --grid 16x12 --fraction 0.25 --seed 3 --out " + d.string());
  REQUIRE(r.status == 0);
  REQUIRE(fs::exists(d / "record.cdm"));
  REQUIRE(fs::exists(d / "truth.state"));
  r = cli("recover --record " + (d / "record.cdm").string() + " --truth " + (d / "truth.state").string() + " --out " +
          (d / "tv").string());
  REQUIRE(r.status == 0);
  const auto j = nlohmann::json::parse(slurp(d / "tv" / "solve_report.json"));
  CHECK(j["fidelity"].get<double>() > 0.85);
  CHECK(j["method"] == "tv");
  r = cli("recover --solver pinv --record " + (d / "record.cdm").string() + " --out " + (d / "pinv").string());
  CHECK(r.status == 0);
  CHECK(fs::exists(d / "pinv" / "recon.state"));
}

TEST_CASE("sweep and report", "[cli]") {
  const auto d = fresh("sweep");
  const auto r = cli("sweep --grid 8x6 --fraction 0.25,0.5 --reps 2 --out " + d.string());
  REQUIRE(r.status == 0);
  const auto csv = slurp(d / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  fs::remove(d / "report.csv");
  CHECK(cli("report --out " + d.string()).status == 0);
  CHECK(slurp(d / "report.csv") == csv);
  const auto cfg = nlohmann::json::parse(slurp(d / "config.json"));
  CHECK(cfg["grid"]["nx"] == 8);
  CHECK(cfg["repetitions"] == 2);
}

TEST_CASE("config file with overrides", "[cli]") {
  const auto d = fresh("config");
  {
    std::ofstream os(d / "c.json");
    os << R"({"grid": {"nx": 6, "ny": 4}, "fractions": [0.5], "repetitions": 5, "alpha_deg": 10, "solver": {"name": "pinv"}})";
  }
  const auto r = cli("sweep --config " + (d / "c.json").string() + " --reps 1 --out " + (d / "o").string());
  REQUIRE(r.status == 0);
  const auto cfg = nlohmann::json::parse(slurp(d / "o" / "config.json"));
  CHECK(cfg["repetitions"] == 1);
  CHECK(cfg["solver"]["name"] == "pinv");
  CHECK(std::abs(cfg["alpha_rad"].get<double>() - 10 * 3.14159265358979 / 180) < 1e-9);
}

TEST_CASE("errors", "[cli]") {
  const auto d = fresh("errors");
  CHECK(cli("").status != 0);
  CHECK(cli("sweep --grid 16by12 --out " + d.string()).status == 2);
  CHECK(cli("sweep --fraction 1.5 --out " + d.string()).status == 2);
  CHECK(cli("simulate --model counts --out " + d.string()).status == 2);
  CHECK(cli("recover --record /nonexistent.cdm --out " + d.string()).status != 0);
  CHECK(cli("report --out /nonexistent/dir").status == 2);
}
