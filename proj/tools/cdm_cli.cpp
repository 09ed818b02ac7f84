#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cdm/cdm.hpp"

namespace fs = std::filesystem;
using namespace cdm;

namespace {

// Flags shared by the subcommands that build a SweepConfig; set values override the config file.
struct ConfigFlags {
  std::string config;
  std::string grid;
  std::vector<double> fractions;
  std::optional<std::size_t> reps;
  std::optional<double> alpha_deg;
  std::string model;
  std::optional<double> budget;
  std::string solver;
  std::optional<double> mu;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;

  void add_to(CLI::App* app, bool sweep_flags) {
    app->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--grid", grid, "grid as WxH (W columns, H rows)");
    app->add_option("--fraction", fractions, "measurement fraction(s) M/N")->delimiter(',');
    if (sweep_flags) {
      app->add_option("--reps", reps, "repetitions per fraction");
      app->add_option("--threads", threads, "worker threads (0: all cores)");
    }
    app->add_option("--alpha-deg", alpha_deg, "coupling angle in degrees");
    app->add_option("--model", model, "analytic | exact | counts");
    app->add_option("--budget", budget, "photons per mask for the counts model");
    app->add_option("--solver", solver, "tv | pinv");
    app->add_option("--mu", mu, "TV data-fidelity penalty");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--out", out, "output directory")->required();
  }

  SweepConfig resolve() const {
    SweepConfig c = config.empty() ? SweepConfig{} : load_sweep_config(config);
    if (!grid.empty()) {
      const double pitch = c.grid.pitch_mm;
      c.grid = parse_grid(grid);
      c.grid.pitch_mm = pitch;
    }
    if (!fractions.empty()) c.fractions = fractions;
    if (reps) c.repetitions = *reps;
    if (alpha_deg) c.alpha_rad = *alpha_deg * std::numbers::pi / 180.0;
    if (!model.empty()) c.model = parse_model(model);
    if (budget) c.photon_budget = *budget;
    if (!solver.empty()) c.solver.name = solver;
    if (mu) c.solver.tv.mu = *mu;
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    c.out_dir = out;
    c.validate();
    return c;
  }
};

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << j.dump(2) << "\n";
}

int cmd_simulate(const ConfigFlags& f) {
  const auto c = f.resolve();
  fs::create_directories(c.out_dir);
  const double frac = c.fractions.front();
  const auto truth = fix_global_phase(synthesize_truth(c));
  const auto q = masks_for(c, frac, 0);
  const auto rec = simulate(truth, q, c.alpha_rad, c.model, noise_for(c, run_seed(c.seed, frac, 0, SeedRole::cdm_counts)));
  const fs::path dir(c.out_dir);
  write_state((dir / "truth.state").string(), truth);
  write_record((dir / "record.cdm").string(), rec);
  write_json(dir / "config.json", to_json(c));
  std::printf("wrote %zu measurements of a %zu-pixel state to %s\n", rec.rows(), truth.size(), c.out_dir.c_str());
  if (!rec.invalid_rows.empty()) std::printf("%zu rows flagged invalid\n", rec.invalid_rows.size());
  return 0;
}

int cmd_recover(const std::string& record, const std::string& truth_path, const std::string& solver, std::optional<double> mu,
                const std::string& out) {
  const auto rec = read_record(record);
  SolverSpec s;
  if (!solver.empty()) s.name = solver;
  if (s.name != "tv" && s.name != "pinv") throw std::invalid_argument("unknown solver: " + s.name);
  if (mu) s.tv.mu = *mu;
  const auto res = recover(rec, s);
  fs::create_directories(out);
  const fs::path dir(out);
  write_state((dir / "recon.state").string(), res.state);
  auto j = to_json(res.report);
  if (!truth_path.empty()) {
    const double fid = fidelity(res.state, read_state(truth_path));
    j["fidelity"] = fid;
    std::printf("fidelity %.6f\n", fid);
  }
  write_json(dir / "solve_report.json", j);
  std::printf("%s: %zu iterations, objective %.6g, converged %s\n", res.report.method.c_str(), res.report.iterations,
              res.report.objective, res.report.converged ? "yes" : "no");
  return res.report.degenerate ? 3 : 0;
}

int cmd_sweep(const ConfigFlags& f) {
  const auto c = f.resolve();
  const auto r = run_sweep(c);
  std::printf("%-8s %-9s %-9s %-9s %s\n", "fraction", "cdm", "std", "raster", "std");
  for (std::size_t i = 0; i < r.cdm.points.size(); ++i) {
    const auto& p = r.cdm.points[i];
    if (c.raster)
      std::printf("%-8.3f %-9.5f %-9.5f %-9.5f %.5f\n", p.fraction, p.mean, p.stddev, r.raster.points[i].mean, r.raster.points[i].stddev);
    else
      std::printf("%-8.3f %-9.5f %.5f\n", p.fraction, p.mean, p.stddev);
  }
  std::printf("report written to %s\n", (fs::path(c.out_dir) / "report.csv").string().c_str());
  return 0;
}

int cmd_reconstruct(const ConfigFlags& f) {
  const auto c = f.resolve();
  const auto r = run_reconstruction(c);
  std::printf("N=%zu M=%zu fidelity %.6f\n", r.truth.size(), r.record.rows(), r.fidelity);
  if (r.phase_agreement) std::printf("phase agreement %.4f\n", *r.phase_agreement);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressive direct measurement of transverse wavefunctions: simulate, recover, sweep, report"};
  app.require_subcommand(1);

  ConfigFlags sim_flags, sweep_flags, recon_flags;
  auto* sim = app.add_subcommand("simulate", "synthesize a state and write a measurement record");
  sim_flags.add_to(sim, false);

  auto* rec = app.add_subcommand("recover", "recover a state from a measurement record");
  std::string record, truth, solver, rec_out;
  std::optional<double> mu;
  rec->add_option("--record", record, "measurement record file")->required()->check(CLI::ExistingFile);
  rec->add_option("--truth", truth, "reference state for a fidelity readout")->check(CLI::ExistingFile);
  rec->add_option("--solver", solver, "tv | pinv");
  rec->add_option("--mu", mu, "TV data-fidelity penalty");
  rec->add_option("--out", rec_out, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "fidelity versus measurement fraction, CDM and partial raster");
  sweep_flags.add_to(sweep, true);

  auto* report = app.add_subcommand("report", "aggregate run files into report.csv and report.json");
  std::string report_dir;
  report->add_option("--out,dir", report_dir, "results directory")->required();

  auto* recon = app.add_subcommand("reconstruct", "single reconstruction with field dumps for plotting");
  recon_flags.add_to(recon, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(sim_flags);
    if (*rec) return cmd_recover(record, truth, solver, mu, rec_out);
    if (*sweep) return cmd_sweep(sweep_flags);
    if (*report) {
      const auto s = emit_report(report_dir);
      std::printf("%zu rows", s.rows);
      if (!s.skipped_files.empty()) std::printf(", %zu unreadable run files skipped", s.skipped_files.size());
      std::printf("\n");
      return 0;
    }
    if (*recon) return cmd_reconstruct(recon_flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
