#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "cdm/harness.hpp"

namespace cdm {

struct ReconstructionResult {
  StateVector truth;
  StateVector recon;
  MeasurementRecord record;
  SolveReport report;
  double fidelity{0.0};
  std::optional<double> phase_agreement;  // phase-mask states only
};

// Fraction of high-amplitude pixels (|truth| >= amp_threshold * max|truth|) whose
// reconstructed phase is nearer to the truth's mask-on level than to its mask-off
// level exactly when the mask is set.
inline double phase_mask_agreement(const StateVector& recon, const StateVector& truth, const BinaryImage& mask,
                                   double amp_threshold = 0.5) {
  if (!same_shape(recon.grid, truth.grid) || mask.nx != truth.grid.nx || mask.ny != truth.grid.ny)
    throw std::invalid_argument("phase agreement needs matching shapes");
  double amax = 0.0;
  for (const auto& z : truth.amps) amax = std::max(amax, std::abs(z));
  // Align the global phase of the reconstruction to the truth first.
  const cplx overlap = inner(recon.amps, truth.amps);
  const cplx align = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : cplx{1.0, 0.0};
  cplx on{0.0, 0.0}, off{0.0, 0.0};
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (std::abs(truth.amps[j]) < amp_threshold * amax) continue;
    const cplx unit = truth.amps[j] / std::abs(truth.amps[j]);
    (mask.bits[j] ? on : off) += unit;
  }
  std::size_t hits = 0, count = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (std::abs(truth.amps[j]) < amp_threshold * amax) continue;
    const cplx r = recon.amps[j] * align;
    const double d_on = std::abs(std::arg(r * std::conj(on)));
    const double d_off = std::abs(std::arg(r * std::conj(off)));
    const bool predicted = d_on < d_off;
    hits += predicted == (mask.bits[j] != 0);
    ++count;
  }
  return count ? static_cast<double>(hits) / static_cast<double>(count) : 0.0;
}

// ny lines of nx whitespace-separated values (gnuplot "matrix" layout).
inline std::string format_grid_field(const Grid2D& g, const std::vector<double>& v) {
  std::string out;
  char buf[40];
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      std::snprintf(buf, sizeof buf, ix ? " %.10g" : "%.10g", v[g.index(ix, iy)]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace detail {

template <typename Fn>
std::vector<double> field(const StateVector& s, Fn&& fn) {
  std::vector<double> v(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) v[j] = fn(s.amps[j]);
  return v;
}

inline void write_fields(const std::filesystem::path& dir, const std::string& prefix, const StateVector& s) {
  const std::pair<const char*, double (*)(const cplx&)> parts[] = {
      {"amplitude", [](const cplx& z) { return std::abs(z); }},
      {"real", [](const cplx& z) { return z.real(); }},
      {"imag", [](const cplx& z) { return z.imag(); }},
      {"phase", [](const cplx& z) { return std::arg(z); }},
  };
  for (const auto& [name, fn] : parts) {
    std::ofstream os(dir / (prefix + "_" + name + ".txt"));
    os << format_grid_field(s.grid, field(s, fn));
  }
}

inline std::string gnuplot_script(const Grid2D& g) {
  std::string s;
  s += "# gnuplot -p plot.gp\n";
  s += "set terminal pngcairo size 1200,600\nset output 'reconstruction.png'\n";
  s += "set multiplot layout 2,4\nset view map\nunset key\n";
  s += "pitch = " + std::to_string(g.pitch_mm) + "\n";
  for (const char* who : {"truth", "recon"})
    for (const char* part : {"amplitude", "real", "imag", "phase"})
      s += std::string("set title '") + who + " " + part + "'\nplot '" + who + "_" + part +
           ".txt' matrix using ($1*pitch):($2*pitch):3 with image\n";
  s += "unset multiplot\n";
  return s;
}

}  // namespace detail

// Single reconstruction at config.fractions[0] (repetition 0 seeds) with field dumps.
inline ReconstructionResult run_reconstruction(const SweepConfig& config) {
  config.validate();
  const double f = config.fractions.front();
  ReconstructionResult out;
  out.truth = fix_global_phase(synthesize_truth(config));
  const auto q = masks_for(config, f, 0);
  out.record = simulate(out.truth, q, config.alpha_rad, config.model, noise_for(config, run_seed(config.seed, f, 0, SeedRole::cdm_counts)));
  auto res = recover(out.record, config.solver);
  if (res.report.degenerate) throw DegenerateStateError("reconstruction is the zero vector");
  out.recon = std::move(res.state);
  out.report = std::move(res.report);
  out.fidelity = fidelity(out.recon, out.truth);
  std::optional<BinaryImage> mask;
  if (config.state.kind == "phase-mask") {
    mask = read_pbm(config.state.mask_file);
    out.phase_agreement = phase_mask_agreement(out.recon, out.truth, *mask);
  }

  if (!config.out_dir.empty()) {
    const std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);
    write_state((dir / "truth.state").string(), out.truth);
    write_state((dir / "recon.state").string(), out.recon);
    write_record((dir / "record.cdm").string(), out.record);
    detail::write_fields(dir, "truth", out.truth);
    detail::write_fields(dir, "recon", out.recon);
    {
      std::ofstream os(dir / "plot.gp");
      os << detail::gnuplot_script(out.truth.grid);
    }
    {
      std::ofstream os(dir / "config.json");
      os << to_json(config).dump(2) << "\n";
    }
    nlohmann::json j = {{"fidelity", out.fidelity},
                        {"fraction", f},
                        {"measurements", out.record.rows()},
                        {"dimension", out.truth.size()},
                        {"speedup", speedup_estimate(out.truth.size(), out.record.rows())},
                        {"solve_report", to_json(out.report)}};
    if (out.phase_agreement) j["phase_agreement"] = *out.phase_agreement;
    std::ofstream os(dir / "reconstruction.json");
    os << j.dump(2) << "\n";
  }
  return out;
}

}  // namespace cdm
