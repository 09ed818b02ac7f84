#pragma once

// On-disk formats. Every file is one line of UTF-8 JSON (the manifest), a '\n',
// then a little-endian binary payload whose byte counts are given in the manifest.
//
//   state  (format "cdm-state"):  2N float64, interleaved (re, im), row-major.
//   record (format "cdm-record"): M bit-packed mask rows of ceil(N/8) bytes
//                                 (column j -> byte j/8, bit j%8, zero padded),
//                                 then phi as 2M float64 interleaved (re, im).

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdm/errors.hpp"
#include "cdm/recovery.hpp"
#include "cdm/state.hpp"
#include "cdm/weak_sim.hpp"

namespace cdm {

inline constexpr int kFormatVersion = 1;

namespace detail {

inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

inline double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= std::uint64_t{static_cast<unsigned char>(in[pos + b])} << (8 * b);
  return std::bit_cast<double>(bits);
}

inline nlohmann::json grid_json(const Grid2D& g) { return {{"nx", g.nx}, {"ny", g.ny}, {"pitch_mm", g.pitch_mm}}; }

inline Grid2D grid_from_json(const nlohmann::json& j) {
  Grid2D g{j.at("nx").get<std::size_t>(), j.at("ny").get<std::size_t>(), j.value("pitch_mm", 1.0)};
  g.validate();
  return g;
}

inline std::string read_all(std::istream& is) {
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Split {
  nlohmann::json manifest;
  std::string payload;
};

inline Split split_file(const std::string& raw, const char* expected_format) {
  const auto nl = raw.find('\n');
  if (nl == std::string::npos) throw FormatError("missing manifest line");
  Split s;
  try {
    s.manifest = nlohmann::json::parse(raw.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
  if (s.manifest.value("format", std::string{}) != expected_format)
    throw FormatError(std::string("expected a ") + expected_format + " file");
  if (s.manifest.value("version", 0) != kFormatVersion) throw FormatError("unsupported format version");
  s.payload = raw.substr(nl + 1);
  return s;
}

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_all(is);
}

inline void dump(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

inline std::string encode_state(const StateVector& s) {
  nlohmann::json m = {{"format", "cdm-state"},       {"version", kFormatVersion}, {"nx", s.grid.nx},
                      {"ny", s.grid.ny},             {"pitch_mm", s.grid.pitch_mm}, {"normalized", s.normalized},
                      {"payload_bytes", 16 * s.size()}};
  std::string out = m.dump() + "\n";
  out.reserve(out.size() + 16 * s.size());
  for (const auto& z : s.amps) {
    detail::put_f64(out, z.real());
    detail::put_f64(out, z.imag());
  }
  return out;
}

inline StateVector decode_state(const std::string& raw) {
  auto [m, payload] = detail::split_file(raw, "cdm-state");
  Grid2D g;
  try {
    g = Grid2D{m.at("nx").get<std::size_t>(), m.at("ny").get<std::size_t>(), m.value("pitch_mm", 1.0)};
    g.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad state manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad state manifest: ") + e.what());
  }
  if (payload.size() != 16 * g.size()) throw FormatError("state payload size does not match grid");
  std::vector<cplx> amps(g.size());
  for (std::size_t j = 0; j < amps.size(); ++j) amps[j] = {detail::get_f64(payload, 16 * j), detail::get_f64(payload, 16 * j + 8)};
  return StateVector(g, std::move(amps), m.value("normalized", false));
}

inline void write_state(const std::string& path, const StateVector& s) { detail::dump(path, encode_state(s)); }
inline StateVector read_state(const std::string& path) { return decode_state(detail::slurp(path)); }

inline std::string encode_record(const MeasurementRecord& r) {
  const std::size_t rows = r.matrix.rows(), n = r.matrix.cols(), row_bytes = r.matrix.packed_row_bytes();
  nlohmann::json m = {{"format", "cdm-record"},
                      {"version", kFormatVersion},
                      {"grid", detail::grid_json(r.grid)},
                      {"M", rows},
                      {"N", n},
                      {"alpha_rad", r.alpha},
                      {"phi0", r.phi0},
                      {"kappa", r.kappa},
                      {"density", r.matrix.density()},
                      {"seed", r.matrix.seed()},
                      {"model", to_string(r.model)},
                      {"noise_meta", nullptr},
                      {"invalid_rows", r.invalid_rows},
                      {"mask_bytes", rows * row_bytes},
                      {"phi_bytes", 16 * rows}};
  if (r.noise) m["noise_meta"] = {{"budget", r.noise->budget}, {"seed", r.noise->seed}};
  std::string out = m.dump() + "\n";
  for (std::size_t row = 0; row < rows; ++row) {
    const auto bytes = r.matrix.row_bytes(row);
    out.append(reinterpret_cast<const char*>(bytes.data()), row_bytes);
  }
  for (const auto& z : r.phi) {
    detail::put_f64(out, z.real());
    detail::put_f64(out, z.imag());
  }
  return out;
}

inline MeasurementRecord decode_record(const std::string& raw) {
  auto [m, payload] = detail::split_file(raw, "cdm-record");
  MeasurementRecord r;
  std::size_t rows = 0, n = 0;
  try {
    r.grid = detail::grid_from_json(m.at("grid"));
    rows = m.at("M").get<std::size_t>();
    n = m.at("N").get<std::size_t>();
    r.alpha = m.at("alpha_rad").get<double>();
    r.phi0 = m.at("phi0").get<double>();
    r.kappa = m.at("kappa").get<double>();
    r.model = parse_model(m.at("model").get<std::string>());
    if (!m.at("noise_meta").is_null())
      r.noise = NoiseMeta{m["noise_meta"].at("budget").get<double>(), m["noise_meta"].at("seed").get<std::uint64_t>()};
    r.invalid_rows = m.value("invalid_rows", std::vector<std::size_t>{});
    r.matrix = SensingMatrix(rows, n);
    r.matrix.set_provenance(m.value("density", 0.0), m.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad record manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad record manifest: ") + e.what());
  }
  if (n != r.grid.size()) throw FormatError("record N does not match grid");
  const std::size_t row_bytes = r.matrix.packed_row_bytes();
  if (payload.size() != rows * row_bytes + 16 * rows) throw FormatError("record payload size mismatch");
  for (std::size_t row = 0; row < rows; ++row) {
    auto dst = r.matrix.row_bytes(row);
    for (std::size_t b = 0; b < row_bytes; ++b) dst[b] = static_cast<std::uint8_t>(payload[row * row_bytes + b]);
    if (n % 8 != 0 && (dst[row_bytes - 1] >> (n % 8)) != 0) throw FormatError("nonzero padding bits in mask row");
  }
  const std::size_t base = rows * row_bytes;
  r.phi.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) r.phi[i] = {detail::get_f64(payload, base + 16 * i), detail::get_f64(payload, base + 16 * i + 8)};
  for (auto i : r.invalid_rows)
    if (i >= rows) throw FormatError("invalid row index out of range");
  return r;
}

inline void write_record(const std::string& path, const MeasurementRecord& r) { detail::dump(path, encode_record(r)); }
inline MeasurementRecord read_record(const std::string& path) { return decode_record(detail::slurp(path)); }

inline nlohmann::json to_json(const SolveReport& r) {
  return {{"method", r.method},         {"iterations", r.iterations}, {"cg_iterations", r.cg_iterations},
          {"objective", r.objective},   {"residual", r.residual},     {"mu", r.mu}, {"beta_max", r.beta_max},
          {"converged", r.converged},   {"degenerate", r.degenerate}, {"phase_fixed", r.phase_fixed},
          {"objective_trace", r.trace}};
}

}  // namespace cdm
