#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "blochwkb/dispersion.hpp"
#include "blochwkb/envelope.hpp"
#include "blochwkb/ray_coupling.hpp"
#include "blochwkb/reference_oracles.hpp"
#include "blochwkb/validation.hpp"
#include "blochwkb/wkb_assembly.hpp"

namespace blochwkb {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Configuration

struct TimeDomainConfig {
  double h = 0.25;
  Grid3 grid{{256, 1, 1}, Vec3(4 * M_PI, 1.0, 1.0)};
  double t_final = 10.0;
  double dt = 0.0025;
  double sigma = 1.0;
};

struct RunConfig {
  MaterialSpec material = MaterialSpec::identity();
  LatticeCutoff cutoff{1};
  Vec3 theta = Vec3(0.3, 0.0, 0.0);
  std::optional<int> band_index;
  double omega_target = 0.3;
  int kappa = 2;
  double sigma = 4.0;
  VecX weights;
  std::vector<double> h_list{1.0 / 8, 1.0 / 16, 1.0 / 32};
  double horizon = 1.0;  // diffractive time T; physical time T / h
  Grid3 grid = Grid3::cube(48, 70.0);
  BandTolerances band_tol;
  double divisor_tol = 1e-9;
  bool full_seeding = true;
  int t_samples = 9;
  int num_bands = 8;
  double envelope_dT = 1e-3;
  int envelope_snapshots = 4;
  int speed_samples = 1000;
  std::uint64_t seed = 20240611;
  TimeDomainConfig time_domain;
  json source;
};

namespace detail {

inline cplx parse_complex(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw ConfigError("expected a number or an [re, im] pair, got " + j.dump());
}

// Row-major: a list of rows, or a flat list of n*n entries.
template <int n>
Eigen::Matrix<cplx, n, n> parse_matrix(const json& j) {
  Eigen::Matrix<cplx, n, n> m;
  if (j.is_number()) return parse_complex(j) * Eigen::Matrix<cplx, n, n>::Identity();
  if (!j.is_array()) throw ConfigError("expected a matrix, got " + j.dump());
  if (j.size() == static_cast<std::size_t>(n) && j[0].is_array() && j[0].size() == static_cast<std::size_t>(n)) {
    for (int r = 0; r < n; ++r) {
      if (!j[r].is_array() || j[r].size() != static_cast<std::size_t>(n)) throw ConfigError("ragged matrix row");
      for (int c = 0; c < n; ++c) m(r, c) = parse_complex(j[r][c]);
    }
    return m;
  }
  if (j.size() == static_cast<std::size_t>(n * n)) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = parse_complex(j[r * n + c]);
    return m;
  }
  throw ConfigError("matrix must have " + std::to_string(n) + " rows of " + std::to_string(n) + " entries");
}

inline Vec3 parse_vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be a list of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Mode parse_mode(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("lattice mode must be a list of 3 integers");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

inline Vec4 parse_eta(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("eta must be [eta_t, eta_x1, eta_x2, eta_x3]");
  return Vec4(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

inline void parse_coefficients(const json& j, CoefficientMap3& out) {
  for (const auto& e : j) out[parse_mode(e.at("n"))] += parse_matrix<3>(e.at("value"));
}

template <class Term, int n>
void parse_modulations(const json& j, std::vector<Term>& out) {
  for (const auto& e : j) {
    Term t;
    t.eta = parse_eta(e.at("eta"));
    t.n = e.contains("n") ? parse_mode(e.at("n")) : Mode{0, 0, 0};
    t.value = parse_matrix<n>(e.at("value"));
    out.push_back(t);
  }
}

inline MaterialSpec parse_material(const json& j) {
  MaterialSpec m;
  const std::string preset = j.value("preset", "");
  if (preset == "identity") m = MaterialSpec::identity();
  else if (preset == "constant") m = MaterialSpec::constant(j.value("eps", 1.0), j.value("mu", 1.0));
  else if (preset == "layered") m = MaterialSpec::layered(j.value("axis", 0), j.value("mean", 1.0), j.value("amplitude", 0.2));
  else if (!preset.empty()) throw ConfigError("unknown material preset '" + preset + "'");
  if (j.contains("eps0")) {
    m.eps0.clear();
    parse_coefficients(j.at("eps0"), m.eps0);
  }
  if (j.contains("mu0")) {
    m.mu0.clear();
    parse_coefficients(j.at("mu0"), m.mu0);
  }
  if (j.contains("eps1")) parse_modulations<ModulationTerm3, 3>(j.at("eps1"), m.eps1);
  if (j.contains("mu1")) parse_modulations<ModulationTerm3, 3>(j.at("mu1"), m.mu1);
  if (j.contains("M")) parse_modulations<ModulationTerm6, 6>(j.at("M"), m.M);
  if (m.eps0.empty() || m.mu0.empty()) throw ConfigError("material needs eps0 and mu0");
  return m;
}

inline Grid3 parse_grid(const json& j) {
  Grid3 g;
  const auto& pts = j.at("points");
  const auto& len = j.at("length");
  for (int a = 0; a < 3; ++a) {
    g.M[a] = pts.is_array() ? pts.at(a).get<int>() : pts.get<int>();
    g.L(a) = len.is_array() ? len.at(a).get<double>() : len.get<double>();
    if (g.M[a] < 1 || g.L(a) <= 0) throw ConfigError("grid points and lengths must be positive");
  }
  return g;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  RunConfig c;
  c.source = j;
  try {
    if (j.contains("material")) c.material = detail::parse_material(j.at("material"));
    c.material.validate();
    c.cutoff.N = j.value("cutoff", c.cutoff.N);
    if (j.contains("theta")) c.theta = detail::parse_vec3(j.at("theta"), "theta");
    if (j.contains("band")) {
      const auto& b = j.at("band");
      if (b.contains("index")) c.band_index = b.at("index").get<int>();
      c.omega_target = b.value("omega", c.omega_target);
      c.kappa = b.value("kappa", c.kappa);
    }
    if (j.contains("packet")) {
      const auto& p = j.at("packet");
      const std::string family = p.value("family", "gaussian");
      if (family != "gaussian") throw ConfigError("only the gaussian packet family is supported");
      c.sigma = p.value("sigma", c.sigma);
      if (p.contains("weights")) {
        const auto& w = p.at("weights");
        c.weights.resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) c.weights(i) = detail::parse_complex(w[i]);
      }
    }
    if (j.contains("h_list")) c.h_list = j.at("h_list").get<std::vector<double>>();
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("grid")) c.grid = detail::parse_grid(j.at("grid"));
    if (j.contains("tolerances")) {
      const auto& t = j.at("tolerances");
      c.band_tol.cluster_tol = t.value("cluster", c.band_tol.cluster_tol);
      c.band_tol.gap_tol = t.value("gap", c.band_tol.gap_tol);
      c.divisor_tol = t.value("divisor", c.divisor_tol);
    }
    const std::string seeding = j.value("seeding", "full");
    if (seeding != "full" && seeding != "w0") throw ConfigError("seeding must be 'full' or 'w0'");
    c.full_seeding = seeding == "full";
    c.t_samples = j.value("t_samples", c.t_samples);
    c.num_bands = j.value("num_bands", c.num_bands);
    if (j.contains("envelope")) {
      c.envelope_dT = j.at("envelope").value("dT", c.envelope_dT);
      c.envelope_snapshots = j.at("envelope").value("snapshots", c.envelope_snapshots);
    }
    c.speed_samples = j.value("speed_samples", c.speed_samples);
    c.seed = j.value("seed", c.seed);
    if (j.contains("time_domain")) {
      const auto& t = j.at("time_domain");
      c.time_domain.h = t.value("h", c.time_domain.h);
      if (t.contains("grid")) c.time_domain.grid = detail::parse_grid(t.at("grid"));
      c.time_domain.t_final = t.value("t_final", c.time_domain.t_final);
      c.time_domain.dt = t.value("dt", c.time_domain.dt);
      c.time_domain.sigma = t.value("sigma", c.time_domain.sigma);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.theta.norm() == 0) throw ConfigError("theta must be nonzero");
  if (c.cutoff.N < 0) throw ConfigError("cutoff must be nonnegative");
  if (c.h_list.empty()) throw ConfigError("h_list must not be empty");
  for (std::size_t i = 0; i < c.h_list.size(); ++i) {
    if (c.h_list[i] <= 0 || c.h_list[i] >= 1) throw ConfigError("every h must lie in (0, 1)");
    if (i > 0 && c.h_list[i] >= c.h_list[i - 1]) throw ConfigError("h_list must be strictly decreasing");
  }
  if (c.band_tol.cluster_tol <= 0 || c.band_tol.gap_tol <= 0 || c.divisor_tol <= 0)
    throw ConfigError("tolerances must be positive");
  if (c.sigma <= 0 || c.horizon < 0 || c.t_samples < 1 || c.envelope_dT <= 0 || c.envelope_snapshots < 1)
    throw ConfigError("packet width, horizon, sampling and step sizes must be positive");
  if (c.kappa < 1) throw ConfigError("kappa must be at least 1");
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Output

// 64-bit FNV-1a
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(c.source.dump())); }

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << std::setprecision(17);
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
  }
  template <class... T>
  void row(const T&... v) {
    bool first = true;
    ((out_ << (first ? "" : ",") << v, first = false), ...);
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

inline constexpr char kFieldMagic[16] = {'B', 'L', 'O', 'C', 'H', 'W', 'K', 'B', '-', 'F', 'I', 'E', 'L', 'D', 0, 0};
inline constexpr std::uint32_t kFieldVersion = 1;

struct FieldDump {
  Grid3 grid;
  json metadata;
  MatX values;  // grid.size() x components
};

namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  if (!is) throw std::runtime_error("truncated field dump");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}
}  // namespace detail

// magic[16], u32 version, u32 dims[3], u32 components, f64 lengths[3],
// u32 metadata bytes, metadata JSON, complex64 payload (point-major).
inline void write_field_dump(const std::filesystem::path& path, const FieldDump& d) {
  require(d.values.rows() == d.grid.size(), "write_field_dump: value rows differ from grid size");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kFieldMagic, 16);
  detail::put_le<std::uint32_t>(os, kFieldVersion);
  for (int a = 0; a < 3; ++a) detail::put_le<std::uint32_t>(os, d.grid.M[a]);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d.values.cols()));
  for (int a = 0; a < 3; ++a) detail::put_le<double>(os, d.grid.L(a));
  const std::string meta = d.metadata.dump();
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  for (Eigen::Index p = 0; p < d.values.rows(); ++p)
    for (Eigen::Index c = 0; c < d.values.cols(); ++c) {
      detail::put_le<float>(os, static_cast<float>(d.values(p, c).real()));
      detail::put_le<float>(os, static_cast<float>(d.values(p, c).imag()));
    }
}

inline FieldDump read_field_dump(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  char magic[16];
  is.read(magic, 16);
  if (!is || std::memcmp(magic, kFieldMagic, 16) != 0) throw std::runtime_error("not a field dump");
  if (detail::get_le<std::uint32_t>(is) != kFieldVersion) throw std::runtime_error("unsupported dump version");
  FieldDump d;
  for (int a = 0; a < 3; ++a) d.grid.M[a] = static_cast<int>(detail::get_le<std::uint32_t>(is));
  const auto comps = detail::get_le<std::uint32_t>(is);
  for (int a = 0; a < 3; ++a) d.grid.L(a) = detail::get_le<double>(is);
  std::string meta(detail::get_le<std::uint32_t>(is), '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta.size()));
  d.metadata = json::parse(meta);
  d.values.resize(d.grid.size(), comps);
  for (int p = 0; p < d.grid.size(); ++p)
    for (std::uint32_t c = 0; c < comps; ++c) {
      const float re = detail::get_le<float>(is);
      const float im = detail::get_le<float>(is);
      d.values(p, c) = cplx(re, im);
    }
  return d;
}

class RunOutput {
 public:
  RunOutput(std::filesystem::path dir, std::string command, const RunConfig& config)
      : dir_(std::move(dir)), command_(std::move(command)), config_(config) {
    std::filesystem::create_directories(dir_);
  }
  std::filesystem::path file(const std::string& name) {
    files_.push_back(name);
    return dir_ / name;
  }
  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write_manifest() const {
    json m;
    m["command"] = command_;
    m["config_hash"] = config_hash(config_);
    m["config"] = config_.source;
    m["tolerances"] = {{"cluster", config_.band_tol.cluster_tol},
                       {"gap", config_.band_tol.gap_tol},
                       {"divisor", config_.divisor_tol},
                       {"scalar", scalar_tol}};
    m["versions"] = {{"blochwkb", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"fftw", std::string(fftw_version)}};
    m["outputs"] = files_;
    if (!extra_.empty()) m["notes"] = extra_;
    std::ofstream(dir_ / "manifest.json") << m.dump(2) << "\n";
  }

 private:
  std::filesystem::path dir_;
  std::string command_;
  const RunConfig& config_;
  std::vector<std::string> files_;
  json extra_ = json::object();
};

// ---------------------------------------------------------------------------
// Commands

inline BlochBand selected_band(const RunConfig& c) {
  if (c.band_index) return band_by_index(c.material, c.cutoff, c.theta, *c.band_index, c.band_tol);
  return band_near(c.material, c.cutoff, c.theta, c.omega_target, c.kappa, c.band_tol);
}

inline VecX packet_weights(const RunConfig& c, int kappa) {
  if (c.weights.size() == 0) {
    VecX w = VecX::Zero(kappa);
    w(0) = 1.0;
    return w;
  }
  if (c.weights.size() != kappa)
    throw ConfigError("packet weights have " + std::to_string(c.weights.size()) + " entries, band has kappa = " +
                      std::to_string(kappa));
  return c.weights;
}

struct Pipeline {
  BlochBand band;
  ProjectorPair pp;
  DispersionData disp;
  CouplingField gamma;
  RayAverageData ray;
};

inline Pipeline run_pipeline(const RunConfig& c) {
  BlochBand band = selected_band(c);
  ProjectorPair pp = build_projectors(band, c.material, c.cutoff);
  DispersionData disp = hessian(band, pp, c.material, c.cutoff);
  CouplingField gamma = build_gamma(band, pp, c.material, c.cutoff);
  RayAverageData ray = ray_average(gamma, disp.V, c.divisor_tol);
  return {std::move(band), std::move(pp), std::move(disp), std::move(gamma), std::move(ray)};
}

inline void write_dispersion(RunOutput& out, const DispersionData& d, const BlochBand& band) {
  CsvWriter w(out.file("dispersion.csv"), {"quantity", "i", "j", "value"});
  w.row("omega", 0, 0, band.omega);
  w.row("kappa", 0, 0, band.kappa);
  for (int i = 0; i < 3; ++i) w.row("V", i, 0, d.V(i));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w.row("H", i, j, d.hessian(i, j));
  w.row("scalar_residual", 0, 0, d.scalar_residual);
  w.row("first_order_residual", 0, 0, d.first_order_residual);
}

// bands.csv: theta, band index, omega, kappa, eigen-residual, trusted
inline void cmd_bands(const RunConfig& c, const std::filesystem::path& dir) {
  RunOutput out(dir, "bands", c);
  std::vector<std::string> notes;
  const auto bands = solve_bands(c.material, c.cutoff, c.theta, c.num_bands, c.band_tol, &notes);
  {
    CsvWriter w(out.file("bands.csv"),
                {"theta1", "theta2", "theta3", "band_index", "omega", "kappa", "residual", "trusted"});
    for (const auto& b : bands)
      w.row(b.theta(0), b.theta(1), b.theta(2), b.band_index, b.omega, b.kappa, b.residual(), b.trusted ? 1 : 0);
  }
  const Pipeline p = run_pipeline(c);
  write_dispersion(out, p.disp, p.band);
  if (!notes.empty()) out.note("bands", notes);
  out.write_manifest();
}

// dispersion.csv plus speed_limit.csv: margin statistics of xi.V <= tau_max(-xi)
inline void cmd_dispersion(const RunConfig& c, const std::filesystem::path& dir) {
  RunOutput out(dir, "dispersion", c);
  const BlochBand band = selected_band(c);
  const ProjectorPair pp = build_projectors(band, c.material, c.cutoff);
  const DispersionData d = hessian(band, pp, c.material, c.cutoff);
  write_dispersion(out, d, band);
  const SpeedLimitReport s = speed_limit_check(c.material, c.cutoff, d.V, c.speed_samples, 1e-9, c.seed);
  CsvWriter w(out.file("speed_limit.csv"), {"samples", "worst_margin", "xi1", "xi2", "xi3"});
  w.row(s.samples, s.worst_margin, s.worst_xi(0), s.worst_xi(1), s.worst_xi(2));
  out.write_manifest();
}

// gamma.csv: one row per (eta, a, b) entry with the partition label; beta.csv
inline void cmd_gamma(const RunConfig& c, const std::filesystem::path& dir) {
  RunOutput out(dir, "gamma", c);
  const Pipeline p = run_pipeline(c);
  {
    CsvWriter w(out.file("gamma.csv"),
                {"eta_t", "eta_x1", "eta_x2", "eta_x3", "a", "b", "re", "im", "divisor", "resonant"});
    for (const auto& m : p.gamma.modes) {
      const double d = divisor(m.eta, p.disp.V);
      for (int a = 0; a < p.gamma.kappa; ++a)
        for (int b = 0; b < p.gamma.kappa; ++b)
          w.row(m.eta(0), m.eta(1), m.eta(2), m.eta(3), a, b, m.a(a, b).real(), m.a(a, b).imag(), d,
                std::abs(d) < c.divisor_tol ? 1 : 0);
    }
  }
  const BetaFit fit = empirical_beta(p.gamma, p.disp.V, {1, 2, 4, 8, 16, 32, 64}, c.divisor_tol);
  {
    CsvWriter w(out.file("beta.csv"), {"T", "g_sup"});
    for (std::size_t i = 0; i < fit.horizons.size(); ++i) w.row(fit.horizons[i], fit.g_sup[i]);
  }
  out.note("beta", fit.beta ? json(*fit.beta) : json(nullptr));
  if (!fit.diagnostic.empty()) out.note("beta_diagnostic", fit.diagnostic);
  if (!p.ray.warnings.empty()) out.note("ray_average", p.ray.warnings);
  out.write_manifest();
}

inline std::vector<double> envelope_times(const RunConfig& c) {
  std::vector<double> T;
  for (int k = 1; k <= c.envelope_snapshots; ++k) T.push_back(c.horizon * k / c.envelope_snapshots);
  return T;
}

// envelope_trace.csv: T, weighted norm, relative drift, mass outside the inner half
inline void cmd_envelope(const RunConfig& c, const std::filesystem::path& dir) {
  RunOutput out(dir, "envelope", c);
  const Pipeline p = run_pipeline(c);
  const EnvelopeState init = gaussian_state(c.grid, c.sigma, packet_weights(c, p.band.kappa));
  const EnvelopeSolution sol(init, p.disp.hessian, p.ray.gamma_tilde, c.envelope_dT, envelope_times(c));
  const double n0 = weighted_norm(init, p.pp.pia0pi());
  CsvWriter w(out.file("envelope_trace.csv"), {"T", "weighted_norm", "relative_drift", "outside_inner_half"});
  w.row(0.0, n0, 0.0, mass_fractions(init).outside_inner_half);
  for (double T : envelope_times(c)) {
    const EnvelopeState s = sol.state(T);
    const double n = weighted_norm(s, p.pp.pia0pi());
    w.row(T, n, std::abs(n / n0 - 1), mass_fractions(s).outside_inner_half);
    std::ostringstream name;
    name << "envelope_T" << std::fixed << std::setprecision(4) << T << ".bin";
    write_field_dump(out.file(name.str()), {s.grid, {{"T", T}, {"kind", "envelope"}, {"kappa", p.band.kappa}}, s.values});
  }
  out.note("envelope_path", sol.exact() ? "exact spectral" : "Strang splitting");
  out.write_manifest();
}

inline std::shared_ptr<const EnvelopeSolution> envelope_for(const RunConfig& c, const Pipeline& p,
                                                            std::vector<double> extra_times = {}) {
  auto times = envelope_times(c);
  times.insert(times.end(), extra_times.begin(), extra_times.end());
  return std::make_shared<EnvelopeSolution>(gaussian_state(c.grid, c.sigma, packet_weights(c, p.band.kappa)),
                                            p.disp.hessian, p.ray.gamma_tilde, c.envelope_dT, times);
}

// residual.csv: order k = -1..5, norm, norm / scale; field dumps per h of harmonic fields at t = 0
inline void cmd_wkb(const RunConfig& c, const std::filesystem::path& dir) {
  RunOutput out(dir, "wkb", c);
  const Pipeline p = run_pipeline(c);
  const double T_sample = c.horizon / c.envelope_snapshots;
  const auto env = envelope_for(c, p);
  const ProfileSet P = build_profiles(p.band, p.pp, p.disp, p.ray, env, {});
  const ResidualReport r =
      residual(P, default_residual_samples(p.disp.V, T_sample, 1.0, Vec3::Constant(c.sigma)));
  {
    CsvWriter w(out.file("residual.csv"), {"order", "norm", "relative"});
    for (int k = -1; k <= 5; ++k) w.row(k, r.order(k), r.order(k) / r.scale);
  }
  for (double h : c.h_list) {
    const HarmonicFields hf = harmonic_fields(P, h, 0.0);
    for (std::size_t k = 0; k < hf.modes.size(); ++k) {
      const Mode& n = hf.modes[k];
      std::ostringstream name;
      name << "wkb_h" << std::setprecision(6) << h << "_n" << n[0] << "_" << n[1] << "_" << n[2] << ".bin";
      write_field_dump(out.file(name.str()),
                       {hf.grid,
                        {{"h", h},
                         {"t", 0.0},
                         {"harmonic", {n[0], n[1], n[2]}},
                         {"omega", p.band.omega},
                         {"theta", {c.theta(0), c.theta(1), c.theta(2)}},
                         {"frame", "moving, phase exp(i(omega t + (theta + n).x)/h) removed"}},
                        hf.fields[k]});
    }
  }
  out.note("residual_scale", r.scale);
  out.write_manifest();
}

inline ConvergenceCase convergence_case(const RunConfig& c) {
  ConvergenceCase k;
  k.spec = c.material;
  k.cutoff = c.cutoff;
  k.theta = c.theta;
  k.omega_target = c.omega_target;
  k.kappa = c.kappa;
  k.band_index = c.band_index;
  k.band_tol = c.band_tol;
  k.divisor_tol = c.divisor_tol;
  k.sigma = c.sigma;
  k.weights = c.weights;
  k.grid = c.grid;
  k.T_final = c.horizon;
  k.h_list = c.h_list;
  k.t_samples = c.t_samples;
  k.full_seeding = c.full_seeding;
  return k;
}

// convergence.csv: h, alpha label, error, w0-only error; summary.csv: fitted slopes
inline ConvergenceReport cmd_validate(const RunConfig& c, const std::filesystem::path& dir) {
  RunOutput out(dir, "validate", c);
  const ConvergenceReport rep = convergence_study(convergence_case(c));
  out.note("oracle", rep.oracle);
  if (rep.rows.empty()) {
    CsvWriter w(out.file("residual_certificate.csv"), {"order", "norm", "relative"});
    for (int k = -1; k <= 5; ++k) w.row(k, rep.certificate.order(k), rep.certificate.order(k) / rep.certificate.scale);
    out.write_manifest();
    return rep;
  }
  {
    CsvWriter w(out.file("convergence.csv"), {"h", "alpha", "order", "error", "w0_only_error"});
    for (const auto& row : rep.rows)
      for (std::size_t i = 0; i < rep.weights.size(); ++i)
        w.row(row.h, rep.weights[i].label(), rep.weights[i].order(), row.errors[i], row.ablated[i]);
  }
  {
    CsvWriter w(out.file("summary.csv"), {"quantity", "value"});
    w.row("slope_alpha0", rep.slope);
    w.row("slope_weighted", rep.weighted_slope);
    w.row("min_ablation_ratio", rep.min_ablation_ratio);
  }
  out.note("t_sampling", "sup over " + std::to_string(c.t_samples) + " equispaced times in [0, T/h]");
  out.write_manifest();
  return rep;
}

// energy.csv: t, energy, div(eps E), div(mu B); final field dump
inline TimeDomainResult cmd_oracle(const RunConfig& c, const std::filesystem::path& dir) {
  RunOutput out(dir, "oracle", c);
  const TimeDomainConfig& td = c.time_domain;
  const Grid3& g = td.grid;
  // Transverse Gaussian pulse E2, B3 along x1; divergence free for x1-layered media.
  MatX u = MatX::Zero(g.size(), 6);
  for (int p = 0; p < g.size(); ++p) {
    const Vec3 x = g.point(p);
    const double f = std::exp(-x.squaredNorm() / (2 * td.sigma * td.sigma));
    u(p, 1) = f;
    u(p, 5) = f;
  }
  const TimeDomainResult r = time_domain_solve(c.material, td.h, u, td.t_final, g, td.dt);
  {
    CsvWriter w(out.file("energy.csv"), {"t", "energy", "div_eps_e", "div_mu_b"});
    for (const auto& e : r.trace) w.row(e.t, e.energy, e.div_e, e.div_b);
  }
  write_field_dump(out.file("oracle_final.bin"), {g, {{"t", td.t_final}, {"h", td.h}, {"kind", "time-domain"}}, r.field});
  out.note("gronwall_rate", r.gronwall_rate);
  out.write_manifest();
  return r;
}

// 0 success, 2 invalid configuration, 3 hypothesis violation, 4 numerical failure
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  if (dynamic_cast<const HypothesisViolation*>(&e)) return 3;
  if (dynamic_cast<const NumericalFailure*>(&e)) return 4;
  return 1;
}

}  // namespace blochwkb
