#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "blochwkb/blochwkb.hpp"
#include "test_helpers.hpp"

using namespace blochwkb;
namespace fs = std::filesystem;

namespace {

json base_config() {
  std::ifstream in(fs::path(BLOCHWKB_SOURCE_DIR) / "configs" / "identity.json");
  return json::parse(in);
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("blochwkb_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(CliConfig, ShippedConfigsParse) {
  for (const auto& e : fs::directory_iterator(fs::path(BLOCHWKB_SOURCE_DIR) / "configs")) {
    SCOPED_TRACE(e.path().string());
    EXPECT_NO_THROW(load_config(e.path()));
  }
  const RunConfig c = load_config(fs::path(BLOCHWKB_SOURCE_DIR) / "configs" / "identity.json");
  EXPECT_EQ(c.cutoff.N, 1);
  EXPECT_DOUBLE_EQ(c.theta(0), 0.3);
  EXPECT_EQ(c.kappa, 2);
  ASSERT_EQ(c.h_list.size(), 3u);
  EXPECT_DOUBLE_EQ(c.h_list[2], 0.03125);
  EXPECT_EQ(c.grid.M[1], 32);
  EXPECT_DOUBLE_EQ(c.grid.L(2), 70.0);
  EXPECT_EQ(c.time_domain.grid.M[0], 256);
  EXPECT_EQ(c.weights.size(), 2);
}

TEST(CliConfig, RejectsInvalidValues) {
  auto expect_bad = [](json j) { EXPECT_THROW(parse_config(j), ConfigError) << j.dump(); };
  json j = base_config();
  j["theta"] = {0, 0, 0};
  expect_bad(j);
  j = base_config();
  j["h_list"] = {0.1, 0.1};
  expect_bad(j);
  j = base_config();
  j["h_list"] = {0.05, 0.1};
  expect_bad(j);
  j = base_config();
  j["h_list"] = {1.0, 0.5};
  expect_bad(j);
  j = base_config();
  j["h_list"] = json::array();
  expect_bad(j);
  j = base_config();
  j["tolerances"]["gap"] = -1e-6;
  expect_bad(j);
  j = base_config();
  j["tolerances"]["divisor"] = 0.0;
  expect_bad(j);
  j = base_config();
  j["seeding"] = "partial";
  expect_bad(j);
  j = base_config();
  j["material"] = {{"preset", "crystal"}};
  expect_bad(j);
  j = base_config();
  j["material"] = {{"eps0", {{{"n", {0, 0, 0}}, {"value", {1, 2}}}}}};
  expect_bad(j);
  j = base_config();
  j["packet"]["family"] = "airy";
  expect_bad(j);
  j = base_config();
  j["packet"]["sigma"] = 0.0;
  expect_bad(j);
  j = base_config();
  j["theta"] = "north";
  expect_bad(j);
}

TEST(CliConfig, LoadErrors) {
  EXPECT_THROW(load_config("/nonexistent/blochwkb.json"), ConfigError);
  const fs::path d = temp_dir("bad_json");
  std::ofstream(d / "bad.json") << "{\"cutoff\": 1,";
  EXPECT_THROW(load_config(d / "bad.json"), ConfigError);
}

TEST(CliConfig, ComplexAndMatrixForms) {
  EXPECT_EQ(detail::parse_complex(json(2.5)), cplx(2.5, 0));
  EXPECT_EQ(detail::parse_complex(json::array({1.0, -3.0})), cplx(1, -3));
  EXPECT_THROW(detail::parse_complex(json("x")), ConfigError);

  const Mat3c s = detail::parse_matrix<3>(json(2.0));
  EXPECT_EQ(s, (cplx(2.0) * Mat3c::Identity()).eval());
  const json rows = json::array({json::array({1, 2, 3}), json::array({4, 5, 6}), json::array({7, 8, json::array({0, 9})})});
  const json flat = json::array({1, 2, 3, 4, 5, 6, 7, 8, json::array({0, 9})});
  const Mat3c a = detail::parse_matrix<3>(rows);
  const Mat3c b = detail::parse_matrix<3>(flat);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a(0, 1), cplx(2, 0));
  EXPECT_EQ(a(1, 0), cplx(4, 0));
  EXPECT_EQ(a(2, 2), cplx(0, 9));
  EXPECT_THROW(detail::parse_matrix<3>(json::array({1, 2, 3, 4})), ConfigError);
  EXPECT_THROW(detail::parse_matrix<3>(json::array({json::array({1, 2, 3}), json::array({4, 5}), json::array({7, 8, 9})})),
               ConfigError);
}

TEST(CliConfig, MaterialCoefficientLists) {
  json j = base_config();
  j["material"] = {{"eps0", {{{"n", {0, 0, 0}}, {"value", 2.0}}, {{"n", {1, 0, 0}}, {"value", 0.1}},
                             {{"n", {-1, 0, 0}}, {"value", 0.1}}}},
                   {"mu0", {{{"n", {0, 0, 0}}, {"value", 1.0}}}}};
  const RunConfig c = parse_config(j);
  ASSERT_EQ(c.material.eps0.size(), 3u);
  EXPECT_EQ(c.material.eps0.at(Mode{1, 0, 0})(1, 1), cplx(0.1, 0));
  EXPECT_EQ(c.material.eps0.at(Mode{0, 0, 0})(2, 2), cplx(2.0, 0));
  EXPECT_TRUE(c.material.purely_periodic());

  const RunConfig m = load_config(fs::path(BLOCHWKB_SOURCE_DIR) / "configs" / "modulated.json");
  EXPECT_FALSE(m.material.purely_periodic());
  EXPECT_EQ(m.material.eps1.size(), 2u);
  EXPECT_EQ(m.material.M.size(), 1u);
}

TEST(CliHash, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xcbf29ce484222325ULL), "cbf29ce484222325");
  const RunConfig a = parse_config(base_config());
  const RunConfig b = parse_config(base_config());
  EXPECT_EQ(config_hash(a), config_hash(b));
  json j = base_config();
  j["seed"] = 1;
  EXPECT_NE(config_hash(a), config_hash(parse_config(j)));
}

TEST(CliFieldDump, RoundTrip) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  const Grid3 g{{4, 3, 2}, Vec3(1.5, 2.0, 3.0)};
  FieldDump d{g, {{"kind", "test"}, {"h", 0.125}}, MatX(g.size(), 6)};
  for (int p = 0; p < g.size(); ++p)
    for (int c = 0; c < 6; ++c) d.values(p, c) = cplx(nd(rng), nd(rng));
  const fs::path dir = temp_dir("dump");
  write_field_dump(dir / "f.bin", d);
  const FieldDump r = read_field_dump(dir / "f.bin");
  EXPECT_EQ(r.grid.M, g.M);
  EXPECT_EQ(r.grid.L, g.L);
  EXPECT_EQ(r.metadata, d.metadata);
  ASSERT_EQ(r.values.rows(), d.values.rows());
  ASSERT_EQ(r.values.cols(), 6);
  EXPECT_LE((r.values - d.values).cwiseAbs().maxCoeff(), 1e-6 * d.values.cwiseAbs().maxCoeff());

  std::ofstream(dir / "junk.bin", std::ios::binary) << "not a field dump at all";
  EXPECT_THROW(read_field_dump(dir / "junk.bin"), std::runtime_error);
  FieldDump bad{g, {}, MatX(3, 6)};
  EXPECT_THROW(write_field_dump(dir / "bad.bin", bad), std::invalid_argument);
}

TEST(CliExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), 2);
  EXPECT_EQ(exit_code_for(std::invalid_argument("x")), 2);
  EXPECT_EQ(exit_code_for(GapViolation("x", Vec3(0.1, 0, 0))), 3);
  EXPECT_EQ(exit_code_for(MultiplicityInconsistent("x")), 3);
  EXPECT_EQ(exit_code_for(SpeedLimitViolation("x")), 3);
  EXPECT_EQ(exit_code_for(StabilityAnomaly("x")), 4);
  EXPECT_EQ(exit_code_for(GaugeError("x")), 4);
  EXPECT_EQ(exit_code_for(BoxTooSmall("x")), 4);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 1);
}

TEST(CliCommands, BandsWritesManifestAndIsDeterministic) {
  const RunConfig c = parse_config(base_config());
  const fs::path a = temp_dir("bands_a"), b = temp_dir("bands_b");
  cmd_bands(c, a);
  cmd_bands(c, b);
  for (const char* f : {"bands.csv", "dispersion.csv", "manifest.json"}) {
    SCOPED_TRACE(f);
    ASSERT_TRUE(fs::exists(a / f));
    EXPECT_EQ(slurp(a / f), slurp(b / f));
  }
  const json m = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(m.at("command"), "bands");
  EXPECT_EQ(m.at("config_hash"), config_hash(c));
  EXPECT_EQ(m.at("config"), c.source);
  EXPECT_TRUE(m.at("versions").contains("eigen"));
  EXPECT_TRUE(m.at("versions").contains("fftw"));
  EXPECT_EQ(m.at("outputs").size(), 2u);
  EXPECT_DOUBLE_EQ(m.at("tolerances").at("gap").get<double>(), 1e-6);
}

TEST(CliCommands, DispersionAndGammaOutputs) {
  json j = base_config();
  j["speed_samples"] = 200;
  const RunConfig c = parse_config(j);
  const fs::path d = temp_dir("disp");
  cmd_dispersion(c, d);
  EXPECT_TRUE(fs::exists(d / "speed_limit.csv"));
  const fs::path g = temp_dir("gamma");
  cmd_gamma(c, g);
  EXPECT_TRUE(fs::exists(g / "gamma.csv"));
  EXPECT_TRUE(fs::exists(g / "beta.csv"));
  const json m = json::parse(slurp(g / "manifest.json"));
  EXPECT_EQ(m.at("command"), "gamma");
}

TEST(CliCommands, WeightCountMismatchIsConfigError) {
  json j = base_config();
  j["packet"]["weights"] = {1, 0, 0};
  const RunConfig c = parse_config(j);
  EXPECT_THROW(cmd_envelope(c, temp_dir("weights")), ConfigError);
}

TEST(CliCommands, EnvelopeDumpsReadBack) {
  json j = base_config();
  j["envelope"]["snapshots"] = 2;
  const RunConfig c = parse_config(j);
  const fs::path d = temp_dir("envelope");
  cmd_envelope(c, d);
  ASSERT_TRUE(fs::exists(d / "envelope_trace.csv"));
  const FieldDump f = read_field_dump(d / "envelope_T1.0000.bin");
  EXPECT_EQ(f.grid.M, c.grid.M);
  EXPECT_EQ(f.values.cols(), 2);
  EXPECT_EQ(f.metadata.at("kind"), "envelope");
}

TEST(CliCommands, ModulatedValidateGivesResidualCertificate) {
  const RunConfig c = load_config(fs::path(BLOCHWKB_SOURCE_DIR) / "configs" / "modulated.json");
  const fs::path d = temp_dir("validate_mod");
  const ConvergenceReport rep = cmd_validate(c, d);
  EXPECT_TRUE(rep.rows.empty());
  EXPECT_EQ(rep.oracle, "residual certificate");
  EXPECT_GT(rep.certificate.scale, 0);
  for (int k = -1; k <= 1; ++k) EXPECT_LE(rep.certificate.order(k), 1e-9 * rep.certificate.scale) << k;
  EXPECT_TRUE(fs::exists(d / "residual_certificate.csv"));
}
