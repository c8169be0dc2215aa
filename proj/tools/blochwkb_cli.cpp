#include <CLI11.hpp>

#include <iostream>

#include "blochwkb/blochwkb.hpp"

int main(int argc, char** argv) {
  using namespace blochwkb;
  CLI::App app{"Bloch wave packet WKB toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"bands", "band frequencies at theta and dispersion data of the selected band"},
      {"dispersion", "group velocity, Hessian and speed-limit check"},
      {"gamma", "coupling field, ray average and empirical beta"},
      {"envelope", "envelope evolution with conservation trace"},
      {"wkb", "profile construction, residual report and field dumps"},
      {"validate", "convergence table against the exact oracle"},
      {"oracle", "time-domain reference run with energy and divergence trace"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const RunConfig c = load_config(config_path);
    if (cmd == "bands") cmd_bands(c, out_dir);
    else if (cmd == "dispersion") cmd_dispersion(c, out_dir);
    else if (cmd == "gamma") cmd_gamma(c, out_dir);
    else if (cmd == "envelope") cmd_envelope(c, out_dir);
    else if (cmd == "wkb") cmd_wkb(c, out_dir);
    else if (cmd == "validate") {
      const auto rep = cmd_validate(c, out_dir);
      if (!rep.rows.empty()) std::cout << "slope " << rep.slope << " (" << rep.oracle << ")\n";
      else std::cout << rep.oracle << ": max |r_-1..1| / scale = "
                     << std::max({rep.certificate.order(-1), rep.certificate.order(0), rep.certificate.order(1)}) /
                            rep.certificate.scale
                     << "\n";
    } else if (cmd == "oracle") cmd_oracle(c, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
