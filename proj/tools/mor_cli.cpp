// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Talks to the toolkit exclusively through the
// C API in mor.h; exit codes mirror the MOR_* status values.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mor.h"

namespace {

struct ConfigDeleter {
  void operator()(mor_config* c) const { mor_config_free(c); }
};
using ConfigHandle = std::unique_ptr<mor_config, ConfigDeleter>;

int fail(int code) {
  std::fprintf(stderr, "error: %s\n", mor_last_error());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-order-reduction toolkit: full-order solves, POD/DEIM "
               "reduced models, residual-RNN surrogates, and UQ reports"};
  app.set_version_flag("--version", mor_version());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir, seed, threads, rank, deim_m, layers, dt_multiplier;

  std::vector<CLI::App*> subs;
  std::string stages = mor_stage_names();
  for (std::size_t pos = 0; pos < stages.size();) {
    std::size_t nl = stages.find('\n', pos);
    std::string name = stages.substr(pos, nl == std::string::npos ? nl : nl - pos);
    CLI::App* sub = app.add_subcommand(name, "Run the " + name + " stage");
    sub->add_option("-c,--config", config_path, "Configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "Ensemble seed (overrides ensemble.seed)");
    sub->add_option("--threads", threads, "Worker threads (overrides output.threads)");
    sub->add_option("--rank", rank, "POD rank (overrides reduction.rank)");
    sub->add_option("--deim-m", deim_m, "DEIM points (overrides reduction.deim_m)");
    sub->add_option("--layers", layers, "DR-RNN depth K (overrides model.layers)");
    sub->add_option("--dt-multiplier", dt_multiplier,
                    "Train/run at dt_multiplier * dt (overrides grid.dt_multiplier)");
    subs.push_back(sub);
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : MOR_ERR_CONFIG;
  }

  CLI::App* sub = app.get_subcommands().front();

  mor_config* raw = nullptr;
  int rc = mor_config_load(config_path.c_str(), &raw);
  if (rc != MOR_OK) return fail(rc);
  ConfigHandle cfg(raw);

  const std::pair<const char*, const std::string*> overrides[] = {
      {"output.dir", &out_dir},         {"ensemble.seed", &seed},
      {"output.threads", &threads},     {"reduction.rank", &rank},
      {"reduction.deim_m", &deim_m},    {"model.layers", &layers},
      {"grid.dt_multiplier", &dt_multiplier},
  };
  for (const auto& [key, value] : overrides) {
    if (value->empty()) continue;
    rc = mor_config_set(cfg.get(), key, value->c_str());
    if (rc != MOR_OK) return fail(rc);
  }

  rc = mor_run_stage(cfg.get(), sub->get_name().c_str());
  if (rc != MOR_OK) return fail(rc);
  return 0;
}
