// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mor.h"

namespace fs = std::filesystem;

namespace {

std::string g_cli_path;  // set from argv in main

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("mor_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
  return p;
}

int run_cli(const std::string& args) {
  int rc = std::system((g_cli_path + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

int count_trajectories(const fs::path& dir) {
  if (!fs::exists(dir)) return -1;
  int n = 0;
  for (auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv" &&
        e.path().filename().string().rfind("traj_", 0) == 0)
      ++n;
  return n;
}

// Small ODE setup shared by the library-level stage tests.
std::string small_p1(const fs::path& out) {
  return "[problem]\nid = p1\n[grid]\nsteps = 20\n[ensemble]\ncount = 30\n"
         "train = 10\ntest = 20\n[training]\niterations = 2\n"
         "[output]\ndir = " +
         out.string() + "\n";
}

}  // namespace

TEST_CASE("mor_version reports a semantic version") {
  std::string v = mor_version();
  CHECK(v.find('.') != std::string::npos);
}

TEST_CASE("mor_stage_names lists the eight pipeline stages") {
  std::string names = mor_stage_names();
  for (const char* s : {"fom-run", "pod-build", "deim-build", "rom-run", "drrnn-train",
                        "drrnn-run", "uq-report", "stability-check"})
    CHECK(names.find(s) != std::string::npos);
}

TEST_CASE("mor_config_from_text accepts a minimal config") {
  mor_config* cfg = nullptr;
  REQUIRE(mor_config_from_text("[problem]\nid = p1\n", &cfg) == MOR_OK);
  REQUIRE(cfg != nullptr);
  std::string desc = mor_config_describe(cfg);
  CHECK(desc.find("p1") != std::string::npos);
  CHECK(desc.find("dt") != std::string::npos);
  mor_config_free(cfg);
}

TEST_CASE("mor_config_from_text rejects malformed input with a config error") {
  mor_config* cfg = reinterpret_cast<mor_config*>(0x1);
  CHECK(mor_config_from_text("[problem]\nid = p9\n", &cfg) == MOR_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(mor_last_error()).size() > 0);
}

TEST_CASE("mor_config_set validates keys and values") {
  mor_config* cfg = nullptr;
  REQUIRE(mor_config_from_text("[problem]\nid = p1\n", &cfg) == MOR_OK);
  CHECK(mor_config_set(cfg, "reduction.rank", "7") == MOR_OK);
  CHECK(mor_config_set(cfg, "grid.dt", "-3") == MOR_ERR_CONFIG);
  CHECK(std::string(mor_last_error()).find("dt") != std::string::npos);
  CHECK(mor_config_set(cfg, "no.such_key", "1") == MOR_ERR_CONFIG);
  mor_config_free(cfg);
}

TEST_CASE("mor_config_load reports missing files as artifact errors") {
  mor_config* cfg = nullptr;
  CHECK(mor_config_load("/nonexistent/config.ini", &cfg) == MOR_ERR_ARTIFACT);
  CHECK(cfg == nullptr);
}

TEST_CASE("mor_run_stage rejects unknown stages") {
  mor_config* cfg = nullptr;
  REQUIRE(mor_config_from_text("[problem]\nid = p1\n", &cfg) == MOR_OK);
  CHECK(mor_run_stage(cfg, "fly-to-the-moon") == MOR_ERR_CONFIG);
  mor_config_free(cfg);
}

TEST_CASE("mor_run_stage: ensemble stage writes trajectories and a manifest") {
  TempDir dir;
  mor_config* cfg = nullptr;
  REQUIRE(mor_config_from_text(small_p1(dir.path).c_str(), &cfg) == MOR_OK);
  REQUIRE(mor_run_stage(cfg, "fom-run") == MOR_OK);
  fs::path stage = dir.path / "p1" / "fom-run";
  CHECK(count_trajectories(stage) == 30);
  CHECK(fs::exists(stage / "manifest.json"));
  mor_config_free(cfg);
}

TEST_CASE("mor_run_stage: model stages depend on the ensemble stage") {
  TempDir dir;
  mor_config* cfg = nullptr;
  REQUIRE(mor_config_from_text(small_p1(dir.path).c_str(), &cfg) == MOR_OK);
  CHECK(mor_run_stage(cfg, "drrnn-train") == MOR_ERR_ARTIFACT);
  std::string err = mor_last_error();
  CHECK(err.find("fom-run") != std::string::npos);
  mor_config_free(cfg);
}

TEST_CASE("cli: no arguments is a usage error") {
  CHECK(run_cli("") == MOR_ERR_CONFIG);
}

TEST_CASE("cli: malformed config exits with the config status") {
  TempDir dir;
  fs::path bad = write_file(dir.path / "bad.ini", "[problem]\nid = p1\n[grid]\ndt = -1\n");
  CHECK(run_cli("fom-run -c " + bad.string()) == MOR_ERR_CONFIG);
}

TEST_CASE("cli: missing config file exits with the artifact status") {
  CHECK(run_cli("fom-run -c /no/such/file.ini") != MOR_OK);
}

TEST_CASE("cli: heat ensemble writes one csv per sample plus a manifest") {
  TempDir dir;
  fs::path cfg = write_file(dir.path / "heat.ini",
                            "[problem]\nid = heat\n[ensemble]\ncount = 5\n"
                            "[training]\nsamples = 3\n[output]\ndir = " +
                                (dir.path / "out").string() + "\n");
  REQUIRE(run_cli("fom-run -c " + cfg.string()) == MOR_OK);
  fs::path stage = dir.path / "out" / "heat" / "fom-run";
  CHECK(count_trajectories(stage) == 5);
  CHECK(fs::exists(stage / "manifest.json"));
}

TEST_CASE("cli: pod-build then rom-run emits an mse table row for the rank") {
  TempDir dir;
  fs::path cfg = write_file(dir.path / "heat.ini",
                            "[problem]\nid = heat\n[ensemble]\ncount = 5\n"
                            "[training]\nsamples = 3\n[output]\ndir = " +
                                (dir.path / "out").string() + "\n");
  REQUIRE(run_cli("fom-run -c " + cfg.string()) == MOR_OK);
  REQUIRE(run_cli("pod-build -c " + cfg.string() + " --rank 5") == MOR_OK);
  REQUIRE(run_cli("rom-run -c " + cfg.string() + " --rank 5") == MOR_OK);
  fs::path table = dir.path / "out" / "heat" / "rom-run" / "mse.csv";
  REQUIRE(fs::exists(table));
  std::string content = slurp(table);
  CHECK(content.find("galerkin,5,") != std::string::npos);
}

TEST_CASE("cli: rom-run without a basis exits with the artifact status") {
  TempDir dir;
  fs::path cfg = write_file(dir.path / "heat.ini",
                            "[problem]\nid = heat\n[ensemble]\ncount = 4\n"
                            "[training]\nsamples = 2\n[output]\ndir = " +
                                (dir.path / "out").string() + "\n");
  REQUIRE(run_cli("fom-run -c " + cfg.string()) == MOR_OK);
  CHECK(run_cli("rom-run -c " + cfg.string()) == MOR_ERR_ARTIFACT);
}

TEST_CASE("cli: training twice with one seed produces bit-identical models") {
  TempDir dir;
  fs::path cfg = write_file(dir.path / "p1.ini", small_p1(dir.path / "out"));
  REQUIRE(run_cli("fom-run -c " + cfg.string()) == MOR_OK);
  REQUIRE(run_cli("drrnn-train -c " + cfg.string() + " --layers 2") == MOR_OK);
  fs::path model = dir.path / "out" / "p1" / "drrnn-train" / "drrnn_K2.drnn";
  REQUIRE(fs::exists(model));
  std::string first = slurp(model);
  REQUIRE(run_cli("drrnn-train -c " + cfg.string() + " --layers 2") == MOR_OK);
  CHECK(slurp(model) == first);
}

TEST_CASE("cli: stability-check prints the bound and the configured step") {
  TempDir dir;
  fs::path cfg = write_file(dir.path / "p5.ini",
                            "[problem]\nid = twophase\n[output]\ndir = " +
                                (dir.path / "out").string() + "\n");
  fs::path log = dir.path / "stability.txt";
  int rc = std::system((g_cli_path + " stability-check -c " + cfg.string() + " > " +
                        log.string() + " 2>&1")
                           .c_str());
  REQUIRE(WEXITSTATUS(rc) == MOR_OK);
  std::string out = slurp(log);
  CHECK(out.find("bound") != std::string::npos);
  CHECK(out.find("dt") != std::string::npos);
}

int main(int argc, char** argv) {
  doctest::Context context;
  context.applyCommandLine(1, argv);  // keep doctest flags out of the path arg
  if (argc > 1) g_cli_path = argv[argc - 1];
  if (g_cli_path.empty() || !fs::exists(g_cli_path)) {
    std::fprintf(stderr, "usage: test_cli <path-to-cli-binary>\n");
    return 1;
  }
  return context.run();
}
