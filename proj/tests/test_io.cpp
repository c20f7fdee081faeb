// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mor/artifacts.hpp"
#include "mor/config.hpp"
#include "mor/errors.hpp"

using namespace mor;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mor_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

Trajectory random_trajectory(int n, int steps, double dt) {
  Trajectory t;
  t.states = Mat::Random(n, steps + 1);
  t.grid = TimeGrid(dt, steps);
  return t;
}

}  // namespace

TEST_CASE("parse_config: minimal first-problem config applies the defaults") {
  RunConfig cfg = parse_config_text("[problem]\nid = p1\n");
  CHECK(cfg.problem == ProblemId::P1);
  CHECK(cfg.dt == doctest::Approx(0.1));
  CHECK(cfg.steps == 100);
  CHECK(cfg.count == 1500);
  CHECK(cfg.train_size == 500);
  CHECK(cfg.test_size == 1000);
}

TEST_CASE("parse_config: negative dt raises a range error naming the key") {
  CHECK_THROWS_WITH_AS(parse_config_text("[problem]\nid = p1\n[grid]\ndt = -1\n"),
                       doctest::Contains("dt"), ConfigError);
}

TEST_CASE("parse_config: unknown keys are rejected") {
  CHECK_THROWS_AS(parse_config_text("[problem]\nid = p1\nwhat = 3\n"), ConfigError);
}

TEST_CASE("parse_config: serialize-parse round trip is stable") {
  RunConfig cfg = parse_config_text(
      "[problem]\nid = heat\n[grid]\ndt = 0.25\nsteps = 17\n[ensemble]\nseed = 7\n"
      "[reduction]\nrank = 11\n[training]\nlearning_rate = 0.005\n");
  std::string text = serialize_config(cfg);
  RunConfig again = parse_config_text(text);
  CHECK(serialize_config(again) == text);
  CHECK(again.problem == ProblemId::Heat);
  CHECK(again.dt == cfg.dt);
  CHECK(again.steps == cfg.steps);
  CHECK(again.seed == cfg.seed);
  CHECK(again.rank == cfg.rank);
  CHECK(again.learning_rate == cfg.learning_rate);
}

TEST_CASE("apply_override: dotted keys update and revalidate") {
  RunConfig cfg = parse_config_text("[problem]\nid = p1\n");
  apply_override(cfg, "reduction.rank", "4");
  CHECK(cfg.rank == 4);
  CHECK_THROWS_AS(apply_override(cfg, "grid.dt", "-2"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "nope.key", "1"), ConfigError);
}

TEST_CASE("format_double: 17 significant digits survive a round trip") {
  for (double v : {1.0 / 3.0, 0.1, -2.7182818284590452, 1e-17, 12345.678901234567}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("trajectory csv: write-read round trip is bitwise equal") {
  TempDir dir;
  Trajectory t = random_trajectory(5, 12, 0.07);
  fs::path p = dir.path / "traj.csv";
  write_trajectory_csv(t, p);
  Trajectory back = read_trajectory_csv(p);
  CHECK(back.grid.dt == t.grid.dt);
  CHECK(back.grid.steps == t.grid.steps);
  CHECK((back.states - t.states).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("trajectory csv: zero-step trajectory has a single data row") {
  TempDir dir;
  Trajectory t = random_trajectory(3, 0, 0.1);
  fs::path p = dir.path / "tiny.csv";
  write_trajectory_csv(t, p);
  std::ifstream in(p);
  std::string line;
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);  // header + one data row
  Trajectory back = read_trajectory_csv(p);
  CHECK(back.columns() == 1);
}

TEST_CASE("trajectory csv: schema line carries t and component names") {
  TempDir dir;
  Trajectory t = random_trajectory(2, 1, 0.5);
  fs::path p = dir.path / "hdr.csv";
  write_trajectory_csv(t, p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,y_0,y_1");
}

TEST_CASE("read_snapshot_matrix: heat-sized ensemble assembles 99 x 41L entries") {
  TempDir dir;
  std::vector<fs::path> paths;
  const int L = 3;
  for (int l = 0; l < L; ++l) {
    Trajectory t = random_trajectory(99, 40, 0.03);
    fs::path p = dir.path / ("run_" + std::to_string(l) + ".csv");
    write_trajectory_csv(t, p);
    paths.push_back(p);
  }
  SnapshotMatrix X = read_snapshot_matrix(paths);
  CHECK(X.data.rows() == 99);
  CHECK(X.data.cols() == 41 * L);
}

TEST_CASE("pod basis container: round trip preserves every field") {
  TempDir dir;
  PodBasis basis;
  basis.basis = Mat::Random(9, 4);
  basis.singular_values = Vec::Random(9).cwiseAbs();
  basis.r = 4;
  fs::path p = dir.path / "basis.morb";
  save_pod_basis(basis, p);
  PodBasis back = load_pod_basis(p);
  CHECK(back.r == 4);
  CHECK((back.basis - basis.basis).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.singular_values - basis.singular_values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deim container: round trip preserves indices and operators") {
  TempDir dir;
  DeimOperator op;
  op.indices = {4, 0, 7};
  op.nonlinearity_basis = Mat::Random(8, 3);
  op.deim_matrix = Mat::Random(8, 3);
  op.sampling_rows_of_basis = Mat::Random(3, 5);
  op.condition_number = 12.5;
  fs::path p = dir.path / "deim.morb";
  save_deim_operator(op, p);
  DeimOperator back = load_deim_operator(p);
  CHECK(back.indices == op.indices);
  CHECK((back.deim_matrix - op.deim_matrix).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.sampling_rows_of_basis - op.sampling_rows_of_basis).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(back.condition_number == op.condition_number);
}

TEST_CASE("model container: round trip preserves weights, binding left behind") {
  TempDir dir;
  DrRnnModel m;
  m.layers = 3;
  m.n = 4;
  m.trainable_transform = true;
  m.transform = Mat::Random(4, 4);
  m.gain = Vec::Random(4);
  m.eta = Vec::Random(2);
  m.dt = 0.2;
  fs::path p = dir.path / "model.drnn";
  save_drrnn_model(m, p);
  DrRnnModel back = load_drrnn_model(p);
  CHECK(back.layers == 3);
  CHECK(back.n == 4);
  CHECK(back.trainable_transform);
  CHECK(back.dt == 0.2);
  CHECK((back.transform - m.transform).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.gain - m.gain).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.eta - m.eta).cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(back.system);
}

TEST_CASE("binary containers: magic mismatch is reported as a format error") {
  TempDir dir;
  fs::path p = dir.path / "model.drnn";
  write_text_atomic(p, "not a container");
  CHECK_THROWS_AS(load_drrnn_model(p), ArtifactError);
  CHECK_THROWS_AS(load_pod_basis(p), ArtifactError);
}

TEST_CASE("write_text_atomic: no temporary litter remains after a write") {
  TempDir dir;
  fs::path p = dir.path / "note.txt";
  write_text_atomic(p, "payload");
  int entries = 0;
  for (auto& e : fs::directory_iterator(dir.path)) {
    ++entries;
    CHECK(e.path().filename() == "note.txt");
  }
  CHECK(entries == 1);
  std::ifstream in(p);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  CHECK(content == "payload");
}

TEST_CASE("content_hash_hex: deterministic and sensitive to changes") {
  CHECK(content_hash_hex("abc") == content_hash_hex("abc"));
  CHECK(content_hash_hex("abc") != content_hash_hex("abd"));
  CHECK(content_hash_hex("").size() == 16);  // 64-bit hex
}

TEST_CASE("write_loss_history_csv: one row per epoch") {
  TempDir dir;
  LossHistory h;
  h.train_mse = {3.0, 2.0, 1.5};
  h.test_mse = {3.5, 2.5, 2.0};
  fs::path p = dir.path / "loss.csv";
  write_loss_history_csv(h, p);
  std::ifstream in(p);
  std::string line;
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);  // header + 3 epochs
}
