// SPDX-License-Identifier: Apache-2.0
#include "mor/artifacts.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mor {

namespace fs = std::filesystem;

void write_text_atomic(const fs::path& path, const std::string& content) {
  fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ArtifactError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trajectory_csv(const Trajectory& traj, const fs::path& path) {
  std::ostringstream os;
  os << "t";
  for (Eigen::Index i = 0; i < traj.dim(); ++i) os << ",y_" << i;
  os << "\n";
  for (Eigen::Index j = 0; j < traj.columns(); ++j) {
    os << format_double(traj.grid.time_at(static_cast<int>(j)));
    for (Eigen::Index i = 0; i < traj.dim(); ++i)
      os << "," << format_double(traj.states(i, j));
    os << "\n";
  }
  write_text_atomic(path, os.str());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Trajectory read_trajectory_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot read trajectory file: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw ArtifactError("empty trajectory file: " + path.string());
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t")
    throw ArtifactError("bad trajectory header in " + path.string() +
                        ": expected first column 't'");
  const Eigen::Index n = static_cast<Eigen::Index>(header.size()) - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::string want = "y_" + std::to_string(i);
    if (header[i + 1] != want)
      throw ArtifactError("bad trajectory header in " + path.string() + ": column " +
                          std::to_string(i + 1) + " is '" + header[i + 1] +
                          "', expected '" + want + "'");
  }
  std::vector<double> times;
  std::vector<Vec> cols;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != n + 1)
      throw ArtifactError("ragged row in " + path.string());
    times.push_back(std::stod(fields[0]));
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = std::stod(fields[i + 1]);
    cols.push_back(std::move(v));
  }
  if (cols.empty()) throw ArtifactError("no data rows in " + path.string());
  Trajectory traj;
  traj.states.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    traj.states.col(static_cast<Eigen::Index>(j)) = cols[j];
  double dt = cols.size() > 1 ? times[1] - times[0] : 1.0;
  traj.grid.dt = dt;
  traj.grid.steps = static_cast<int>(cols.size()) - 1;
  traj.grid.t0 = times[0];
  return traj;
}

SnapshotMatrix read_snapshot_matrix(const std::vector<fs::path>& paths) {
  std::vector<Trajectory> trajs;
  trajs.reserve(paths.size());
  for (const auto& p : paths) trajs.push_back(read_trajectory_csv(p));
  return assemble_snapshots(trajs);
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const Mat& rows) {
  if (static_cast<Eigen::Index>(header.size()) != rows.cols())
    throw ContractError("write_csv: header/column mismatch");
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i)
    os << (i ? "," : "") << header[i];
  os << "\n";
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c)
      os << (c ? "," : "") << format_double(rows(r, c));
    os << "\n";
  }
  write_text_atomic(path, os.str());
}

namespace {

struct ByteWriter {
  std::string bytes;
  void raw(const void* p, std::size_t len) {
    bytes.append(static_cast<const char*>(p), len);
  }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void mat(const Mat& m) {  // row-major
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  void vec(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
};

struct ByteReader {
  std::string bytes;
  std::size_t pos = 0;
  explicit ByteReader(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot read: " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    bytes = os.str();
  }
  void raw(void* p, std::size_t len) {
    if (pos + len > bytes.size()) throw ArtifactError("truncated binary container");
    std::memcpy(p, bytes.data() + pos, len);
    pos += len;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  Mat mat(Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    return m;
  }
  Vec vec(Eigen::Index len) {
    Vec v(len);
    for (Eigen::Index i = 0; i < len; ++i) v(i) = f64();
    return v;
  }
  void expect_magic(const char* magic) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, magic, 4) != 0)
      throw ArtifactError(std::string("bad magic, expected ") + magic);
  }
};

constexpr std::uint32_t kMorbVersion = 1;
constexpr std::uint32_t kMorbKindPod = 1;
constexpr std::uint32_t kMorbKindDeim = 2;
constexpr std::uint32_t kDrnnVersion = 1;

}  // namespace

void save_pod_basis(const PodBasis& basis, const fs::path& path) {
  ByteWriter w;
  w.raw("MORB", 4);
  w.u32(kMorbVersion);
  w.u32(kMorbKindPod);
  w.u64(static_cast<std::uint64_t>(basis.basis.rows()));
  w.u64(static_cast<std::uint64_t>(basis.r));
  w.u64(static_cast<std::uint64_t>(basis.singular_values.size()));
  w.mat(basis.basis);
  w.vec(basis.singular_values);
  write_text_atomic(path, w.bytes);
}

PodBasis load_pod_basis(const fs::path& path) {
  ByteReader r(path);
  r.expect_magic("MORB");
  if (r.u32() != kMorbVersion) throw ArtifactError("unsupported MORB version");
  if (r.u32() != kMorbKindPod) throw ArtifactError("not a POD basis container");
  auto n = static_cast<Eigen::Index>(r.u64());
  auto rank = static_cast<Eigen::Index>(r.u64());
  auto spec = static_cast<Eigen::Index>(r.u64());
  PodBasis out;
  out.basis = r.mat(n, rank);
  out.singular_values = r.vec(spec);
  out.r = rank;
  return out;
}

void save_deim_operator(const DeimOperator& op, const fs::path& path) {
  ByteWriter w;
  w.raw("MORB", 4);
  w.u32(kMorbVersion);
  w.u32(kMorbKindDeim);
  w.u64(static_cast<std::uint64_t>(op.nonlinearity_basis.rows()));
  w.u64(static_cast<std::uint64_t>(op.nonlinearity_basis.cols()));
  w.u64(static_cast<std::uint64_t>(op.sampling_rows_of_basis.cols()));
  for (auto idx : op.indices) w.u64(static_cast<std::uint64_t>(idx));
  w.mat(op.nonlinearity_basis);
  w.mat(op.deim_matrix);
  w.mat(op.sampling_rows_of_basis);
  w.f64(op.condition_number);
  write_text_atomic(path, w.bytes);
}

DeimOperator load_deim_operator(const fs::path& path) {
  ByteReader r(path);
  r.expect_magic("MORB");
  if (r.u32() != kMorbVersion) throw ArtifactError("unsupported MORB version");
  if (r.u32() != kMorbKindDeim) throw ArtifactError("not a DEIM container");
  auto n = static_cast<Eigen::Index>(r.u64());
  auto m = static_cast<Eigen::Index>(r.u64());
  auto rank = static_cast<Eigen::Index>(r.u64());
  DeimOperator op;
  op.indices.resize(m);
  for (auto& idx : op.indices) idx = static_cast<Eigen::Index>(r.u64());
  op.nonlinearity_basis = r.mat(n, m);
  op.deim_matrix = r.mat(n, m);
  op.sampling_rows_of_basis = r.mat(m, rank);
  op.condition_number = r.f64();
  return op;
}

void save_drrnn_model(const DrRnnModel& model, const fs::path& path) {
  ByteWriter w;
  w.raw("DRNN", 4);
  w.u32(kDrnnVersion);
  w.u32(static_cast<std::uint32_t>(model.layers));
  w.u64(static_cast<std::uint64_t>(model.n));
  w.u32(model.trainable_transform ? 1u : 0u);
  w.f64(model.zeta);
  w.f64(model.gamma);
  w.f64(model.eps);
  w.f64(model.dt);
  w.vec(model.gain);
  w.vec(model.eta);
  w.mat(model.transform);
  write_text_atomic(path, w.bytes);
}

DrRnnModel load_drrnn_model(const fs::path& path) {
  ByteReader r(path);
  r.expect_magic("DRNN");
  if (r.u32() != kDrnnVersion) throw ArtifactError("unsupported DRNN version");
  DrRnnModel m;
  m.layers = static_cast<int>(r.u32());
  m.n = static_cast<Eigen::Index>(r.u64());
  m.trainable_transform = r.u32() != 0;
  m.zeta = r.f64();
  m.gamma = r.f64();
  m.eps = r.f64();
  m.dt = r.f64();
  m.gain = r.vec(m.n);
  m.eta = r.vec(m.layers - 1);
  m.transform = r.mat(m.n, m.n);
  return m;
}

void write_loss_history_csv(const LossHistory& history, const fs::path& path) {
  std::ostringstream os;
  os << "epoch,train_mse,test_mse\n";
  for (std::size_t i = 0; i < history.train_mse.size(); ++i) {
    os << i << "," << format_double(history.train_mse[i]) << ",";
    if (i < history.test_mse.size()) os << format_double(history.test_mse[i]);
    os << "\n";
  }
  write_text_atomic(path, os.str());
}

std::string content_hash_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot hash missing file: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return content_hash_hex(os.str());
}

}  // namespace mor
