// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_ARTIFACTS_HPP
#define MOR_ARTIFACTS_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "mor/drrnn.hpp"
#include "mor/reduction.hpp"

namespace mor {

// All writers are atomic: temp file in the target directory, then rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

std::string format_double(double v);  // 17 significant digits

// CSV schema: t, y_0, ..., y_{n-1}
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

// Concatenates the state columns of the listed trajectory files in order.
SnapshotMatrix read_snapshot_matrix(const std::vector<std::filesystem::path>& paths);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Mat& rows);

// "MORB" binary container for POD bases and DEIM operators.
void save_pod_basis(const PodBasis& basis, const std::filesystem::path& path);
PodBasis load_pod_basis(const std::filesystem::path& path);
void save_deim_operator(const DeimOperator& op, const std::filesystem::path& path);
DeimOperator load_deim_operator(const std::filesystem::path& path);

// "DRNN" binary container; the residual binding is not serialized and must
// be re-attached after loading.
void save_drrnn_model(const DrRnnModel& model, const std::filesystem::path& path);
DrRnnModel load_drrnn_model(const std::filesystem::path& path);

void write_loss_history_csv(const LossHistory& history, const std::filesystem::path& path);

// FNV-1a content hash, for manifest change detection only.
std::string content_hash_hex(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace mor

#endif
