// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_ERRORS_HPP
#define MOR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mor {

// Error taxonomy mirrors the CLI exit codes: config errors exit 2,
// numerical failures 3, missing/unreadable artifacts 4.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

struct ArtifactError : Error {
  explicit ArtifactError(const std::string& msg) : Error(msg) {}
};

}  // namespace mor

#endif
