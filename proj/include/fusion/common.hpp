#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusion {

#ifdef FUSION_REAL_FLOAT32
using real_t = float;
#else
using real_t = double;
#endif

// Error taxonomy. Everything derives from FusionError so callers can catch
// one base; the concrete types mirror the failure classes the API contracts
// name (shape, empty input/support, config, validation, io, contract).
struct FusionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : FusionError {
  using FusionError::FusionError;
};
struct EmptyInputError : FusionError {
  using FusionError::FusionError;
};
struct EmptySupportError : FusionError {
  using FusionError::FusionError;
};
struct ContractError : FusionError {
  using FusionError::FusionError;
};
struct ConfigError : FusionError {
  using FusionError::FusionError;
};
struct ValidationError : FusionError {
  using FusionError::FusionError;
};
struct IoError : FusionError {
  using FusionError::FusionError;
};

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace fusion
