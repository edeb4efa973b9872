#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace asaloc {

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Scalar = double;
using Matrix = MatrixX<Scalar>;
using Vector = VectorX<Scalar>;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

enum class View { kUav, kSatellite };
enum class Strategy { kSoftKmeans, kHardKmeans, kHardUniform };
enum class AttentionGrad { kFlow, kDetach };

/// Backbone output for one image: the global token plus one row per patch.
struct TokenSet {
  Vector class_token;   // D
  Matrix patch_tokens;  // N x D
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PartitionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string to_string(View v) {
  return v == View::kUav ? "uav" : "satellite";
}

inline View view_from_string(const std::string& s) {
  if (s == "uav") return View::kUav;
  if (s == "satellite") return View::kSatellite;
  throw ConfigError("unknown view '" + s + "' (expected uav|satellite)");
}

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kSoftKmeans: return "soft_kmeans";
    case Strategy::kHardKmeans: return "hard_kmeans";
    case Strategy::kHardUniform: return "hard_uniform";
  }
  throw ConfigError("invalid strategy value");
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "soft_kmeans") return Strategy::kSoftKmeans;
  if (s == "hard_kmeans") return Strategy::kHardKmeans;
  if (s == "hard_uniform") return Strategy::kHardUniform;
  throw ConfigError("unknown strategy '" + s +
                    "' (expected soft_kmeans|hard_kmeans|hard_uniform)");
}

inline std::string to_string(AttentionGrad g) {
  return g == AttentionGrad::kFlow ? "flow" : "detach";
}

inline AttentionGrad attention_grad_from_string(const std::string& s) {
  if (s == "flow") return AttentionGrad::kFlow;
  if (s == "detach") return AttentionGrad::kDetach;
  throw ConfigError("unknown attention_grad '" + s + "' (expected flow|detach)");
}

}  // namespace asaloc
