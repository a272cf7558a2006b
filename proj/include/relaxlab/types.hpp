#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace relaxlab {

/// Largest target dimension k handled without heap allocation (Q-tensors need 5).
inline constexpr int kMaxTarget = 5;
/// Largest domain dimension n.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxTarget, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxTarget, kMaxTarget>;
/// k x n Jacobian of a field at a node.
using Jac = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxTarget, kMaxDim>;
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

using Index = std::int64_t;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A point handed to a projection lies outside the tubular neighbourhood.
class TubeError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class SolverError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DiagnosticsError : public Error {
public:
  using Error::Error;
};

}  // namespace relaxlab
