#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace acrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Forward-mode scalar used for reparametrization gradients. Capacity covers
/// mean and log-std directions for action dimensions up to 8.
using JetDerivatives = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;
using Jet = Eigen::AutoDiffScalar<JetDerivatives>;

template <class T> using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline constexpr int kMaxActionDim = 8;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an LP/QP solver cannot certify a solution.
struct SolverError : Error {
  using Error::Error;
};

/// Raised when an action about to be executed lies outside the feasible set.
struct FeasibilityViolation : Error {
  using Error::Error;
};

namespace scalar {

inline double value(double x) { return x; }
inline double value(const Jet &x) { return x.value(); }

template <class T> T constant(double v, const T &like);
template <> inline double constant<double>(double v, const double &) { return v; }
template <> inline Jet constant<Jet>(double v, const Jet &like) {
  return Jet(v, JetDerivatives::Zero(like.derivatives().size()));
}

/// Builds f(x) given f's value and derivative at x (chain rule for jets).
inline double apply(double, double fx, double) { return fx; }
inline Jet apply(const Jet &x, double fx, double dfx) {
  return Jet(fx, x.derivatives() * dfx);
}

/// log(1 - tanh(x)^2) in the overflow-free softplus form.
inline double log1m_tanh2_value(double x) {
  const double ax = std::abs(x);
  return 2.0 * (std::log(2.0) - ax - std::log1p(std::exp(-2.0 * ax)));
}

template <class T> T log1m_tanh2(const T &x) {
  const double xv = value(x);
  return apply(x, log1m_tanh2_value(xv), -2.0 * std::tanh(xv));
}

template <class T> T tanh_(const T &x) {
  const double t = std::tanh(value(x));
  return apply(x, t, 1.0 - t * t);
}

inline double sqr(double x) { return x * x; }

} // namespace scalar

/// 64-bit mixing function (SplitMix64 finalizer); used for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a stream label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ull));
}

inline std::uint64_t fnv1a64(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

} // namespace acrl
