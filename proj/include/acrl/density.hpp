#pragma once

#include "acrl/mappings.hpp"

#include <array>
#include <numbers>

namespace acrl {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian over the pre-mapping action.
template <class T> struct GaussianHeadT {
  VecT<T> mean;
  VecT<T> log_std;

  int dim() const { return static_cast<int>(mean.size()); }
};

using GaussianHead = GaussianHeadT<double>;

inline void check_head(const GaussianHead &h) {
  if (h.mean.size() != h.log_std.size()) throw std::invalid_argument("GaussianHead: shape mismatch");
  if ((h.log_std.array() < kLogStdMin).any() || (h.log_std.array() > kLogStdMax).any())
    throw std::invalid_argument("GaussianHead: log_std outside [-20, 2]");
}

template <class T> T gaussian_logprob(const GaussianHeadT<T> &h, const VecT<T> &x) {
  using std::exp;
  const int d = h.dim();
  T lp = scalar::constant<T>(-0.5 * d * std::log(2.0 * std::numbers::pi), x[0]);
  for (int i = 0; i < d; ++i) {
    const T z = (x[i] - h.mean[i]) * exp(-h.log_std[i]);
    lp -= 0.5 * z * z + h.log_std[i];
  }
  return lp;
}

/// Log-density of a_max * tanh(u), u ~ head, evaluated at pre_tanh = u.
template <class T>
T squashed_gaussian_logprob(const GaussianHeadT<T> &h, const VecT<T> &pre_tanh, const ActionSpace &space) {
  T lp = gaussian_logprob(h, pre_tanh);
  for (int i = 0; i < h.dim(); ++i) lp -= scalar::log1m_tanh2(pre_tanh[i]) + std::log(space.a_max[i]);
  return lp;
}

inline double squashed_gaussian_logprob(const GaussianHead &h, const Vec &pre_tanh, const ActionSpace &space) {
  return squashed_gaussian_logprob<double>(h, pre_tanh, space);
}

// ---------------------------------------------------------------------------
// Radial squashing.

/// Density after radial squashing of a sample y whose own log-density is
/// base_logprob: base - log|det J(y)|.
template <class T>
T radial_logprob(const T &base_logprob, const VecT<T> &y, const ConstraintInstance &inst, const Vec &c_s) {
  const auto rv = radial_value<T>(y, inst, c_s);
  if (rv.at_center) return base_logprob;
  return base_logprob - radial_logdet<T>(rv.L, inst.dim());
}

/// Radial squashing applied directly to a Gaussian sample.
inline double radial_logprob(const GaussianHead &h, const Vec &pre_map_action, const ConstraintInstance &inst,
                             const Vec &c_s) {
  return radial_logprob<double>(gaussian_logprob<double>(h, pre_map_action), pre_map_action, inst, c_s);
}

// ---------------------------------------------------------------------------
// Ray moments  I_n = ∫_{r0}^∞ r^n exp(-(A r + B)^2) dr.

namespace detail {

/// exp(x^2) erfc(x) for x >= 0.
inline double erfcx(double x) {
  if (x < 10.0) return std::exp(x * x) * std::erfc(x);
  // Continued fraction: erfcx(x) = 1/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
  double f = x;
  for (int k = 60; k >= 1; --k) f = x + 0.5 * k / f;
  return 1.0 / (std::sqrt(std::numbers::pi) * f);
}

inline constexpr int kMaxMoment = 10;

/// log K_k(t0) = log ∫_0^∞ s^k exp(-(s + t0)^2) ds for k = 0..kmax.
inline std::array<double, kMaxMoment + 1> log_shifted_moments(double t0, int kmax) {
  std::array<double, kMaxMoment + 1> out{};
  const double half_sqrt_pi = 0.5 * std::sqrt(std::numbers::pi);
  if (t0 <= 0.75) {
    // Forward recurrence K_k = ((k-1) K_{k-2} - 2 t0 K_{k-1}) / 2.
    std::array<double, kMaxMoment + 1> K{};
    K[0] = half_sqrt_pi * std::erfc(t0);
    if (kmax >= 1) K[1] = 0.5 * (std::exp(-t0 * t0) - 2.0 * t0 * K[0]);
    for (int k = 2; k <= kmax; ++k) K[k] = 0.5 * ((k - 1) * K[k - 2] - 2.0 * t0 * K[k - 1]);
    for (int k = 0; k <= kmax; ++k) out[k] = std::log(K[k]);
    return out;
  }
  // K is the minimal solution of the recurrence for t0 > 0: run it backward
  // (Miller) on k_j = K_j exp(t0^2) and normalize with k_0 = sqrt(pi)/2 erfcx(t0).
  const int N = kmax + 20 + static_cast<int>(std::ceil(200.0 / (t0 * t0)));
  std::array<double, kMaxMoment + 1> k{};
  double log_scale = 0.0; // stored values are k_j * exp(-log_scale)
  std::array<double, kMaxMoment + 1> shift{};
  double x_hi = 0.0, x_lo = 1.0; // x_{N+1}, x_N
  if (N <= kmax) k[N] = x_lo;
  for (int j = N + 1; j >= 2; --j) {
    const double next = (2.0 * x_hi + 2.0 * t0 * x_lo) / (j - 1);
    x_hi = x_lo;
    x_lo = next;
    if (j - 2 <= kmax) {
      k[j - 2] = x_lo;
      shift[j - 2] = log_scale;
    }
    if (x_lo > 1e150 || x_lo < 1e-150) {
      const double s = x_lo;
      x_lo = 1.0;
      x_hi /= s;
      log_scale += std::log(s);
    }
  }
  // k_j true = stored_j * exp(log_scale_at_j - log_scale_final) * norm.
  const double log_norm = std::log(half_sqrt_pi * erfcx(t0)) - std::log(k[0]) - (shift[0] - log_scale);
  for (int j = 0; j <= kmax; ++j)
    out[j] = std::log(k[j]) + (shift[j] - log_scale) + log_norm - t0 * t0;
  return out;
}

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// log I_n for n = 0..nmax via the substitution r = r0 + s/A, which leaves a
/// sum of nonnegative terms.
inline std::array<double, kMaxMoment + 1> log_ray_moments(int nmax, double A, double B, double r0) {
  const double t0 = A * r0 + B;
  const auto logK = log_shifted_moments(t0, nmax);
  std::array<double, kMaxMoment + 1> out{};
  const double log_ar0 = r0 > 0.0 ? std::log(A * r0) : -std::numeric_limits<double>::infinity();
  for (int n = 0; n <= nmax; ++n) {
    // log-sum-exp over k of C(n,k) (A r0)^(n-k) K_k
    double mx = -std::numeric_limits<double>::infinity();
    std::array<double, kMaxMoment + 1> terms{};
    for (int kk = 0; kk <= n; ++kk) {
      const double lt = (n - kk == 0) ? logK[kk] : log_binomial(n, kk) + (n - kk) * log_ar0 + logK[kk];
      terms[kk] = lt;
      mx = std::max(mx, lt);
    }
    double s = 0.0;
    for (int kk = 0; kk <= n; ++kk) s += std::exp(terms[kk] - mx);
    out[n] = mx + std::log(s) - (n + 1) * std::log(A);
  }
  return out;
}

} // namespace detail

inline double log_gaussian_ray_moment(int n, double A, double B, double r0) {
  if (!(A > 0.0)) throw std::invalid_argument("gaussian_ray_moment: A must be positive");
  if (n < 0 || n > 8) throw std::invalid_argument("gaussian_ray_moment: n must be in [0, 8]");
  if (!(r0 >= 0.0)) throw std::invalid_argument("gaussian_ray_moment: r0 must be nonnegative");
  return detail::log_ray_moments(n, A, B, r0)[n];
}

/// ∫_{r0}^∞ r^n exp(-(A r + B)^2) dr in closed form (erf/exp recurrence).
inline double gaussian_ray_moment(int n, double A, double B, double r0) {
  return std::exp(log_gaussian_ray_moment(n, A, B, r0));
}

/// log I_n with derivatives propagated through A, B and r0:
///   dI/dA = -2A I_{n+2} - 2B I_{n+1},  dI/dB = -2A I_{n+1} - 2B I_n,
///   dI/dr0 = -r0^n exp(-(A r0 + B)^2).
inline Jet log_gaussian_ray_moment(int n, const Jet &A, const Jet &B, const Jet &r0) {
  const double a = A.value(), b = B.value(), r = r0.value();
  if (!(a > 0.0) || n < 0 || n > 8 || !(r >= 0.0)) throw std::invalid_argument("gaussian_ray_moment: bad arguments");
  const auto li = detail::log_ray_moments(n + 2, a, b, r);
  const double rho1 = std::exp(li[n + 1] - li[n]);
  const double rho2 = std::exp(li[n + 2] - li[n]);
  const double t0 = a * r + b;
  double d_r0 = 0.0;
  if (r > 0.0) d_r0 = -std::exp(n * std::log(r) - t0 * t0 - li[n]);
  else if (n == 0) d_r0 = -std::exp(-t0 * t0 - li[n]);
  const double d_a = -2.0 * a * rho2 - 2.0 * b * rho1;
  const double d_b = -2.0 * a * rho1 - 2.0 * b;
  JetDerivatives g = A.derivatives() * d_a;
  if (B.derivatives().size() == g.size()) g += B.derivatives() * d_b;
  if (r0.derivatives().size() == g.size()) g += r0.derivatives() * d_r0;
  return Jet(li[n], g);
}

// ---------------------------------------------------------------------------
// alpha-projection densities.

struct DensityOptions {
  double solid_angle_exponent = -1.0; // kappa; negative selects d - 1
  double boundary_weight = 1.0;       // measure weight of the boundary part

  double kappa(int d) const { return solid_angle_exponent < 0.0 ? d - 1.0 : solid_angle_exponent; }
};

/// Density on the boundary of A_s (w.r.t. surface measure) of alpha-projected
/// Gaussian samples, at boundary point b reached through `binding`:
///   q(b) = cos(theta) r0^-kappa ∫_{r0}^∞ p(c + r u) r^(d-1) dr,
/// with the radial integral reduced to a ray moment after completing the square.
template <class T>
T alpha_boundary_logprob(const GaussianHeadT<T> &h, const VecT<T> &b, const Binding &binding,
                         const ConstraintInstance &inst, const Vec &c_s, const DensityOptions &opt = {}) {
  using std::exp;
  using std::log;
  using std::sqrt;
  const int d = inst.dim();
  const VecT<T> v = b - c_s.cast<T>();
  const T r0 = v.norm();
  const VecT<T> u = v / r0;
  const Vec uv = u.unaryExpr([](const T &x) { return scalar::value(x); });
  const Vec bv = b.unaryExpr([](const T &x) { return scalar::value(x); });

  T cos_theta;
  if (binding.kind == Binding::Kind::Ellipse) {
    const auto &E = *inst.ellipse;
    const VecT<T> g = E.Q.cast<T>() * (b - E.c.cast<T>());
    cos_theta = g.dot(u) / g.norm();
  } else {
    cos_theta = scalar::constant<T>(0.0, r0);
    const Vec n = outward_normal(inst, binding, bv);
    for (int i = 0; i < d; ++i) cos_theta += n[i] * u[i];
  }
  if (!(scalar::value(cos_theta) > 0.0))
    throw std::logic_error("alpha_boundary_logprob: ray does not exit through the boundary at b");
  (void)uv;

  // exponent along the ray: -(a2 r^2 + 2 a1 r + a0) = -(A r + B)^2 - (a0 - B^2)
  T a2 = scalar::constant<T>(0.0, r0), a1 = a2, a0 = a2, log_sigma = a2;
  for (int i = 0; i < d; ++i) {
    const T inv2var = 0.5 * exp(-2.0 * h.log_std[i]);
    const T delta = c_s[i] - h.mean[i];
    a2 += u[i] * u[i] * inv2var;
    a1 += u[i] * delta * inv2var;
    a0 += delta * delta * inv2var;
    log_sigma += h.log_std[i];
  }
  const T A = sqrt(a2);
  const T B = a1 / A;
  T log_moment;
  if constexpr (std::is_same_v<T, double>) log_moment = log_gaussian_ray_moment(d - 1, A, B, r0);
  else log_moment = log_gaussian_ray_moment(d - 1, A, B, r0);
  const T log_gauss_const = -0.5 * d * std::log(2.0 * std::numbers::pi) - log_sigma - (a0 - B * B);
  return log(cos_theta) - opt.kappa(d) * log(r0) + log_gauss_const + log_moment -
         std::log(opt.boundary_weight);
}

inline double alpha_boundary_logprob(const GaussianHead &h, const Vec &b, const ConstraintInstance &inst,
                                     const Vec &c_s, const DensityOptions &opt = {}) {
  if (!(min_slack(inst, b) > -1e-6 && min_slack(inst, b) < 1e-6))
    throw std::invalid_argument("alpha_boundary_logprob: b must lie on the boundary");
  const auto ex = ray_exit<double>(inst, c_s, Vec(b - c_s));
  return alpha_boundary_logprob<double>(h, b, ex.binding, inst, c_s, opt);
}

template <class T> struct MixedDensityValueT {
  enum class Support { Interior, Boundary };
  T log_prob;
  Support support = Support::Interior;
};

using MixedDensityValue = MixedDensityValueT<double>;

/// Log-density of alpha-projected Gaussian samples: the Gaussian density on
/// the interior, the cone-integrated density on the boundary.
template <class T>
MixedDensityValueT<T> alpha_logprob(const GaussianHeadT<T> &h, const VecT<T> &pre_map, const ConstraintInstance &inst,
                                    const Vec &c_s, const DensityOptions &opt = {}) {
  const auto av = alpha_value<T>(pre_map, inst, c_s);
  if (!av.clipped) return {gaussian_logprob(h, pre_map), MixedDensityValueT<T>::Support::Interior};
  return {alpha_boundary_logprob<T>(h, av.action, av.binding, inst, c_s, opt),
          MixedDensityValueT<T>::Support::Boundary};
}

inline MixedDensityValue alpha_logprob(const GaussianHead &h, const Vec &pre_map, const ConstraintInstance &inst,
                                       const Vec &c_s, const DensityOptions &opt = {}) {
  check_head(h);
  return alpha_logprob<double>(h, pre_map, inst, c_s, opt);
}

} // namespace acrl
