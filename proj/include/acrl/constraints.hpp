#pragma once

#include "acrl/common.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace acrl {

/// Per-coordinate box [-a_max, a_max]. Every feasible set lives inside it.
struct ActionSpace {
  Vec a_max;

  ActionSpace() = default;
  explicit ActionSpace(Vec half_widths) : a_max(std::move(half_widths)) {
    if (a_max.size() == 0)
      throw std::invalid_argument("ActionSpace: dimension must be positive");
    if ((a_max.array() <= 0.0).any() || !a_max.allFinite())
      throw std::invalid_argument("ActionSpace: half-widths must be positive");
  }

  static ActionSpace unit(int d) { return ActionSpace(Vec::Ones(d)); }

  int dim() const { return static_cast<int>(a_max.size()); }
};

/// Halfspaces A x <= b with unit-norm rows.
struct LinearConstraints {
  Mat A;
  Vec b;

  int rows() const { return static_cast<int>(A.rows()); }
};

/// Normalizes every row to unit length and merges rows that coincide within
/// 1e-10 (keeping the tighter offset).
inline LinearConstraints make_linear(const Mat &A, const Vec &b) {
  if (A.rows() != b.size())
    throw std::invalid_argument("make_linear: row count mismatch");
  std::vector<Vec> rows;
  std::vector<double> offs;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double n = A.row(i).norm();
    if (!(n > 0.0))
      throw std::invalid_argument("make_linear: zero constraint row");
    Vec g = A.row(i).transpose() / n;
    const double h = b[i] / n;
    bool merged = false;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if ((rows[k] - g).cwiseAbs().maxCoeff() <= 1e-10) {
        offs[k] = std::min(offs[k], h);
        merged = true;
        break;
      }
    }
    if (!merged) {
      rows.push_back(std::move(g));
      offs.push_back(h);
    }
  }
  LinearConstraints out;
  out.A.resize(static_cast<Eigen::Index>(rows.size()), A.cols());
  out.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.A.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
    out.b[static_cast<Eigen::Index>(k)] = offs[k];
  }
  return out;
}

/// (a - c)^T Q (a - c) <= bound, with Q strictly positive definite.
struct EllipticalConstraint {
  Mat Q;
  Vec c;
  double bound = 0.0;
  // Eigendecomposition of Q, cached for the closed-form ellipsoid projector.
  Vec eigenvalues;
  Mat eigenvectors;

  double value(const Vec &a) const {
    const Vec r = a - c;
    return r.dot(Q * r);
  }
};

/// Builds an ellipse from a PSD form. A (near-)singular Q is replaced by
/// Q + eps*I with eps = 1e-6 * trace(Q) / d; the bound is kept, so the stored
/// set is a subset of the requested one.
inline EllipticalConstraint make_ellipse(const Mat &Q, const Vec &c, double bound) {
  const auto d = Q.rows();
  if (Q.cols() != d || c.size() != d)
    throw std::invalid_argument("make_ellipse: shape mismatch");
  if (!(bound >= 0.0))
    throw std::invalid_argument("make_ellipse: bound must be nonnegative");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + Q.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("make_ellipse: Q must be symmetric");
  const Mat Qs = 0.5 * (Q + Q.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(Qs);
  const double tr = Qs.trace();
  if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + std::abs(tr)))
    throw std::invalid_argument("make_ellipse: Q must be positive semidefinite");
  if (!(tr > 0.0))
    throw std::invalid_argument("make_ellipse: Q must be nonzero");
  EllipticalConstraint e;
  const double eps = 1e-6 * tr / static_cast<double>(d);
  e.Q = Qs;
  if (es.eigenvalues().minCoeff() < eps) {
    e.Q += eps * Mat::Identity(d, d);
    es.compute(e.Q);
  }
  e.c = c;
  e.bound = bound;
  e.eigenvalues = es.eigenvalues();
  e.eigenvectors = es.eigenvectors();
  return e;
}

/// A state-evaluated feasible set: box ∩ halfspaces ∩ (optional) ellipse.
struct ConstraintInstance {
  ActionSpace space;
  std::optional<LinearConstraints> linear;
  std::optional<EllipticalConstraint> ellipse;
  std::optional<Vec> center;

  int dim() const { return space.dim(); }
  bool box_only() const { return !linear && !ellipse; }
  int linear_rows() const { return linear ? linear->rows() : 0; }
};

// ---------------------------------------------------------------------------
// Catalog of constraint families.

enum class Family { N, L2, O, M, T, OS, MA };

inline std::string_view family_name(Family f) {
  switch (f) {
  case Family::N: return "N";
  case Family::L2: return "L2";
  case Family::O: return "O";
  case Family::M: return "M";
  case Family::T: return "T";
  case Family::OS: return "O+S";
  case Family::MA: return "MA";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  for (Family f : {Family::N, Family::L2, Family::O, Family::M, Family::T, Family::OS, Family::MA})
    if (family_name(f) == s) return f;
  throw std::invalid_argument("unknown constraint family: " + std::string(s));
}

struct ConstraintSpec {
  Family family = Family::N;
  std::map<std::string, double> params;

  double param(const std::string &name) const {
    auto it = params.find(name);
    if (it != params.end()) return it->second;
    return default_param(family, name);
  }

  /// Table 2 constants used when a parameter is not given.
  static double default_param(Family f, const std::string &name) {
    if (f == Family::L2 && name == "radius2") return 0.05;
    if (f == Family::O && name == "M") return 1.0;
    if (f == Family::M && name == "M") return 1.0;
    if (f == Family::T && name == "bound") return 0.05;
    if (f == Family::OS && name == "M") return 10.0;
    if (f == Family::OS && name == "S") return 0.1;
    if (f == Family::MA && name == "M") return 5.0;
    throw std::invalid_argument("constraint family " + std::string(family_name(f)) +
                                " has no parameter '" + name + "'");
  }
};

/// Joint angles and angular velocities consumed by the catalog.
struct JointState {
  Vec theta;
  Vec omega;
};

namespace detail {

inline void require_positive(double v, const char *what) {
  if (!(v > 0.0)) throw std::invalid_argument(std::string("constraint parameter must be positive: ") + what);
}

inline void require_sign_pattern_dim(int d) {
  if (d > kMaxActionDim)
    throw std::invalid_argument("sign-pattern families support at most 8 dimensions");
}

/// sum_i |w_i a_i| <= M as the 2^k halfspaces over the nonzero weights.
inline std::optional<LinearConstraints> abs_budget(const Vec &w, double M) {
  std::vector<int> active;
  for (int i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) active.push_back(i);
  if (active.empty()) return std::nullopt;
  const int k = static_cast<int>(active.size());
  const int patterns = 1 << k;
  Mat A = Mat::Zero(patterns, w.size());
  Vec b = Vec::Constant(patterns, M);
  for (int p = 0; p < patterns; ++p)
    for (int j = 0; j < k; ++j)
      A(p, active[j]) = ((p >> j) & 1 ? -1.0 : 1.0) * w[active[j]];
  return make_linear(A, b);
}

/// sum_i max{w_i a_i, 0} <= M as one halfspace per nonempty subset of the
/// nonzero weights.
inline std::optional<LinearConstraints> positive_budget(const Vec &w, double M) {
  std::vector<int> active;
  for (int i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) active.push_back(i);
  if (active.empty()) return std::nullopt;
  const int k = static_cast<int>(active.size());
  const int subsets = (1 << k) - 1;
  Mat A = Mat::Zero(subsets, w.size());
  Vec b = Vec::Constant(subsets, M);
  for (int s = 1; s <= subsets; ++s)
    for (int j = 0; j < k; ++j)
      if ((s >> j) & 1) A(s - 1, active[j]) = w[active[j]];
  return make_linear(A, b);
}

} // namespace detail

bool contains(const ConstraintInstance &inst, const Vec &a, double tol);

/// Evaluates a catalog family at the given joint readout.
inline ConstraintInstance instantiate(const ConstraintSpec &spec, const ActionSpace &space,
                                      const JointState &joints) {
  const int d = space.dim();
  ConstraintInstance inst;
  inst.space = space;
  auto need_joints = [&] {
    if (joints.theta.size() != d || joints.omega.size() != d)
      throw std::invalid_argument("instantiate: joint readout must have one entry per action dimension");
  };
  switch (spec.family) {
  case Family::N:
    break;
  case Family::L2: {
    const double r2 = spec.param("radius2");
    detail::require_positive(r2, "radius2");
    inst.ellipse = make_ellipse(Mat::Identity(d, d), Vec::Zero(d), r2);
    break;
  }
  case Family::O: {
    need_joints();
    detail::require_sign_pattern_dim(d);
    const double M = spec.param("M");
    detail::require_positive(M, "M");
    inst.linear = detail::abs_budget(joints.omega, M);
    break;
  }
  case Family::M: {
    need_joints();
    detail::require_sign_pattern_dim(d);
    const double M = spec.param("M");
    detail::require_positive(M, "M");
    inst.linear = detail::positive_budget(joints.omega, M);
    break;
  }
  case Family::T: {
    need_joints();
    if (d != 2) throw std::invalid_argument("family T is defined for two joints");
    const double bound = spec.param("bound");
    detail::require_positive(bound, "bound");
    // a1^2 + 2 a1 (a1 + a2) cos(theta2) + (a1 + a2)^2
    const double cs = std::cos(joints.theta[1]);
    Mat Q(2, 2);
    Q << 2.0 + 2.0 * cs, 1.0 + cs, 1.0 + cs, 1.0;
    inst.ellipse = make_ellipse(Q, Vec::Zero(2), bound);
    break;
  }
  case Family::OS: {
    need_joints();
    detail::require_sign_pattern_dim(d);
    const double M = spec.param("M");
    const double S = spec.param("S");
    detail::require_positive(M, "M");
    detail::require_positive(S, "S");
    inst.linear = detail::abs_budget(joints.omega, M);
    Vec diag(d);
    for (int i = 0; i < d; ++i) diag[i] = scalar::sqr(std::sin(joints.theta[i]));
    if (diag.sum() > 1e-12) inst.ellipse = make_ellipse(diag.asDiagonal().toDenseMatrix(), Vec::Zero(d), S);
    break;
  }
  case Family::MA: {
    need_joints();
    const double M = spec.param("M");
    detail::require_positive(M, "M");
    // Joints split into a leading and a trailing group; each group's first
    // actuator is weighted by the sine of the group's summed angle.
    const int h = (d + 1) / 2;
    Mat A = Mat::Zero(1, d);
    A(0, 0) = joints.omega[0] * std::sin(joints.theta.head(h).sum());
    if (h < d) A(0, h) = joints.omega[h] * std::sin(joints.theta.tail(d - h).sum());
    if (A.norm() > 0.0) inst.linear = make_linear(A, Vec::Constant(1, M));
    break;
  }
  }
  if (!contains(inst, Vec::Zero(d), -1e-12))
    throw std::invalid_argument("instantiate: feasible set has empty interior");
  return inst;
}

/// Feasibility within an additive tolerance on every constraint. A negative
/// tolerance tests strict feasibility with that margin.
inline bool contains(const ConstraintInstance &inst, const Vec &a, double tol) {
  if (a.size() != inst.dim()) throw std::invalid_argument("contains: dimension mismatch");
  if (!a.allFinite()) return false;
  if ((a.cwiseAbs() - inst.space.a_max).maxCoeff() > tol) return false;
  if (inst.linear && inst.linear->rows() > 0 &&
      (inst.linear->A * a - inst.linear->b).maxCoeff() > tol)
    return false;
  if (inst.ellipse && inst.ellipse->value(a) - inst.ellipse->bound > tol) return false;
  return true;
}

/// Smallest constraint slack (negative when violated). Box, rows and ellipse
/// all count.
inline double min_slack(const ConstraintInstance &inst, const Vec &a) {
  double s = (inst.space.a_max - a.cwiseAbs()).minCoeff();
  if (inst.linear && inst.linear->rows() > 0)
    s = std::min(s, (inst.linear->b - inst.linear->A * a).minCoeff());
  if (inst.ellipse) s = std::min(s, inst.ellipse->bound - inst.ellipse->value(a));
  return s;
}

// ---------------------------------------------------------------------------
// Ray geometry.

/// Which constraint a ray from an interior point leaves the set through.
struct Binding {
  enum class Kind { Box, Linear, Ellipse } kind = Kind::Box;
  int index = 0;     // coordinate for Box, row for Linear
  double sign = 1.0; // +1 upper face, -1 lower face (Box only)
};

template <class T> struct RayExit {
  T t;          // origin + t * v is on the boundary
  Binding binding;
  bool tie = false; // a second constraint binds within 1e-12 relative
};

/// Positive root of qa t^2 + qb t + qc = 0 with qc < 0 < qa, without
/// cancellation.
template <class T> T positive_root(const T &qa, const T &qb, const T &qc) {
  using std::sqrt;
  const T disc = qb * qb - 4.0 * qa * qc;
  if (scalar::value(qb) >= 0.0) return (-2.0 * qc) / (qb + sqrt(disc));
  return (-qb + sqrt(disc)) / (2.0 * qa);
}

/// Exit parameter along origin + t v (v need not be unit). origin must be
/// strictly feasible and v nonzero; the box guarantees a finite exit.
template <class T>
RayExit<T> ray_exit(const ConstraintInstance &inst, const Vec &origin, const VecT<T> &v) {
  const int d = inst.dim();
  double best = std::numeric_limits<double>::infinity();
  double second = best;
  Binding bind;
  auto consider = [&](double t, Binding b) {
    if (t < best) {
      second = best;
      best = t;
      bind = b;
    } else if (t < second) {
      second = t;
    }
  };
  for (int j = 0; j < d; ++j) {
    const double vj = scalar::value(v[j]);
    if (vj > 0.0) consider((inst.space.a_max[j] - origin[j]) / vj, {Binding::Kind::Box, j, 1.0});
    else if (vj < 0.0) consider((-inst.space.a_max[j] - origin[j]) / vj, {Binding::Kind::Box, j, -1.0});
  }
  if (inst.linear) {
    const auto &L = *inst.linear;
    for (int i = 0; i < L.rows(); ++i) {
      double gv = 0.0;
      for (int j = 0; j < d; ++j) gv += L.A(i, j) * scalar::value(v[j]);
      if (gv > 0.0) consider((L.b[i] - L.A.row(i).dot(origin)) / gv, {Binding::Kind::Linear, i, 1.0});
    }
  }
  const Vec vv = v.unaryExpr([](const T &x) { return scalar::value(x); });
  if (inst.ellipse) {
    const auto &E = *inst.ellipse;
    const Vec w = origin - E.c;
    const Vec Qv = E.Q * vv;
    const double qa = vv.dot(Qv), qb = 2.0 * Qv.dot(w), qc = w.dot(E.Q * w) - E.bound;
    if (qa > 0.0) consider(positive_root(qa, qb, qc), {Binding::Kind::Ellipse, 0, 1.0});
  }
  if (!std::isfinite(best)) throw std::invalid_argument("ray_exit: zero direction");

  RayExit<T> out{scalar::constant<T>(best, v[0]), bind, second <= best * (1.0 + 1e-12)};
  if constexpr (!std::is_same_v<T, double>) {
    // Recompute the binding branch with derivatives attached.
    switch (bind.kind) {
    case Binding::Kind::Box: {
      const int j = bind.index;
      out.t = (bind.sign * inst.space.a_max[j] - origin[j]) / v[j];
      break;
    }
    case Binding::Kind::Linear: {
      const auto &L = *inst.linear;
      T gv = scalar::constant<T>(0.0, v[0]);
      for (int j = 0; j < d; ++j) gv += L.A(bind.index, j) * v[j];
      out.t = (L.b[bind.index] - L.A.row(bind.index).dot(origin)) / gv;
      break;
    }
    case Binding::Kind::Ellipse: {
      const auto &E = *inst.ellipse;
      const Vec w = origin - E.c;
      const Vec Qw = E.Q * w;
      T qa = scalar::constant<T>(0.0, v[0]);
      T qb = scalar::constant<T>(0.0, v[0]);
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) qa += v[i] * E.Q(i, j) * v[j];
        qb += 2.0 * v[i] * Qw[i];
      }
      const double qc = w.dot(Qw) - E.bound;
      out.t = positive_root<T>(qa, qb, scalar::constant<T>(qc, v[0]));
      break;
    }
    }
  }
  return out;
}

/// Outward unit normal of the binding constraint at boundary point b.
inline Vec outward_normal(const ConstraintInstance &inst, const Binding &bind, const Vec &b) {
  const int d = inst.dim();
  switch (bind.kind) {
  case Binding::Kind::Box: {
    Vec n = Vec::Zero(d);
    n[bind.index] = bind.sign;
    return n;
  }
  case Binding::Kind::Linear:
    return inst.linear->A.row(bind.index).transpose();
  case Binding::Kind::Ellipse: {
    Vec n = inst.ellipse->Q * (b - inst.ellipse->c);
    return n / n.norm();
  }
  }
  return Vec::Zero(d);
}

struct RayHit {
  Vec point;   // on the boundary of A_s
  double r0;   // distance from origin
  Binding binding;
};

/// Boundary point hit by the ray from a strictly feasible origin.
inline RayHit ray_boundary_intersection(const ConstraintInstance &inst, const Vec &origin,
                                        const Vec &direction) {
  if (origin.size() != inst.dim() || direction.size() != inst.dim())
    throw std::invalid_argument("ray_boundary_intersection: dimension mismatch");
  if (!contains(inst, origin, 0.0) || min_slack(inst, origin) <= 0.0)
    throw std::invalid_argument("ray_boundary_intersection: origin must be strictly feasible");
  const double n = direction.norm();
  if (!(n > 0.0)) throw std::invalid_argument("ray_boundary_intersection: zero direction");
  const Vec u = direction / n;
  const auto ex = ray_exit<double>(inst, origin, u);
  return {origin + ex.t * u, ex.t, ex.binding};
}

// ---------------------------------------------------------------------------

/// Violation measure of a suggested action against the linear and elliptical
/// parts: ||max(Aa - b, 0)|| + max(sqrt(e'(a)) - sqrt(bound'), 0), where the
/// ellipse is rescaled so trace(Q') = d. The box is not penalized.
inline double violation_penalty(const ConstraintInstance &inst, const Vec &a) {
  double p = 0.0;
  if (inst.linear && inst.linear->rows() > 0)
    p += (inst.linear->A * a - inst.linear->b).cwiseMax(0.0).norm();
  if (inst.ellipse) {
    const auto &E = *inst.ellipse;
    const double scale = static_cast<double>(inst.dim()) / E.Q.trace();
    const double lhs = std::sqrt(std::max(0.0, scale * E.value(a)));
    p += std::max(lhs - std::sqrt(scale * E.bound), 0.0);
  }
  return p;
}

} // namespace acrl
