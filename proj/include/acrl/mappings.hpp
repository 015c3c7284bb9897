#pragma once

#include "acrl/projection.hpp"

#include <optional>
#include <string_view>

namespace acrl {

enum class MappingKind { ClosestPoint, AlphaProjection, RadialSquashing, Identity };

inline std::string_view mapping_name(MappingKind k) {
  switch (k) {
  case MappingKind::ClosestPoint: return "closest";
  case MappingKind::AlphaProjection: return "alpha";
  case MappingKind::RadialSquashing: return "radial";
  case MappingKind::Identity: return "identity";
  }
  return "?";
}

struct MappingOutput {
  Vec action;
  std::optional<Mat> jacobian;
  std::optional<double> logdet;
  bool on_boundary = false;
  bool degenerate = false; // closest-point Jacobian could not be certified
  bool tie = false;        // two constraints bind at once (branch choice arbitrary)
};

/// Per-coordinate a_max * tanh(u).
template <class T> VecT<T> squash_box(const VecT<T> &u, const ActionSpace &space) {
  VecT<T> out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = space.a_max[i] * scalar::tanh_(u[i]);
  return out;
}

inline Vec squash_box(const Vec &u, const ActionSpace &space) { return squash_box<double>(u, space); }

/// Interior anchor c_s: the Chebyshev center for polytopes, the ellipse
/// center when it is strictly feasible, otherwise a strictly feasible point
/// near the projection of the polytope's Chebyshev center.
inline Vec select_center(const ConstraintInstance &inst) {
  if (inst.center) return *inst.center;
  const int d = inst.dim();
  if (inst.box_only()) return Vec::Zero(d);
  if (!inst.ellipse) return chebyshev_center(inst).center;
  const Vec &ce = inst.ellipse->c;
  if (min_slack(inst, ce) > 1e-9) return ce;
  ConstraintInstance poly = inst;
  poly.ellipse.reset();
  const Vec cheb = poly.box_only() ? Vec::Zero(d) : chebyshev_center(poly).center;
  const Vec p = project(cheb, inst).point;
  for (const Vec &toward : {ce, cheb}) {
    for (double t = 0.5; t > 1e-6; t *= 0.5) {
      const Vec x = p + t * (toward - p);
      if (min_slack(inst, x) > 1e-9) return x;
    }
  }
  throw SolverError("select_center: feasible set has empty interior");
}

/// Returns a copy of the instance with its anchor filled in.
inline ConstraintInstance with_center(ConstraintInstance inst) {
  if (!inst.center) inst.center = select_center(inst);
  return inst;
}

// ---------------------------------------------------------------------------
// Closest point.

inline MappingOutput map_closest(const Vec &a, const ConstraintInstance &inst, bool want_jacobian) {
  const auto res = project(a, inst);
  MappingOutput out;
  out.action = res.point;
  out.on_boundary = res.on_boundary();
  if (want_jacobian) {
    out.jacobian = projection_jacobian(res, inst);
    out.degenerate = !out.jacobian.has_value();
  }
  return out;
}

// ---------------------------------------------------------------------------
// alpha-projection.

template <class T> struct AlphaValue {
  VecT<T> action;
  T lambda;
  bool clipped = false;
  Binding binding;
  bool tie = false;
};

/// Shrinks a toward c along the ray until it enters A_s; identity on A_s.
template <class T>
AlphaValue<T> alpha_value(const VecT<T> &a, const ConstraintInstance &inst, const Vec &c) {
  const Vec av = a.unaryExpr([](const T &x) { return scalar::value(x); });
  AlphaValue<T> out{a, scalar::constant<T>(1.0, a[0]), false, {}, false};
  if (contains(inst, av, 0.0)) return out;
  const VecT<T> v = a - c.cast<T>();
  const auto ex = ray_exit<T>(inst, c, v);
  if (scalar::value(ex.t) >= 1.0) return out;
  out.lambda = ex.t;
  out.action = c.cast<T>() + ex.t * v;
  out.clipped = true;
  out.binding = ex.binding;
  out.tie = ex.tie;
  return out;
}

inline MappingOutput map_alpha(const Vec &a, const ConstraintInstance &inst, const Vec &c_s) {
  const int d = inst.dim();
  const auto av = alpha_value<double>(a, inst, c_s);
  MappingOutput out;
  out.action = av.action;
  out.on_boundary = av.clipped;
  out.tie = av.tie;
  if (!av.clipped) {
    out.jacobian = Mat::Identity(d, d);
    out.logdet = 0.0;
    return out;
  }
  // J = lambda (I - v n^T / (n^T v)), n the outward normal of the binding
  // constraint at the clipped point.
  const Vec v = a - c_s;
  const Vec n = outward_normal(inst, av.binding, av.action);
  out.jacobian = av.lambda * (Mat::Identity(d, d) - v * n.transpose() / n.dot(v));
  return out;
}

// ---------------------------------------------------------------------------
// Radial squashing.

template <class T> struct RadialValue {
  VecT<T> action;
  T L;              // ||a - c|| / ||b - c||
  bool at_center = false;
  Binding binding;
  bool tie = false;
};

template <class T>
RadialValue<T> radial_value(const VecT<T> &a, const ConstraintInstance &inst, const Vec &c) {
  const VecT<T> v = a - c.cast<T>();
  const Vec vv = v.unaryExpr([](const T &x) { return scalar::value(x); });
  RadialValue<T> out{a, scalar::constant<T>(0.0, a[0]), true, {}, false};
  if (vv.norm() < 1e-12) {
    out.action = c.cast<T>() + v; // exact limit: identity Jacobian at the center
    return out;
  }
  const auto ex = ray_exit<T>(inst, c, v);
  const T L = 1.0 / ex.t;
  const T phi = scalar::tanh_(L) / L;
  out.action = c.cast<T>() + phi * v;
  out.L = L;
  out.at_center = false;
  out.binding = ex.binding;
  out.tie = ex.tie;
  return out;
}

/// log|det J| of radial squashing as a function of L alone:
/// (d-1) log(tanh L / L) + log(1 - tanh^2 L).
template <class T> T radial_logdet(const T &L, int d) {
  using std::log;
  if (scalar::value(L) < 1e-8) return scalar::constant<T>(0.0, L) * L;
  return (d - 1.0) * log(scalar::tanh_(L) / L) + scalar::log1m_tanh2(L);
}

inline MappingOutput map_radial(const Vec &a, const ConstraintInstance &inst, const Vec &c_s) {
  const int d = inst.dim();
  const auto rv = radial_value<double>(a, inst, c_s);
  MappingOutput out;
  out.action = rv.action;
  out.on_boundary = false;
  out.tie = rv.tie;
  if (rv.at_center) {
    out.jacobian = Mat::Identity(d, d);
    out.logdet = 0.0;
    return out;
  }
  // J = phi I + (sech^2 L - phi) v n^T / (n^T v), phi = tanh(L)/L; the
  // rank-one term comes from grad L = L n / (n^T v).
  const double L = rv.L;
  const double t = std::tanh(L);
  const double phi = t / L;
  const Vec v = a - c_s;
  const Vec b = c_s + v / L;
  const Vec n = outward_normal(inst, rv.binding, b);
  out.jacobian = phi * Mat::Identity(d, d) + ((1.0 - t * t) - phi) * v * n.transpose() / n.dot(v);
  out.logdet = radial_logdet<double>(L, d);
  return out;
}

/// Applies a mapping by kind. Closest-point Jacobians only when requested.
inline MappingOutput apply_mapping(MappingKind kind, const Vec &a, const ConstraintInstance &inst,
                                   bool want_jacobian) {
  switch (kind) {
  case MappingKind::Identity: {
    MappingOutput out;
    out.action = a;
    if (want_jacobian) out.jacobian = Mat::Identity(a.size(), a.size());
    out.logdet = 0.0;
    return out;
  }
  case MappingKind::ClosestPoint: return map_closest(a, inst, want_jacobian);
  case MappingKind::AlphaProjection: return map_alpha(a, inst, select_center(inst));
  case MappingKind::RadialSquashing: return map_radial(a, inst, select_center(inst));
  }
  throw std::logic_error("apply_mapping: unknown kind");
}

} // namespace acrl
