#pragma once

#include "acrl/lp.hpp"

#include <optional>
#include <sstream>
#include <vector>

namespace acrl {

/// Rows of the polytope part in a fixed order: linear rows, then the upper
/// box faces x_j <= a_max_j, then the lower faces -x_j <= a_max_j.
struct PolytopeRows {
  Mat G;
  Vec h;
};

inline PolytopeRows polytope_rows(const ConstraintInstance &inst) {
  const int d = inst.dim();
  const int k = inst.linear_rows();
  PolytopeRows r;
  r.G.resize(k + 2 * d, d);
  r.h.resize(k + 2 * d);
  if (k > 0) {
    r.G.topRows(k) = inst.linear->A;
    r.h.head(k) = inst.linear->b;
  }
  r.G.block(k, 0, d, d) = Mat::Identity(d, d);
  r.G.block(k + d, 0, d, d) = -Mat::Identity(d, d);
  r.h.segment(k, d) = inst.space.a_max;
  r.h.segment(k + d, d) = inst.space.a_max;
  return r;
}

/// Closest feasible point with its KKT certificate.
struct ProjectionResult {
  Vec point;
  std::vector<int> active_set; // polytope row indices (see polytope_rows)
  Vec multipliers;             // one per active row
  bool ellipse_active = false;
  double ellipse_multiplier = 0.0;
  bool query_feasible = false;

  bool on_boundary() const { return !active_set.empty() || ellipse_active; }
};

struct ProjectionOptions {
  int max_iterations = 10000;
  double activity_tol = 1e-8;
};

namespace detail {

struct QpState {
  Vec x;
  std::vector<int> working;
  Vec lambda;
  int iterations = 0;
};

/// Primal active-set method for min 1/2 x'Hx + f'x s.t. Gx <= h, started
/// from a feasible point. H must be positive definite.
inline void qp_active_set(const Mat &H, const Vec &f, const Mat &G, const Vec &h, QpState &st,
                          int max_iterations) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(G.rows());
  std::vector<char> in_w(static_cast<std::size_t>(m), 0);
  for (int i : st.working) in_w[static_cast<std::size_t>(i)] = 1;
  bool at_subspace_min = false; // set by an unblocked step
  for (int it = 0; it < max_iterations; ++it) {
    ++st.iterations;
    const int w = static_cast<int>(st.working.size());
    Mat K = Mat::Zero(n + w, n + w);
    K.topLeftCorner(n, n) = H;
    for (int a = 0; a < w; ++a) {
      K.block(0, n + a, n, 1) = G.row(st.working[a]).transpose();
      K.block(n + a, 0, 1, n) = G.row(st.working[a]);
    }
    Vec rhs = Vec::Zero(n + w);
    rhs.head(n) = -(H * st.x + f);
    const Vec sol = K.partialPivLu().solve(rhs);
    const Vec p = sol.head(n);
    st.lambda = sol.tail(w);
    // after an unblocked step or on a vertex any residual step is roundoff
    if (at_subspace_min || w >= n || p.norm() <= 1e-13 * (1.0 + st.x.norm())) {
      at_subspace_min = false;
      int drop = -1;
      double most = -1e-12;
      for (int a = 0; a < w; ++a) {
        if (st.lambda[a] < most) {
          most = st.lambda[a];
          drop = a;
        }
      }
      if (drop < 0) return;
      in_w[static_cast<std::size_t>(st.working[drop])] = 0;
      st.working.erase(st.working.begin() + drop);
      continue;
    }
    double alpha = 1.0;
    int block = -1;
    for (int i = 0; i < m; ++i) {
      if (in_w[static_cast<std::size_t>(i)]) continue;
      const double gp = G.row(i).dot(p);
      if (gp <= 1e-14) continue;
      const double ai = std::max(0.0, (h[i] - G.row(i).dot(st.x)) / gp);
      if (ai < alpha) {
        alpha = ai;
        block = i;
      }
    }
    st.x += alpha * p;
    at_subspace_min = block < 0;
    if (block >= 0) {
      st.working.push_back(block);
      in_w[static_cast<std::size_t>(block)] = 1;
    }
  }
  throw SolverError("projection: active-set iteration cap reached");
}

/// Feasible starting point for the polytope part.
inline Vec polytope_start(const ConstraintInstance &inst) {
  if (inst.center) return *inst.center;
  const Vec zero = Vec::Zero(inst.dim());
  if (!inst.linear || (inst.linear->A * zero - inst.linear->b).maxCoeff() <= 0.0) return zero;
  ConstraintInstance poly = inst;
  poly.ellipse.reset();
  return chebyshev_center(poly).center;
}

struct EllipsoidProjection {
  Vec x;
  double nu = 0.0; // multiplier of (x-c)'Q(x-c) <= bound
};

/// Closed-form projector onto a single ellipsoid; Newton on the scalar
/// multiplier applied to 1/sqrt(e(nu)), which is linear for balls.
inline EllipsoidProjection ellipsoid_project(const EllipticalConstraint &E, const Vec &y) {
  const Vec z = E.eigenvectors.transpose() * (y - E.c);
  const Vec &lam = E.eigenvalues;
  auto e_of = [&](double nu) {
    double e = 0.0, de = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      const double den = 1.0 + 2.0 * nu * lam[i];
      e += lam[i] * z[i] * z[i] / (den * den);
      de += -4.0 * lam[i] * lam[i] * z[i] * z[i] / (den * den * den);
    }
    return std::pair{e, de};
  };
  if (e_of(0.0).first <= E.bound) return {y, 0.0};
  const double target = 1.0 / std::sqrt(E.bound);
  double nu = 0.0;
  for (int it = 0; it < 200; ++it) {
    const auto [e, de] = e_of(nu);
    const double g = 1.0 / std::sqrt(e) - target;
    const double dg = -0.5 * de / (e * std::sqrt(e));
    const double next = std::max(0.0, nu - g / dg);
    const bool done = std::abs(next - nu) <= 1e-15 * (1.0 + nu);
    nu = next;
    if (done) break;
  }
  Vec xz(z.size());
  for (int i = 0; i < z.size(); ++i) xz[i] = z[i] / (1.0 + 2.0 * nu * lam[i]);
  Vec x = E.c + E.eigenvectors * xz;
  const double e = E.value(x);
  if (e > E.bound) x = E.c + (x - E.c) * std::sqrt(E.bound / e);
  return {x, nu};
}

} // namespace detail

/// Euclidean projection onto A_s with KKT data. Polytopes use a primal
/// active-set QP; with an ellipse present the ellipse multiplier is found by
/// a bracketed root search over penalized polytope QPs.
inline ProjectionResult project(const Vec &query, const ConstraintInstance &inst,
                                const ProjectionOptions &opt = {}) {
  const int d = inst.dim();
  if (query.size() != d) throw std::invalid_argument("project: dimension mismatch");
  if (!query.allFinite()) throw std::invalid_argument("project: non-finite query");
  ProjectionResult res;
  if (contains(inst, query, 0.0)) {
    res.point = query;
    res.multipliers = Vec(0);
    res.query_feasible = true;
    return res;
  }
  const PolytopeRows rows = polytope_rows(inst);
  const int k = inst.linear_rows();
  const Mat I = Mat::Identity(d, d);

  auto finish_polytope = [&](detail::QpState &st) {
    res.point = st.x;
    res.active_set = st.working;
    res.multipliers = st.lambda.cwiseMax(0.0);
  };

  if (inst.box_only()) {
    res.point = query.cwiseMax(-inst.space.a_max).cwiseMin(inst.space.a_max);
    std::vector<double> mult;
    for (int j = 0; j < d; ++j) {
      if (query[j] > inst.space.a_max[j]) {
        res.active_set.push_back(k + j);
        mult.push_back(query[j] - inst.space.a_max[j]);
      } else if (query[j] < -inst.space.a_max[j]) {
        res.active_set.push_back(k + d + j);
        mult.push_back(-inst.space.a_max[j] - query[j]);
      }
    }
    res.multipliers = Eigen::Map<Vec>(mult.data(), static_cast<Eigen::Index>(mult.size()));
    return res;
  }

  auto polytope_qp = [&](double mu, detail::QpState &st) {
    Mat H = I;
    Vec f = -query;
    if (mu > 0.0) {
      const auto &E = *inst.ellipse;
      H += 2.0 * mu * E.Q;
      f -= 2.0 * mu * (E.Q * E.c);
    }
    detail::qp_active_set(H, f, rows.G, rows.h, st, opt.max_iterations);
  };

  if (!inst.ellipse) {
    detail::QpState st{detail::polytope_start(inst), {}, Vec(0), 0};
    polytope_qp(0.0, st);
    finish_polytope(st);
  } else {
    const auto &E = *inst.ellipse;
    const auto ep = detail::ellipsoid_project(E, query);
    const bool ep_in_polytope = (rows.G * ep.x - rows.h).maxCoeff() <= 0.0;
    if (ep_in_polytope) {
      res.point = ep.x;
      res.multipliers = Vec(0);
      res.ellipse_active = true;
      res.ellipse_multiplier = ep.nu;
    } else {
      detail::QpState st{detail::polytope_start(inst), {}, Vec(0), 0};
      polytope_qp(0.0, st);
      auto phi = [&](const Vec &x) { return E.value(x) - E.bound; };
      if (phi(st.x) <= 0.0) {
        finish_polytope(st);
      } else {
        // phi(x(mu)) is nonincreasing in mu; bracket its root and keep the
        // feasible (phi <= 0) side.
        double lo = 0.0, phi_lo = phi(st.x);
        double hi = std::max(ep.nu, 1e-6);
        detail::QpState st_hi = st;
        polytope_qp(hi, st_hi);
        double phi_hi = phi(st_hi.x);
        int guard = 0;
        while (phi_hi > 0.0) {
          lo = hi;
          phi_lo = phi_hi;
          hi *= 4.0;
          polytope_qp(hi, st_hi);
          phi_hi = phi(st_hi.x);
          if (++guard > 200) throw SolverError("project: ellipse multiplier bracket failed");
        }
        detail::QpState st_mid = st_hi;
        int side = 0;
        for (int it = 0; it < 200 && phi_hi < -1e-13 * (1.0 + E.bound); ++it) {
          if (hi - lo <= 1e-15 * hi) break;
          // Illinois false position.
          double mu = hi - phi_hi * (hi - lo) / (phi_hi - phi_lo);
          if (!(mu > lo && mu < hi)) mu = 0.5 * (lo + hi);
          polytope_qp(mu, st_mid);
          const double pm = phi(st_mid.x);
          if (pm > 0.0) {
            lo = mu;
            phi_lo = pm;
            if (side == -1) phi_hi *= 0.5;
            side = -1;
          } else {
            hi = mu;
            phi_hi = pm;
            st_hi = st_mid;
            if (side == 1) phi_lo *= 0.5;
            side = 1;
          }
        }
        finish_polytope(st_hi);
        res.ellipse_active = true;
        res.ellipse_multiplier = hi;
      }
    }
  }

  // Certificate: feasibility, stationarity and dual feasibility.
  Vec station = res.point - query;
  for (std::size_t a = 0; a < res.active_set.size(); ++a)
    station += res.multipliers[static_cast<Eigen::Index>(a)] * rows.G.row(res.active_set[a]).transpose();
  if (res.ellipse_active)
    station += 2.0 * res.ellipse_multiplier * (inst.ellipse->Q * (res.point - inst.ellipse->c));
  if (!contains(inst, res.point, 1e-8) || station.norm() > 1e-6 * (1.0 + query.norm())) {
    std::ostringstream os;
    os << "project: KKT certification failed (stationarity " << station.norm() << ", min slack "
       << min_slack(inst, res.point) << ")";
    throw SolverError(os.str());
  }
  return res;
}

/// Derivative of the projection with respect to the query, by implicit
/// differentiation of the full KKT system (all rows, complementary slackness
/// included). Returns nullopt when strict complementarity or linear
/// independence of the active gradients fails.
inline std::optional<Mat> projection_jacobian(const ProjectionResult &res,
                                              const ConstraintInstance &inst,
                                              const ProjectionOptions &opt = {}) {
  const int d = inst.dim();
  if (res.query_feasible) return Mat::Identity(d, d);
  const PolytopeRows rows = polytope_rows(inst);
  const int m = static_cast<int>(rows.G.rows());
  const double tight = opt.activity_tol * (1.0 + rows.h.cwiseAbs().maxCoeff());

  Vec lambda = Vec::Zero(m);
  std::vector<char> in_w(static_cast<std::size_t>(m), 0);
  for (std::size_t a = 0; a < res.active_set.size(); ++a) {
    const double l = res.multipliers[static_cast<Eigen::Index>(a)];
    if (!(l > opt.activity_tol)) return std::nullopt;
    lambda[res.active_set[a]] = l;
    in_w[static_cast<std::size_t>(res.active_set[a])] = 1;
  }
  const Vec slack = rows.h - rows.G * res.point;
  for (int i = 0; i < m; ++i)
    if (!in_w[static_cast<std::size_t>(i)] && slack[i] <= tight) return std::nullopt;

  const bool has_e = inst.ellipse.has_value();
  double mu = 0.0, e_slack = 0.0;
  Vec grad_e;
  if (has_e) {
    const auto &E = *inst.ellipse;
    grad_e = 2.0 * E.Q * (res.point - E.c);
    e_slack = E.bound - E.value(res.point);
    if (res.ellipse_active) {
      mu = res.ellipse_multiplier;
      if (!(mu > opt.activity_tol)) return std::nullopt;
    } else if (e_slack <= tight) {
      return std::nullopt;
    }
  }

  // Active gradients must be linearly independent.
  const int na = static_cast<int>(res.active_set.size()) + (res.ellipse_active ? 1 : 0);
  if (na > d) return std::nullopt;
  if (na > 0) {
    Mat Ga(na, d);
    for (std::size_t a = 0; a < res.active_set.size(); ++a)
      Ga.row(static_cast<Eigen::Index>(a)) = rows.G.row(res.active_set[a]);
    if (res.ellipse_active) Ga.row(na - 1) = grad_e.transpose();
    Eigen::FullPivLU<Mat> lu(Ga);
    lu.setThreshold(1e-10);
    if (lu.rank() < na) return std::nullopt;
  }

  const int ne = has_e ? 1 : 0;
  const int n = d + m + ne;
  Mat K = Mat::Zero(n, n);
  K.topLeftCorner(d, d) = Mat::Identity(d, d);
  if (has_e) K.topLeftCorner(d, d) += 2.0 * mu * inst.ellipse->Q;
  K.block(0, d, d, m) = rows.G.transpose();
  for (int i = 0; i < m; ++i) {
    K.block(d + i, 0, 1, d) = lambda[i] * rows.G.row(i);
    K(d + i, d + i) = -slack[i];
  }
  if (has_e) {
    K.block(0, d + m, d, 1) = grad_e;
    K.block(d + m, 0, 1, d) = mu * grad_e.transpose();
    K(d + m, d + m) = -e_slack;
  }
  Mat rhs = Mat::Zero(n, d);
  rhs.topRows(d) = Mat::Identity(d, d);
  const Mat sol = K.partialPivLu().solve(rhs);
  return Mat(sol.topRows(d));
}

} // namespace acrl
