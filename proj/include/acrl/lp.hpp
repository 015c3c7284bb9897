#pragma once

#include "acrl/constraints.hpp"

#include <vector>

namespace acrl {

/// maximize c^T x  s.t.  G x <= h,  lo <= x <= hi  (all bounds finite).
struct LpProblem {
  Vec c;
  Mat G;
  Vec h;
  Vec lo;
  Vec hi;
};

struct LpResult {
  Vec x;
  double value = 0.0;
};

namespace detail {

struct SimplexOutcome {
  Vec y;
  double value = 0.0;
  bool unique = true;
};

/// Dense two-phase tableau simplex with Bland's rule for
///   maximize c^T y  s.t.  A y <= b,  y >= 0.
/// Throws SolverError if the region is empty or the objective unbounded.
inline SimplexOutcome simplex_max(const Vec &c, const Mat &A, const Vec &b) {
  constexpr double kPivotEps = 1e-11;
  constexpr double kCostEps = 1e-10;
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());

  std::vector<int> art_row;
  for (int i = 0; i < m; ++i)
    if (b[i] < 0.0) art_row.push_back(i);
  const int k = static_cast<int>(art_row.size());
  const int ncols = n + m + k;
  Mat T = Mat::Zero(m + 1, ncols + 1);
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) {
    const double s = b[i] < 0.0 ? -1.0 : 1.0;
    T.row(i).head(n) = s * A.row(i);
    T(i, n + i) = s;
    T(i, ncols) = s * b[i];
    basis[i] = n + i;
  }
  for (int a = 0; a < k; ++a) {
    T(art_row[a], n + m + a) = 1.0;
    basis[art_row[a]] = n + m + a;
  }
  auto is_art = [&](int j) { return j >= n + m; };

  auto load_objective = [&](const Vec &cost) {
    T.row(m).setZero();
    T.row(m).head(ncols) = cost.transpose();
    for (int i = 0; i < m; ++i) {
      const double cb = cost[basis[i]];
      if (cb != 0.0) T.row(m) -= cb * T.row(i);
    }
  };

  auto pivot = [&](int p, int q) {
    T.row(p) /= T(p, q);
    for (int i = 0; i <= m; ++i) {
      if (i == p) continue;
      const double f = T(i, q);
      if (f != 0.0) T.row(i) -= f * T.row(p);
    }
    basis[p] = q;
  };

  auto iterate = [&](bool allow_art) {
    for (int guard = 0; guard < 50000; ++guard) {
      int q = -1;
      for (int j = 0; j < ncols; ++j) {
        if (!allow_art && is_art(j)) continue;
        if (T(m, j) > kCostEps) {
          q = j;
          break;
        }
      }
      if (q < 0) return;
      int p = -1;
      double best = 0.0;
      for (int i = 0; i < m; ++i) {
        if (T(i, q) <= kPivotEps) continue;
        const double ratio = T(i, ncols) / T(i, q);
        if (p < 0 || ratio < best - 1e-14 ||
            (std::abs(ratio - best) <= 1e-14 && basis[i] < basis[p])) {
          p = i;
          best = ratio;
        }
      }
      if (p < 0) throw SolverError("simplex: unbounded objective");
      pivot(p, q);
    }
    throw SolverError("simplex: iteration limit reached");
  };

  if (k > 0) {
    Vec phase1 = Vec::Zero(ncols);
    phase1.tail(k).setConstant(-1.0);
    load_objective(phase1);
    iterate(true);
    if (-T(m, ncols) < -1e-9 * (1.0 + b.cwiseAbs().maxCoeff()))
      throw SolverError("simplex: infeasible constraint set");
    for (int i = 0; i < m; ++i) {
      if (!is_art(basis[i])) continue;
      for (int j = 0; j < n + m; ++j) {
        if (std::abs(T(i, j)) > 1e-9) {
          pivot(i, j);
          break;
        }
      }
    }
  }

  Vec cost = Vec::Zero(ncols);
  cost.head(n) = c;
  load_objective(cost);
  iterate(false);

  SimplexOutcome out;
  out.y = Vec::Zero(n);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) out.y[basis[i]] = std::max(0.0, T(i, ncols));
  out.value = c.dot(out.y);
  std::vector<bool> basic(ncols, false);
  for (int i = 0; i < m; ++i) basic[basis[i]] = true;
  for (int j = 0; j < n + m; ++j) {
    if (!basic[j] && std::abs(T(m, j)) <= kCostEps) {
      out.unique = false;
      break;
    }
  }
  return out;
}

/// Bounded-variable LP by shifting x = lo + y.
inline detail::SimplexOutcome solve_bounded(const Vec &c, const Mat &G, const Vec &h, const Vec &lo,
                                            const Vec &hi) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(G.rows());
  Mat A(m + n, n);
  Vec b(m + n);
  if (m > 0) {
    A.topRows(m) = G;
    b.head(m) = h - G * lo;
  }
  A.bottomRows(n) = Mat::Identity(n, n);
  b.tail(n) = hi - lo;
  auto out = simplex_max(c, A, b);
  out.y += lo;
  out.value = c.dot(out.y);
  return out;
}

/// Replaces an approximate vertex by the exact intersection of the d
/// tightest linearly independent constraints, if that point is feasible and
/// no worse. `rows` holds all constraints including bounds.
inline Vec snap_to_vertex(const Vec &x, const Mat &rows, const Vec &rhs) {
  const int n = static_cast<int>(x.size());
  const Vec slack = rhs - rows * x;
  std::vector<int> order(static_cast<std::size_t>(rows.rows()));
  for (int i = 0; i < rows.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return slack[a] < slack[b]; });
  Mat S(0, n);
  Vec sb(0);
  for (int i : order) {
    if (slack[i] > 1e-7) break;
    Mat S2(S.rows() + 1, n);
    S2 << S, rows.row(i);
    Eigen::FullPivLU<Mat> lu(S2);
    lu.setThreshold(1e-10);
    if (lu.rank() == S2.rows()) {
      S = S2;
      sb.conservativeResize(sb.size() + 1);
      sb[sb.size() - 1] = rhs[i];
      if (S.rows() == n) break;
    }
  }
  if (S.rows() != n) return x;
  const Vec v = S.fullPivLu().solve(sb);
  if ((rows * v - rhs).maxCoeff() > 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff())) return x;
  if ((v - x).cwiseAbs().maxCoeff() > 1e-6) return x;
  return v;
}

/// Lexicographic extreme point over {x : Gx<=h, lo<=x<=hi, c^T x >= floor}
/// with the last coordinate most significant. `sense` = +1 minimizes,
/// -1 maximizes. `coords` limits which coordinates participate.
inline Vec lex_extreme(const Mat &G, const Vec &h, const Vec &lo, const Vec &hi, const Vec &c,
                       double floor, int coords, double sense) {
  const int n = static_cast<int>(c.size());
  const double tol = 1e-12 * (1.0 + std::abs(floor));
  Mat rows(G.rows() + 1, n);
  Vec rhs(G.rows() + 1);
  rows << G, -c.transpose();
  rhs << h, -(floor - tol);
  Vec x;
  for (int k = coords - 1; k >= 0; --k) {
    Vec obj = Vec::Zero(n);
    obj[k] = -sense;
    x = solve_bounded(obj, rows, rhs, lo, hi).y;
    rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
    rhs.conservativeResize(rhs.size() + 1);
    rows.row(rows.rows() - 1) = Vec::Unit(n, k).transpose() * sense;
    rhs[rhs.size() - 1] = sense * x[k] + 1e-12 * (1.0 + std::abs(x[k]));
  }
  return x;
}

} // namespace detail

/// Maximizes c^T x over a polytope. The optimum is a vertex; among several
/// optimal vertices the lexicographically smallest one is returned, comparing
/// the last coordinate first.
inline LpResult solve_lp(const LpProblem &p) {
  const int n = static_cast<int>(p.c.size());
  if (p.lo.size() != n || p.hi.size() != n || p.G.cols() != n || p.G.rows() != p.h.size())
    throw std::invalid_argument("solve_lp: shape mismatch");
  if ((p.hi.array() < p.lo.array()).any()) throw SolverError("solve_lp: empty bounds");
  auto out = detail::solve_bounded(p.c, p.G, p.h, p.lo, p.hi);
  Vec x = out.y;
  if (!out.unique) x = detail::lex_extreme(p.G, p.h, p.lo, p.hi, p.c, out.value, n, 1.0);
  Mat rows(p.G.rows() + 2 * n, n);
  Vec rhs(p.G.rows() + 2 * n);
  rows << p.G, Mat::Identity(n, n), -Mat::Identity(n, n);
  rhs << p.h, p.hi, -p.lo;
  x = detail::snap_to_vertex(x, rows, rhs);
  return {x, p.c.dot(x)};
}

/// LP over the box and linear part of an instance (the ellipse is ignored).
inline LpResult solve_lp(const Vec &c, const ConstraintInstance &inst) {
  LpProblem p;
  p.c = c;
  if (inst.linear) {
    p.G = inst.linear->A;
    p.h = inst.linear->b;
  } else {
    p.G = Mat(0, inst.dim());
    p.h = Vec(0);
  }
  p.lo = -inst.space.a_max;
  p.hi = inst.space.a_max;
  return solve_lp(p);
}

struct ChebyshevCenter {
  Vec center;
  double radius = 0.0;
};

/// Center of the largest ball inscribed in box ∩ {Ax <= b}. When the optimal
/// centers form a face, the midpoint of its two lexicographic extremes is
/// returned so symmetric sets keep symmetric centers.
inline ChebyshevCenter chebyshev_center(const ConstraintInstance &inst) {
  if (inst.ellipse) throw std::invalid_argument("chebyshev_center: polytopic instances only");
  const int d = inst.dim();
  if (inst.box_only()) return {Vec::Zero(d), inst.space.a_max.minCoeff()};
  const int rows_lin = inst.linear_rows();
  Mat G(rows_lin + 2 * d, d + 1);
  Vec h(rows_lin + 2 * d);
  if (rows_lin > 0) {
    G.topLeftCorner(rows_lin, d) = inst.linear->A;
    G.block(0, d, rows_lin, 1).setOnes(); // rows are unit-norm
    h.head(rows_lin) = inst.linear->b;
  }
  G.block(rows_lin, 0, d, d) = Mat::Identity(d, d);
  G.block(rows_lin + d, 0, d, d) = -Mat::Identity(d, d);
  G.block(rows_lin, d, 2 * d, 1).setOnes();
  h.segment(rows_lin, d) = inst.space.a_max;
  h.segment(rows_lin + d, d) = inst.space.a_max;
  Vec lo(d + 1), hi(d + 1);
  lo << -inst.space.a_max, 0.0;
  hi << inst.space.a_max, inst.space.a_max.minCoeff();
  Vec c = Vec::Zero(d + 1);
  c[d] = 1.0;
  auto out = detail::solve_bounded(c, G, h, lo, hi);
  if (!(out.value > 1e-12)) throw SolverError("chebyshev_center: feasible set has empty interior");
  Vec x = out.y.head(d);
  if (!out.unique) {
    const Vec lo_x = detail::lex_extreme(G, h, lo, hi, c, out.value, d, 1.0);
    const Vec hi_x = detail::lex_extreme(G, h, lo, hi, c, out.value, d, -1.0);
    x = 0.5 * (lo_x.head(d) + hi_x.head(d));
  }
  return {x, min_slack(inst, x)};
}

} // namespace acrl
