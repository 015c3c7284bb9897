#include "acrl/density.hpp"
#include "../support/oracles.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

using namespace acrl;
using oracle::v2;

namespace {

double quad_moment(int n, double A, double B, double r0) {
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [&](double s) {
    const double r = r0 + s;
    const double e = (A * r + B) * (A * r + B);
    if (!std::isfinite(r) || e > 1400.0) return 0.0;
    return std::pow(r, n) * std::exp(-e);
  };
  return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-15);
}

GaussianHead head(Vec mean, Vec log_std) { return {std::move(mean), std::move(log_std)}; }

ConstraintInstance halfplane(double a1, double a2, double b) {
  return {ActionSpace::unit(2), make_linear((Mat(1, 2) << a1, a2).finished(), Vec::Constant(1, b)), {}, {}};
}

/// Boundary mass of the alpha-projected density: ∮ q dσ with the boundary
/// traced by bisection and arc length by finite differences of the curve.
double boundary_mass(const GaussianHead &h, const ConstraintInstance &inst, const Vec &c, const DensityOptions &opt,
                     int samples = 20000) {
  const double step = 2.0 * std::numbers::pi / samples;
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double phi = (i + 0.5) * step;
    const Vec b = oracle::boundary_by_bisection(inst, c, phi);
    const Vec bp = oracle::boundary_by_bisection(inst, c, phi + 1e-6);
    const Vec bm = oracle::boundary_by_bisection(inst, c, phi - 1e-6);
    const double dsigma = (bp - bm).norm() / 2e-6;
    total += std::exp(alpha_boundary_logprob(h, b, inst, c, opt)) * dsigma * step;
  }
  return total;
}

} // namespace

TEST(Density, SquashedGaussianExamples) {
  const auto h = head(Vec::Zero(1), Vec::Zero(1));
  EXPECT_NEAR(squashed_gaussian_logprob(h, Vec::Zero(1), ActionSpace::unit(1)), -0.9189385332046727, 1e-14);
  const auto h2 = head(Vec::Zero(3), Vec::Constant(3, -0.3));
  const Vec u = (Vec(3) << 0.3, -1.2, 2.0).finished();
  const double base = squashed_gaussian_logprob(h2, u, ActionSpace::unit(3));
  EXPECT_NEAR(squashed_gaussian_logprob(h2, u, ActionSpace(Vec::Constant(3, 2.0))), base - 3 * std::log(2.0), 1e-12);
  EXPECT_NEAR(squashed_gaussian_logprob(h2, Vec(-u), ActionSpace::unit(3)), base, 1e-12);
}

TEST(Density, SquashCorrectionIsStableForLargeInputs) {
  const auto h = head(Vec::Zero(1), Vec::Zero(1));
  const double lp = squashed_gaussian_logprob(h, Vec::Constant(1, 30.0), ActionSpace::unit(1));
  EXPECT_TRUE(std::isfinite(lp));
  // log(1 - tanh^2 x) -> log 4 - 2x
  EXPECT_NEAR(lp, -0.9189385332046727 - 450.0 - (std::log(4.0) - 60.0), 1e-9);
}

TEST(Density, RayMomentExamples) {
  EXPECT_NEAR(gaussian_ray_moment(0, 1.0, 0.0, 0.0), std::sqrt(std::numbers::pi) / 2, 1e-15);
  EXPECT_NEAR(gaussian_ray_moment(1, 1.0, 0.0, 0.0), 0.5, 1e-15);
  const double q = quad_moment(3, 1.3, -0.4, 0.7);
  EXPECT_NEAR(gaussian_ray_moment(3, 1.3, -0.4, 0.7), q, 1e-10 * q);
}

TEST(Density, RayMomentMatchesQuadrature) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> UA(0.1, 5.0), UB(-3.0, 3.0), UR(0.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    const int n = static_cast<int>(rng() % 9);
    const double A = UA(rng), B = UB(rng), r0 = UR(rng);
    const double q = quad_moment(n, A, B, r0);
    const double v = gaussian_ray_moment(n, A, B, r0);
    EXPECT_LE(std::abs(v - q), 1e-10 * std::max(q, 1e-300)) << n << " " << A << " " << B << " " << r0;
  }
}

TEST(Density, RayMomentExtremeArguments) {
  // far tail (t0 = 60): compare the log against quadrature of the rescaled integrand
  const double A = 2.0, B = 0.0, r0 = 30.0;
  boost::math::quadrature::exp_sinh<double> integrator;
  const double t0 = A * r0 + B;
  const double scaled = integrator.integrate(
      [&](double s) { return std::pow(r0 + s, 2) * std::exp(-(A * s) * (A * s) - 2 * A * s * t0); }, 0.0,
      std::numeric_limits<double>::infinity());
  EXPECT_NEAR(log_gaussian_ray_moment(2, A, B, r0), std::log(scaled) - t0 * t0, 1e-10);
  EXPECT_THROW(gaussian_ray_moment(9, 1.0, 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(gaussian_ray_moment(1, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(Density, RayMomentDerivatives) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> UA(0.2, 4.0), UB(-2.0, 2.0), UR(0.05, 2.0);
  for (int k = 0; k < 200; ++k) {
    const int n = static_cast<int>(rng() % 7);
    const double A = UA(rng), B = UB(rng), r0 = UR(rng);
    const Jet v = log_gaussian_ray_moment(n, Jet(A, JetDerivatives::Unit(3, 0)), Jet(B, JetDerivatives::Unit(3, 1)),
                                          Jet(r0, JetDerivatives::Unit(3, 2)));
    const double h = 1e-6;
    const double dA = (log_gaussian_ray_moment(n, A + h, B, r0) - log_gaussian_ray_moment(n, A - h, B, r0)) / (2 * h);
    const double dB = (log_gaussian_ray_moment(n, A, B + h, r0) - log_gaussian_ray_moment(n, A, B - h, r0)) / (2 * h);
    const double dR = (log_gaussian_ray_moment(n, A, B, r0 + h) - log_gaussian_ray_moment(n, A, B, r0 - h)) / (2 * h);
    EXPECT_NEAR(v.derivatives()[0], dA, 1e-5 * std::max(1.0, std::abs(dA)));
    EXPECT_NEAR(v.derivatives()[1], dB, 1e-5 * std::max(1.0, std::abs(dB)));
    EXPECT_NEAR(v.derivatives()[2], dR, 1e-5 * std::max(1.0, std::abs(dR)));
  }
}

TEST(Density, OneDimensionalBoundaryIsGaussianTail) {
  ConstraintInstance inst{ActionSpace::unit(1), make_linear(Mat::Ones(1, 1), Vec::Constant(1, 0.5)), {}, {}};
  const auto h = head(Vec::Constant(1, 0.2), Vec::Constant(1, std::log(0.7)));
  const double q = std::exp(alpha_boundary_logprob(h, Vec::Constant(1, 0.5), inst, Vec::Zero(1)));
  EXPECT_NEAR(q, 0.5 * std::erfc((0.5 - 0.2) / (0.7 * std::sqrt(2.0))), 1e-14);
}

TEST(Density, BallBoundaryMassIsChiTail) {
  // standard Gaussian centered at c_s with a ball boundary: q constant, total mass = P(|X| >= r0)
  for (int d : {2, 3}) {
    const double r0 = 0.6;
    ConstraintInstance inst{ActionSpace::unit(d), {}, make_ellipse(Mat::Identity(d, d), Vec::Zero(d), r0 * r0), {}};
    const auto h = head(Vec::Zero(d), Vec::Zero(d));
    Vec b = Vec::Zero(d);
    b[0] = r0;
    const double q = std::exp(alpha_boundary_logprob(h, b, inst, Vec::Zero(d)));
    Vec b2 = Vec::Constant(d, r0 / std::sqrt(double(d)));
    EXPECT_NEAR(std::exp(alpha_boundary_logprob(h, b2, inst, Vec::Zero(d))), q, 1e-13);
    const double area = 2.0 * std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0) * std::pow(r0, d - 1);
    const double tail = boost::math::gamma_q(d / 2.0, r0 * r0 / 2.0);
    EXPECT_NEAR(q * area, tail, 1e-12);
    if (d == 3) {
      DensityOptions literal;
      literal.solid_angle_exponent = 1.0;
      const double q1 = std::exp(alpha_boundary_logprob(h, b, inst, Vec::Zero(d), literal));
      EXPECT_GT(std::abs(q1 * area - tail), 0.1 * tail);
    }
  }
}

TEST(Density, AlphaPushforwardIsNormalized) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N01;
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int t = 0; t < 4; ++t) {
    auto [inst, inside] = oracle::random_instance2(rng, t % 2 == 1);
    inst = with_center(inst);
    const Vec c = *inst.center;
    const auto h = head(v2(0.5 * U(rng), 0.5 * U(rng)), v2(std::log(0.3 + 0.5 * (U(rng) + 1)), std::log(0.3 + 0.5 * (U(rng) + 1))));
    const int n = 200000;
    int inside_count = 0;
    for (int i = 0; i < n; ++i) {
      const Vec x = h.mean + h.log_std.array().exp().matrix().cwiseProduct(v2(N01(rng), N01(rng)));
      inside_count += contains(inst, x, 0.0);
    }
    const double p_in = double(inside_count) / n;
    const double se = std::sqrt(p_in * (1 - p_in) / n);
    const double total = p_in + boundary_mass(h, inst, c, {}, 4000);
    EXPECT_NEAR(total, 1.0, 3.0 * se + 2e-4) << "trial " << t;
  }
}

TEST(Density, AlphaLogprobBranches) {
  const auto inst = with_center(halfplane(1, 1, 0.5));
  const Vec c = *inst.center;
  const auto h = head(v2(0.1, 0.0), v2(-0.5, -0.2));
  const Vec inside = v2(0.0, -0.2);
  const auto in = alpha_logprob(h, inside, inst, c);
  EXPECT_EQ(in.support, MixedDensityValue::Support::Interior);
  EXPECT_NEAR(in.log_prob, gaussian_logprob<double>(h, inside), 1e-15);
  const Vec outside = v2(0.9, 0.7);
  const auto out = alpha_logprob(h, outside, inst, c);
  EXPECT_EQ(out.support, MixedDensityValue::Support::Boundary);
  const Vec b = map_alpha(outside, inst, c).action;
  EXPECT_NEAR(out.log_prob, alpha_boundary_logprob(h, b, inst, c), 1e-12);
  EXPECT_THROW(alpha_logprob(head(v2(0, 0), v2(-25, 0)), inside, inst, c), std::invalid_argument);
}

TEST(Density, BoundaryWeightShiftsLogDensity) {
  const auto inst = with_center(halfplane(1, 1, 0.5));
  const auto h = head(v2(0.1, 0.0), v2(-0.5, -0.2));
  const Vec b = map_alpha(v2(0.9, 0.7), inst, *inst.center).action;
  DensityOptions w2;
  w2.boundary_weight = 2.0;
  EXPECT_NEAR(alpha_boundary_logprob(h, b, inst, *inst.center, w2),
              alpha_boundary_logprob(h, b, inst, *inst.center) - std::log(2.0), 1e-14);
}

TEST(Density, RadialPushforwardIsNormalized) {
  // integrate exp(log_prob) over A_s using the analytic inverse of radial squashing
  const auto inst = with_center(halfplane(1, 2, 0.4));
  const Vec c = *inst.center;
  const auto h = head(v2(0.3, -0.2), v2(-0.4, 0.1));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int n = 400000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec z = v2(U(rng), U(rng));
    double val = 0.0;
    if (min_slack(inst, z) > 0.0) {
      const Vec v = z - c;
      const auto hit = ray_boundary_intersection(inst, c, v);
      const double L = std::atanh(v.norm() / hit.r0);
      const Vec x = c + L * hit.r0 * v.normalized();
      val = std::exp(radial_logprob(h, x, inst, c)) * 4.0;
    }
    sum += val;
    sum2 += val * val;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, 1.0, 3.0 * se);
  EXPECT_NEAR(radial_logprob(h, c, inst, c), gaussian_logprob<double>(h, c), 1e-15);
}

TEST(Density, ReparametrizationGradients) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto inst = with_center(instantiate({Family::OS, {{"M", 1.0}, {"S", 0.1}}}, ActionSpace::unit(2),
                                            {v2(0.7, 1.2), v2(1.3, -0.8)}));
  const Vec c = *inst.center;
  int boundary = 0;
  for (int k = 0; k < 100; ++k) {
    const Vec mean = v2(U(rng), U(rng)), ls = v2(-1.0 + 0.5 * U(rng), -1.0 + 0.5 * U(rng)), eps = v2(U(rng), U(rng));
    // log-prob of the alpha-projected reparametrized sample as a function of (mean, log_std)
    auto f = [&](const Vec &p) {
      const GaussianHead hh{p.head(2), p.tail(2)};
      const Vec x = hh.mean + hh.log_std.array().exp().matrix().cwiseProduct(eps);
      return alpha_logprob(hh, x, inst, c).log_prob;
    };
    Vec p(4);
    p << mean, ls;
    GaussianHeadT<Jet> hj{VecT<Jet>(2), VecT<Jet>(2)};
    for (int i = 0; i < 2; ++i) {
      hj.mean[i] = Jet(mean[i], JetDerivatives::Unit(4, i));
      hj.log_std[i] = Jet(ls[i], JetDerivatives::Unit(4, 2 + i));
    }
    VecT<Jet> xj(2);
    for (int i = 0; i < 2; ++i) xj[i] = hj.mean[i] + exp(hj.log_std[i]) * eps[i];
    const auto lp = alpha_logprob<Jet>(hj, xj, inst, c);
    // skip samples near the feasibility or binding switch
    const Vec x = mean + ls.array().exp().matrix().cwiseProduct(eps);
    bool stable = true;
    for (int j = 0; j < 4 && stable; ++j)
      for (double s : {-1e-4, 1e-4}) {
        Vec pp = p;
        pp[j] += s;
        const Vec xx = pp.head(2) + pp.tail(2).array().exp().matrix().cwiseProduct(eps);
        const auto a0 = alpha_value<double>(x, inst, c), a1 = alpha_value<double>(xx, inst, c);
        stable &= a0.clipped == a1.clipped && a0.binding.kind == a1.binding.kind &&
                  a0.binding.index == a1.binding.index && a0.binding.sign == a1.binding.sign;
      }
    if (!stable) continue;
    boundary += lp.support == MixedDensityValueT<Jet>::Support::Boundary;
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      Vec pp = p, pm = p;
      pp[j] += h;
      pm[j] -= h;
      const double fd = (f(pp) - f(pm)) / (2 * h);
      EXPECT_NEAR(lp.log_prob.derivatives()[j], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
  EXPECT_GT(boundary, 10);
}
