#include <doctest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <cmath>
#include <random>

#include "estrack/analysis.hpp"
#include "estrack/closed_loop.hpp"
#include "estrack/errors.hpp"
#include "estrack/plant.hpp"

using namespace estrack;
using big = boost::multiprecision::cpp_dec_float_50;

namespace {

// Independent 50-digit evaluation of the reactor field. Each row:
//   -phi_i x_i + k_i e^-kappa - c_i (x1 + 1)^n e^(-kappa / (x2 + 1)) + u_i
// with c_i = k_i (corrected) or 1 (as printed).
std::array<big, 2> rhs_50(const StateVec& x, const InputVec& u, const CstrParams& p) {
  const big x1 = x[0], x2 = x[1];
  const big kappa = p.kappa;
  const big rate = pow(x1 + 1, big(p.reaction_order)) * exp(-kappa / (x2 + 1));
  const big e = exp(-kappa);
  const bool corrected = p.variant == ModelVariant::Corrected;
  const big c1 = corrected ? big(p.k1) : big(1);
  const big c2 = corrected ? big(p.k2) : big(1);
  return {-big(p.phi1) * x1 + big(p.k1) * e - c1 * rate + big(u[0]),
          -big(p.phi2) * x2 + big(p.k2) * e - c2 * rate + big(u[1])};
}

double rel(double a, const big& b) {
  return static_cast<double>(abs(big(a) - b) / abs(b));
}

double smallest_singular_value(const Mat2& m) {
  // Square root of the smaller eigenvalue of m^T m.
  const double a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
  const double b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
  const double d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
  const double mean = 0.5 * (a + d);
  const double r = std::hypot(0.5 * (a - d), b);
  return std::sqrt(std::abs(determinant(m)) * std::abs(determinant(m)) / (mean + r));
}

double frobenius(const Mat2& m) {
  return std::sqrt(m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]);
}

}  // namespace

TEST_CASE("field vanishes at the origin for zero input") {
  const CstrParams p;
  const StateVec f = cstr_rhs({0.0, 0.0}, {0.0, 0.0}, p);
  CHECK(norm(f) <= 1e-14);
}

TEST_CASE("full-box input at the origin is passed straight through") {
  const CstrParams p;
  const StateVec f = cstr_rhs({0.0, 0.0}, {1.798, 0.06663}, p);
  CHECK(f[0] == doctest::Approx(1.798).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(0.06663).epsilon(1e-14));
}

TEST_CASE("field agrees with a 50-digit evaluation") {
  for (ModelVariant v : {ModelVariant::Corrected, ModelVariant::AsPrinted}) {
    CstrParams p;
    p.variant = v;
    for (const StateVec& x : {StateVec{-0.065, 0.008}, StateVec{0.3, -0.1}, StateVec{-0.5, 0.2}}) {
      const StateVec f = cstr_rhs(x, {0.0, 0.0}, p);
      const auto ref = rhs_50(x, {0.0, 0.0}, p);
      CHECK(rel(f[0], ref[0]) <= 1e-12);
      CHECK(rel(f[1], ref[1]) <= 1e-12);
    }
  }
}

TEST_CASE("printed form has no equilibrium at the origin") {
  CstrParams p;
  p.variant = ModelVariant::AsPrinted;
  const StateVec f = cstr_rhs({0.0, 0.0}, {0.0, 0.0}, p);
  // (k1 - 1) e^-kappa in the first row.
  CHECK(f[0] == doctest::Approx((p.k1 - 1.0) * std::exp(-p.kappa)).epsilon(1e-12));
  CHECK(std::abs(f[0]) > 1.0);
}

TEST_CASE("input enters additively") {
  const CstrParams p;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dx(-0.9, 0.9);
  std::uniform_real_distribution<double> du1(p.u1_min, p.u1_max);
  std::uniform_real_distribution<double> du2(p.u2_min, p.u2_max);
  for (int k = 0; k < 50; ++k) {
    const StateVec x{dx(rng), 0.3 * dx(rng)};
    const InputVec u{du1(rng), du2(rng)};
    const StateVec diff = cstr_rhs(x, u, p) - cstr_rhs(x, {0.0, 0.0}, p);
    const double scale = 1.0 + norm(cstr_rhs(x, {0.0, 0.0}, p));
    CHECK(std::abs(diff[0] - u[0]) <= 1e-14 * scale);
    CHECK(std::abs(diff[1] - u[1]) <= 1e-14 * scale);
  }
  const Mat2 B = cstr_input_jacobian({0.1, 0.1}, {0.0, 0.0}, p);
  CHECK(B == identity2());
}

TEST_CASE("states outside the domain are rejected") {
  const CstrParams p;
  CHECK_THROWS_AS(cstr_rhs({-1.0, 0.0}, {0.0, 0.0}, p), DomainError);
  CHECK_THROWS_AS(cstr_rhs({0.0, -1.5}, {0.0, 0.0}, p), DomainError);
  CHECK_THROWS_AS(cstr_jacobian({0.0, -1.0}, {0.0, 0.0}, p), DomainError);
  try {
    cstr_rhs({-2.0, 0.5}, {0.0, 0.0}, p);
  } catch (const DomainError& e) {
    CHECK(e.state()[0] == -2.0);
    CHECK(e.state()[1] == 0.5);
  }
}

TEST_CASE("jacobian at the origin reproduces the reference linearization") {
  const Mat2 J = cstr_jacobian({0.0, 0.0}, {0.0, 0.0}, CstrParams{});
  const Mat2 expected{{{-2.115412260, -19.82087587}, {0.01723243894, -0.6937795600}}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(std::abs(J[i][j] - expected[i][j]) <= 1e-6 * std::abs(expected[i][j]));
  }
}

TEST_CASE("jacobian matches central differences at random points") {
  for (ModelVariant v : {ModelVariant::Corrected, ModelVariant::AsPrinted}) {
    CstrParams p;
    p.variant = v;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d1(-0.8, 1.0);
    std::uniform_real_distribution<double> d2(-0.3, 0.3);
    const double h = 1e-6;
    for (int k = 0; k < 20; ++k) {
      const StateVec x{d1(rng), d2(rng)};
      const InputVec u{0.2, -0.01};
      const Mat2 J = cstr_jacobian(x, u, p);
      Mat2 fd{};
      for (int j = 0; j < 2; ++j) {
        StateVec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const StateVec col = (1.0 / (2.0 * h)) * (cstr_rhs(xp, u, p) - cstr_rhs(xm, u, p));
        fd[0][j] = col[0];
        fd[1][j] = col[1];
      }
      Mat2 diff{};
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) diff[i][j] = J[i][j] - fd[i][j];
      }
      CHECK(frobenius(diff) <= 1e-6 * frobenius(J));
    }
  }
}

TEST_CASE("spectral info") {
  SUBCASE("reference linearization") {
    const Mat2 A{{{-2.115412260, -19.82087587}, {0.01723243894, -0.6937795600}}};
    const SpectralInfo s = spectral_info(A);
    CHECK(s.hurwitz);
    CHECK(s.eigenvalues[0].imag() == 0.0);
    CHECK(s.eigenvalues[1].imag() == 0.0);
    CHECK(std::abs(s.eigenvalues[0].real() - -1.0) <= 1e-2);
    CHECK(std::abs(s.eigenvalues[1].real() - -1.809) <= 1e-2);
  }
  SUBCASE("identity") {
    const SpectralInfo s = spectral_info(identity2());
    CHECK(s.eigenvalues[0] == std::complex<double>(1.0, 0.0));
    CHECK(s.eigenvalues[1] == std::complex<double>(1.0, 0.0));
    CHECK_FALSE(s.hurwitz);
  }
  SUBCASE("rotation") {
    const SpectralInfo s = spectral_info(Mat2{{{0.0, -1.0}, {1.0, 0.0}}});
    CHECK(s.eigenvalues[0].real() == 0.0);
    CHECK(std::abs(s.eigenvalues[0].imag()) == 1.0);
    CHECK(s.eigenvalues[1] == std::conj(s.eigenvalues[0]));
    CHECK_FALSE(s.hurwitz);
  }
  SUBCASE("eigenvalues scale with the matrix") {
    const Mat2 A = cstr_jacobian({0.1, 0.05}, {0.0, 0.0}, CstrParams{});
    const SpectralInfo s = spectral_info(A);
    for (double c : {0.5, 3.0, 40.0}) {
      const SpectralInfo sc = spectral_info(c * A);
      for (int k = 0; k < 2; ++k) CHECK(std::abs(sc.eigenvalues[k] - c * s.eigenvalues[k]) <= 1e-12 * c * std::abs(s.eigenvalues[k]));
    }
  }
}

TEST_CASE("steady-state map") {
  const CstrParams p;
  SUBCASE("origin") {
    CHECK(norm(steady_state_map({0.0, 0.0}, p)) <= 1e-12);
    CHECK(steady_state_stability({0.0, 0.0}, p).hurwitz);
  }
  SUBCASE("residual at sampled inputs") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d1(p.u1_min, p.u1_max);
    std::uniform_real_distribution<double> d2(p.u2_min, p.u2_max);
    for (int k = 0; k < 10; ++k) {
      const InputVec u{d1(rng), d2(rng)};
      CHECK(norm(cstr_rhs(steady_state_map(u, p), u, p)) <= 1e-12);
    }
  }
  SUBCASE("long-horizon integration converges to the same point") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> d1(0.5 * p.u1_min, 0.5 * p.u1_max);
    std::uniform_real_distribution<double> d2(0.5 * p.u2_min, 0.5 * p.u2_max);
    ode::IntegratorConfig icfg;
    icfg.dt = 1e-3;
    for (int k = 0; k < 5; ++k) {
      const InputVec u{d1(rng), d2(rng)};
      const PlantRun run = integrate_plant_constant_u({0.0, 0.0}, u, p, icfg, 50.0, 50.0);
      CHECK(norm(run.final_state() - steady_state_map(u, p)) <= 1e-6);
    }
  }
  SUBCASE("box corners are stable equilibria") {
    for (const InputVec& u : box_grid(p, 2, 2)) CHECK(steady_state_stability(u, p).hurwitz);
  }
  SUBCASE("continuity over a 5x5 grid") {
    // dl/du = -J(l(u))^-1, so neighbours differ by at most about
    // |J^-1| |du|. The sensitivity to u2 alone reaches ~20, so a fixed
    // factor would be model-specific; the bound is taken from the endpoints.
    const std::vector<InputVec> grid = box_grid(p, 5, 5);
    std::vector<StateVec> sol;
    std::vector<double> inv_norm;
    for (const InputVec& u : grid) {
      sol.push_back(steady_state_map(u, p));
      inv_norm.push_back(1.0 / smallest_singular_value(cstr_jacobian(sol.back(), u, p)));
    }
    auto at = [](int i, int j) { return static_cast<std::size_t>(i * 5 + j); };
    auto check_pair = [&](std::size_t a, std::size_t b) {
      const double lip = 1.5 * std::max(inv_norm[a], inv_norm[b]);
      CHECK(norm(sol[b] - sol[a]) <= lip * norm(grid[b] - grid[a]));
    };
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (i + 1 < 5) check_pair(at(i, j), at(i + 1, j));
        if (j + 1 < 5) check_pair(at(i, j), at(i, j + 1));
      }
    }
  }
  SUBCASE("non-convergence carries the last iterate and residual") {
    NewtonOptions opts;
    opts.max_iter = 1;
    try {
      steady_state_map({1.5, 0.05}, p, opts);
      FAIL("expected a solver error");
    } catch (const SolverError& e) {
      CHECK(e.residual() > opts.tol);
      CHECK(std::isfinite(e.last_iterate()[0]));
    }
  }
}

TEST_CASE("parameter validation") {
  CstrParams p;
  CHECK_NOTHROW(p.validate());
  p.kappa = 0.0;
  CHECK_THROWS_AS(p.validate(), ContractError);
  p = CstrParams{};
  p.u1_min = 2.0;
  CHECK_THROWS_AS(p.validate(), ContractError);
  p = CstrParams{};
  CHECK(p.in_input_box({1.798, -0.06663}));
  CHECK_FALSE(p.in_input_box({1.8, 0.0}));
  const InputVec c = p.clamp_to_box({5.0, -1.0});
  CHECK(c[0] == p.u1_max);
  CHECK(c[1] == p.u2_min);
}
