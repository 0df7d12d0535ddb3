#include <doctest.h>

#include <cmath>
#include <random>

#include "estrack/analysis.hpp"
#include "estrack/errors.hpp"

using namespace estrack;

namespace {

const CstrParams kPlant{};

const ReferenceTrajectory& trig_orbit() {
  static const ReferenceTrajectory ref =
      ReferenceTrajectory::solve(ReferenceSpec::trig(), kPlant, {-0.065, 0.008}, 1e-10);
  return ref;
}

// Synthetic run with x - x* fixed at (sqrt(c), 0).
Trajectory constant_offset_run(double c, double period, int periods, int per_period) {
  Trajectory tr;
  const int n = periods * per_period;
  for (int i = 0; i <= n; ++i) {
    ClosedLoopState s;
    s.t = period * i / per_period;
    s.x_star = {0.01 * std::sin(s.t), -0.02};
    s.x = s.x_star + StateVec{std::sqrt(c), 0.0};
    tr.samples.push_back(s);
  }
  return tr;
}

// Pinned run: plant driven by u*(t) from x*(0), sampled every 0.01.
const Trajectory& pinned_run() {
  static const Trajectory tr = [] {
    ESGains g;
    g.eta = 1000.0;
    ode::IntegratorConfig c;
    c.dt = 1e-3;
    ClosedLoopOptions opt;
    opt.controller = ControllerMode::PinnedToReference;
    opt.samples_per_period = 10000;
    const ReferenceTrajectory& ref = trig_orbit();
    return integrate_closed_loop(ref.x_star_0(), ref.input(0.0), ref, g, kPlant, c, 4.0, opt);
  }();
  return tr;
}

// e(t) recomputed from raw samples with fresh Newton solves.
double theorem_error(const ClosedLoopState& s, const ReferenceTrajectory& ref) {
  const InputVec us = ref.input(s.t);
  return norm(s.x - steady_state_map(us, kPlant)) + norm(s.u - us);
}

}  // namespace

TEST_CASE("per-period cost") {
  SUBCASE("zero cost") {
    const auto c = per_period_cost(constant_offset_run(0.0, 10.0, 3, 50), 10.0);
    REQUIRE(c.size() == 3);
    for (double v : c) CHECK(v == 0.0);
  }
  SUBCASE("constant cost") {
    const auto c = per_period_cost(constant_offset_run(0.04, 10.0, 4, 37), 10.0);
    REQUIRE(c.size() == 4);
    for (double v : c) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("period boundaries between samples") {
    const auto c = per_period_cost(constant_offset_run(0.09, 10.0, 3, 7), 4.0);
    REQUIRE(c.size() == 7);
    for (double v : c) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
  }
  SUBCASE("partial period is dropped") {
    Trajectory tr = constant_offset_run(0.04, 10.0, 2, 20);
    tr.samples.pop_back();
    CHECK(per_period_cost(tr, 10.0).size() == 1);
  }
}

TEST_CASE("tracking report on a pinned run") {
  const ReferenceTrajectory& ref = trig_orbit();
  const Trajectory& tr = pinned_run();
  const ESGains g;

  SUBCASE("orbit is not the steady-state curve") {
    const TrackingReport r = tracking_report(tr, ref, g, 1.0, 1.0);
    REQUIRE(r.e_theorem.size() == tr.samples.size());
    double e_max = 0.0;
    for (std::size_t i = 0; i < tr.samples.size(); ++i) {
      CHECK(std::isfinite(r.e_theorem[i]));
      CHECK(r.e_theorem[i] == doctest::Approx(theorem_error(tr.samples[i], ref)).epsilon(1e-10));
      CHECK(r.e_reference[i] <= 1e-10);
      e_max = std::max(e_max, r.e_theorem[i]);
    }
    CHECK(e_max > 1e-3);
  }
  SUBCASE("zero level is never met") {
    const TrackingReport r = tracking_report(tr, ref, g, 0.0, 1.0);
    CHECK_FALSE(r.bound_satisfied);
    CHECK_FALSE(r.t_f.has_value());
    CHECK(std::isnan(r.sup_error_after_tf));
  }
  SUBCASE("a satisfied bound holds on the raw samples") {
    for (double rho : {0.05, 0.1, 1.0}) {
      const TrackingReport r = tracking_report(tr, ref, g, rho, 1.0);
      if (!r.bound_satisfied) continue;
      REQUIRE(r.t_f.has_value());
      CHECK(*r.t_f >= 0.0);
      CHECK(r.sup_error_after_tf <= rho);
      for (const ClosedLoopState& s : tr.samples) {
        if (s.t >= *r.t_f) CHECK(theorem_error(s, ref) <= rho + 1e-12);
      }
    }
    CHECK(tracking_report(tr, ref, g, 1.0, 1.0).bound_satisfied);
  }
  SUBCASE("run must span two windows") {
    CHECK_THROWS_AS(tracking_report(tr, ref, g, 1.0, 3.0), ContractError);
  }
}

TEST_CASE("steady-state cache") {
  SteadyStateCache cache(kPlant);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d1(kPlant.u1_min, kPlant.u1_max);
  std::uniform_real_distribution<double> d2(kPlant.u2_min, kPlant.u2_max);
  std::vector<InputVec> us;
  for (int k = 0; k < 20; ++k) us.push_back({d1(rng), d2(rng)});
  for (const InputVec& u : us) cache.at(u);
  for (const InputVec& u : us) CHECK(norm(cache.at(u) - steady_state_map(u, kPlant)) <= 1e-10);
  CHECK(cache.size() == 20);
}

TEST_CASE("grids") {
  const auto g = box_grid(kPlant, 3, 2);
  CHECK(g.size() == 6);
  CHECK(g.front() == InputVec{kPlant.u1_min, kPlant.u2_min});
  CHECK(g.back() == InputVec{kPlant.u1_max, kPlant.u2_max});
  const auto t = period_grid(100.0, 4);
  CHECK(t == std::vector<double>{0.0, 25.0, 50.0, 75.0});
  CHECK_THROWS_AS(box_grid(kPlant, 0, 2), ContractError);
  CHECK_THROWS_AS(period_grid(100.0, 0), ContractError);
}

TEST_CASE("assumption probe") {
  const ReferenceTrajectory& ref = trig_orbit();
  const auto t_grid = period_grid(100.0, 40);
  const auto coarse = box_grid(kPlant, 3, 3);
  const AssumptionProbe a = probe_assumption3(ref, kPlant, coarse, t_grid);

  SUBCASE("diameter of the reference program") {
    CHECK(a.nu_hat == doctest::Approx(2.0 * std::hypot(1.798, 0.06663)).epsilon(1e-12));
  }
  SUBCASE("square root of the cost is 1-Lipschitz") {
    CHECK(a.L_h_hat > 0.0);
    CHECK(a.L_h_hat <= 1.0 + 1e-9);
  }
  SUBCASE("ratio bounds") {
    CHECK(a.alpha11_hat > 0.0);
    CHECK(a.alpha11_hat <= a.alpha12_hat);
    CHECK(a.ratio_samples + a.excluded_samples == coarse.size() * t_grid.size());
    CHECK_FALSE(a.grid_description.empty());
  }
  SUBCASE("refining the grid widens the ratio interval") {
    std::vector<InputVec> fine = coarse;
    for (const InputVec& u : box_grid(kPlant, 4, 5)) fine.push_back(u);
    const AssumptionProbe b = probe_assumption3(ref, kPlant, fine, t_grid);
    CHECK(b.alpha11_hat <= a.alpha11_hat);
    CHECK(b.alpha12_hat >= a.alpha12_hat);
  }
  SUBCASE("gradient probe") {
    ProbeOptions opt;
    opt.gradient_probe = true;
    const AssumptionProbe c = probe_assumption3(ref, kPlant, coarse, period_grid(100.0, 8), opt);
    REQUIRE(c.gradient.has_value());
    CHECK(c.gradient->alpha21_hat >= 0.0);
    CHECK(c.gradient->alpha21_hat <= c.gradient->alpha22_hat);
    CHECK(c.gradient->alpha3_hat > 0.0);
    CHECK(c.gradient->fd_step == opt.fd_step);
  }
  SUBCASE("empty grids") {
    CHECK_THROWS_AS(probe_assumption3(ref, kPlant, {}, t_grid), ContractError);
    CHECK_THROWS_AS(probe_assumption3(ref, kPlant, coarse, {}), ContractError);
  }
}

TEST_CASE("sweep summary") {
  auto result = [](double gamma, double eps, double eta, double final_cost, bool ok) {
    SweepResult r;
    r.gains.gamma = gamma;
    r.gains.epsilon = eps;
    r.gains.eta = eta;
    r.report.bound_satisfied = ok;
    r.report.mean_sqrt_cost_per_period = {0.05, final_cost};
    r.report.sup_error_after_tf = ok ? 0.3 : std::nan("");
    r.label = "cell";
    return r;
  };
  SUBCASE("single result") {
    const auto rows = sweep_summary({result(150, 1e-3, 1, 0.02, true)});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].gamma == 150);
    CHECK(rows[0].final_period_cost == 0.02);
    CHECK(rows[0].bound_satisfied);
    CHECK_FALSE(rows[0].small_epsilon_degraded);
  }
  SUBCASE("duplicates give identical rows") {
    const auto rows = sweep_summary({result(150, 1e-3, 1, 0.02, true), result(150, 1e-3, 1, 0.02, true)});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].final_period_cost == rows[1].final_period_cost);
    CHECK(rows[0].bound_satisfied == rows[1].bound_satisfied);
    CHECK(rows[0].small_epsilon_degraded == rows[1].small_epsilon_degraded);
  }
  SUBCASE("small epsilon degradation is flagged within a gain group") {
    const auto rows = sweep_summary({result(150, 1e-4, 1, 0.09, false), result(150, 1e-3, 1, 0.02, true),
                                     result(150, 1e-2, 1, 0.03, true), result(150, 1e-4, 5, 0.02, true)});
    CHECK(rows[0].small_epsilon_degraded);
    CHECK_FALSE(rows[1].small_epsilon_degraded);
    CHECK_FALSE(rows[2].small_epsilon_degraded);
    CHECK_FALSE(rows[3].small_epsilon_degraded);
  }
}
