#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "epictrl/control.hpp"
#include "epictrl/ctmc.hpp"
#include "epictrl/experiments.hpp"
#include "epictrl/rates.hpp"

using namespace epictrl;

namespace {

/// Brute-force grid argmax of the one-sided stationary objective, smallest
/// maximizer first. Independent of the production search path.
double brute_force_mu(const ProfitSpec& profit, double c_mu, double lambda, double cap,
                      int points = 100000) {
    double best_v = -1e300;
    double best_mu = 0.0;
    for (int k = 0; k < points; ++k) {
        const double mu = cap * k / (points - 1);
        const double v = profit.eval(std::min(profit.mass(), mu / lambda)) - c_mu * mu;
        if (v > best_v + 1e-15) {
            best_v = v;
            best_mu = mu;
        }
    }
    return best_mu;
}

double band_entry_time(const ControlledRun& run, double x_star, double band) {
    for (std::size_t k = 0; k < run.traj.times.size(); ++k)
        if (std::fabs(run.traj.states[k][0] - x_star) <= band) return run.traj.times[k];
    return 1e300;
}

}  // namespace

TEST_CASE("one-sided stationary control", "[control]") {
    const auto lin = ProfitSpec::linear(1.0);
    const double step = 2.0 / (100000 - 1);

    const StationaryControl a =
        stationary_one_sided(lin, ActionCostSpec::linear(0.0, 0.1), 1.0, 2.0);
    CHECK(std::fabs(a.mu_star - brute_force_mu(lin, 0.1, 1.0, 2.0)) <= step + 1e-9);
    CHECK_THAT(a.mu_star, Catch::Matchers::WithinAbs(1.0, 1e-6));
    CHECK_THAT(a.value, Catch::Matchers::WithinAbs(0.9, 1e-6));

    const StationaryControl b =
        stationary_one_sided(lin, ActionCostSpec::linear(0.0, 2.0), 1.0, 2.0);
    CHECK(std::fabs(b.mu_star - brute_force_mu(lin, 2.0, 1.0, 2.0)) <= step + 1e-9);
    CHECK(b.mu_star == 0.0);
    CHECK(b.value == 0.0);

    // cost-free increasing profit: the smallest rate reaching the best state
    const StationaryControl c = stationary_one_sided(lin, ActionCostSpec::zero(), 1.0, 2.0);
    CHECK(std::fabs(c.mu_star - brute_force_mu(lin, 0.0, 1.0, 2.0)) <= step + 1e-9);
    CHECK_THAT(c.mu_star, Catch::Matchers::WithinAbs(1.0, 2e-3));

    CHECK_THROWS_AS(stationary_one_sided(lin, ActionCostSpec::zero(), 1.0, 0.0),
                    std::domain_error);
    CHECK_THROWS_AS(stationary_one_sided(lin, ActionCostSpec::zero(), 0.0, 1.0),
                    std::invalid_argument);
}

TEST_CASE("ideal-trajectory controller", "[control]") {
    const ControlPolicy p = ideal_trajectory_controller(0.5, 10.0, 1.0);
    Controller ctl(p);
    for (double t : {0.0, 1.0, 17.3}) {
        const RatePair r = ctl.rates(t, 0.3);
        CHECK(r.lambda == 10.0);
        CHECK(r.mu == 5.0);
    }

    // kappa scales speed without moving the tracked ratio
    for (double kappa : {1.0, 3.0, 42.0}) {
        Controller c(ideal_trajectory_controller(0.5, kappa, 1.0));
        const RatePair r = c.rates(0.0, 0.1);
        CHECK_THAT(r.mu / r.lambda, Catch::Matchers::WithinAbs(0.5, 1e-15));
    }

    CHECK_THROWS_AS(ideal_trajectory_controller(0.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ideal_trajectory_controller(1.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ideal_trajectory_controller(0.5, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ideal_trajectory_controller(0.5, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("larger kappa reaches the band sooner", "[control]") {
    std::vector<double> entry;
    for (double kappa : {1.0, 10.0, 100.0}) {
        const ControlPolicy p = ideal_trajectory_controller(0.5, kappa, 1.0);
        const ControlledRun run = run_controlled(p, 1.0, 0.1, 30.0, 1e-10);
        entry.push_back(band_entry_time(run, 0.5, 0.01));
    }
    CHECK(entry[1] < entry[0]);
    CHECK(entry[2] < entry[1]);
}

TEST_CASE("reachable target", "[control]") {
    const auto quad = ProfitSpec::quadratic(0.5);
    CHECK(reachable_target(quad, 0.2, 0.4, 0.7) == 0.5);
    CHECK(reachable_target(quad, 0.2, 0.1, 0.3) == 0.3);
    CHECK(reachable_target(quad, 0.9, 0.6, 0.8) == 0.6);
    CHECK_THROWS_AS(reachable_target(quad, 0.2, 0.7, 0.4), std::domain_error);

    // a plateau spanning the interval resolves to its left end
    const auto plateau = ProfitSpec::table({{0.0, 0.0}, {0.2, 1.0}, {0.8, 1.0}, {1.0, 0.0}});
    CHECK(reachable_target(plateau, 0.5, 0.3, 0.7) == 0.3);
}

TEST_CASE("rate-constrained controller holds, creeps, and tracks", "[control]") {
    const auto quad = ProfitSpec::quadratic(0.5);

    // already on target: rates stay put
    ControlPolicy hold = rate_constrained_controller(quad, {-10.0, 10.0, -10.0, 10.0}, 2.0, 1.0,
                                                     5.0, 5.0);
    Controller hold_ctl(hold);
    for (int k = 1; k <= 5; ++k) hold_ctl.advance(0.05 * k, 0.4);
    CHECK(hold_ctl.rates(0.25, 0.4).lambda == 2.0);
    CHECK(hold_ctl.rates(0.25, 0.4).mu == 1.0);

    // tiny derivative budget: the target is the nearest reachable ratio
    ControlPolicy creep = rate_constrained_controller(quad, {-1e-9, 1e-9, -0.01, 0.01}, 1.0, 0.2,
                                                      5.0, 5.0);
    Controller creep_ctl(creep);
    creep_ctl.advance(1.0, 0.2);
    CHECK_THAT(creep_ctl.target(), Catch::Matchers::WithinAbs(0.21, 1e-3));
    CHECK(creep_ctl.target() < 0.5);

    CHECK_THROWS_AS(
        rate_constrained_controller(quad, {0.1, 1.0, -1.0, 1.0}, 1.0, 0.2, 5.0, 5.0),
        std::domain_error);
}

TEST_CASE("looser derivative bounds track no worse", "[control]") {
    const auto quad = ProfitSpec::quadratic(0.5);
    std::vector<double> devs;
    for (double theta : {0.01, 0.1, 1.0}) {
        const ControlPolicy p = rate_constrained_controller(
            quad, {-theta, theta, -theta, theta}, 2.0, 0.6, 5.0, 5.0);
        const ControlledRun run = run_controlled(p, 1.0, 0.3, 60.0, 1e-9);
        double dev = 0.0;
        for (std::size_t k = 0; k < run.traj.times.size(); ++k)
            if (run.traj.times[k] >= 30.0)
                dev = std::max(dev, std::fabs(run.traj.states[k][0] - 0.5));
        devs.push_back(dev);
    }
    CHECK(devs[1] <= devs[0] + 1e-9);
    CHECK(devs[2] <= devs[1] + 1e-9);
}

TEST_CASE("emitted rates and derivatives are admissible", "[control]") {
    const auto quad = ProfitSpec::quadratic(0.5);
    const ThetaBounds th{-0.5, 0.5, -0.4, 0.4};
    const ControlPolicy p = rate_constrained_controller(quad, th, 2.0, 0.4, 3.0, 2.5);
    const ControlledRun run = run_controlled(p, 1.0, 0.1, 40.0, 1e-9);
    for (std::size_t k = 0; k < run.rates.size(); ++k) {
        CHECK(run.rates[k].lambda >= 0.0);
        CHECK(run.rates[k].lambda <= 3.0 + 1e-12);
        CHECK(run.rates[k].mu >= 0.0);
        CHECK(run.rates[k].mu <= 2.5 + 1e-12);
        if (k > 0) {
            const double dt = run.traj.times[k] - run.traj.times[k - 1];
            if (dt <= 0.0) continue;
            const double dl = (run.rates[k].lambda - run.rates[k - 1].lambda) / dt;
            const double dm = (run.rates[k].mu - run.rates[k - 1].mu) / dt;
            CHECK(dl > th.lambda_lo);
            CHECK(dl < th.lambda_hi);
            CHECK(dm > th.mu_lo);
            CHECK(dm < th.mu_hi);
        }
    }
}

TEST_CASE("ode cost evaluation", "[control]") {
    VectorField field;
    field.lambda = RateSchedule::constant(2.0);
    field.mu = RateSchedule::constant(1.0);
    field.mass = 1.0;

    HorizonCostSpec unit;
    unit.running = [](double, double, double) { return 1.0; };
    unit.horizon = 5.0;
    for (const auto& p : {ControlPolicy::stationary(2.0, 1.0),
                          ideal_trajectory_controller(0.4, 5.0, 1.0)})
        CHECK_THAT(evaluate_ode_cost(p, field, 0.3, unit), Catch::Matchers::WithinAbs(5.0, 1e-8));

    // starting at the controlled equilibrium the path is flat
    HorizonCostSpec mixed;
    mixed.running = [](double z, double, double) { return z * z; };
    mixed.terminal = [](double z) { return z; };
    mixed.horizon = 5.0;
    const double J = evaluate_ode_cost(ControlPolicy::stationary(2.0, 1.0), field, 0.5, mixed);
    CHECK_THAT(J, Catch::Matchers::WithinAbs(5.0 * 0.25 + 0.5, 1e-6));
}

TEST_CASE("faster ideal controllers cost less deviation", "[control]") {
    VectorField field;
    field.mass = 1.0;
    const auto quad = ProfitSpec::quadratic(0.5);
    HorizonCostSpec spec;
    spec.running = [&](double z, double, double) { return quad.eval(0.5) - quad.eval(z); };
    spec.horizon = 20.0;

    std::vector<double> costs;
    for (double kappa : {1.0, 10.0, 100.0})
        costs.push_back(
            evaluate_ode_cost(ideal_trajectory_controller(0.5, kappa, 1.0), field, 0.1, spec));
    CHECK(costs[1] < costs[0]);
    CHECK(costs[2] < costs[1]);
    CHECK(costs[2] <= costs[0] / 5.0);
}

TEST_CASE("policy lifting", "[control]") {
    const StateFeedback stat = lift_policy(ControlPolicy::stationary(2.0, 1.0), 100);
    for (int i : {0, 17, 100}) {
        CHECK(stat.rates(3.0, i).lambda == 2.0);
        CHECK(stat.rates(3.0, i).mu == 1.0);
    }
    CHECK(stat.lambda_max == 2.0);
    CHECK(!stat.on_event);

    const StateFeedback ideal = lift_policy(ideal_trajectory_controller(0.25, 8.0, 1.0), 50);
    for (int i : {0, 25, 50}) {
        const RatePair r = ideal.rates(0.0, i);
        CHECK_THAT(r.mu / r.lambda, Catch::Matchers::WithinAbs(0.25, 1e-15));
    }

    Policy tab;
    tab.action.assign(5, RatePair{0.5, 0.25});
    tab.masked.assign(5, 0);
    const ControlPolicy tabular = ControlPolicy::tabular(tab, 4);
    CHECK_THROWS_AS(lift_policy(tabular, 5), std::invalid_argument);
    const StateFeedback fb = lift_policy(tabular, 4);
    CHECK(fb.rates(0.0, 2).lambda == 0.5);

    CHECK(lift_policy(ControlPolicy::rate_constrained(ProfitSpec::quadratic(0.5),
                                                      {-1.0, 1.0, -1.0, 1.0}, 1.0, 0.5, 2.0, 2.0),
                      10)
              .on_event);
}

TEST_CASE("lifted stationary policy concentrates near its equilibrium", "[control][slow]") {
    // sis-preset equilibrium under rates (lambda, mu) sits at 1 - mu/lambda
    ProcessModel m;
    m.n = 1000;
    m.preset = Preset::sis;
    m.lambda = RateSchedule::constant(2.0);
    m.mu = RateSchedule::constant(1.0);
    m.initial = InitialCondition::state(100);
    const ControlPolicy p = ControlPolicy::stationary(2.0, 0.5 * 2.0);  // mu/lambda = 0.5
    const int reps = 200;
    double sum = 0.0, sumsq = 0.0;
    for (int r = 0; r < reps; ++r) {
        const Trajectory traj = simulate_controlled(m, p, 20.0, derive_seed(5150, 0, r));
        const double z = static_cast<double>(traj.state_at(20.0)) / m.n;
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / reps;
    const double sd = std::sqrt((sumsq / reps - mean * mean) * reps / (reps - 1));
    const double se = sd / std::sqrt(static_cast<double>(reps));
    const auto ref = exp_detail::reference_path(Preset::sis, RateSchedule::constant(2.0),
                                                RateSchedule::constant(1.0), 0.1, 20.0, 1e-10);
    CHECK(std::fabs(mean - ref.x_at(20.0)) <= 3.0 * se + 1e-3);
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.5, 0.02));
}

TEST_CASE("lifted constrained controller tracks its mean-field path", "[control][slow]") {
    const auto quad = ProfitSpec::quadratic(0.3);
    auto make_policy = [&]() {
        return rate_constrained_controller(quad, {-0.5, 0.5, -0.5, 0.5}, 2.0, 1.2, 4.0, 4.0);
    };

    HorizonCostSpec probe;  // unused cost, trajectory only
    probe.horizon = 20.0;
    // mean-field path of the tracked (sis) fraction under the same controller
    Controller ctl(make_policy());
    ode_detail::StateVec y{};
    y[0] = 0.1;
    std::vector<double> ts, zs;
    ode_detail::rk45(
        [&](double t, const ode_detail::StateVec& z, ode_detail::StateVec& out) {
            const RatePair r = ctl.rates(t, z[0]);
            out[0] = exp_detail::preset_drift(Preset::sis, z[0], r.lambda, r.mu);
        },
        y, 1, 0.0, 20.0, 1e-9,
        [&](double t, ode_detail::StateVec& z, const ode_detail::StateVec&, double,
            const ode_detail::DenseCoeffs*) {
            ctl.advance(t, z[0]);
            ts.push_back(t);
            zs.push_back(z[0]);
        },
        0.05);

    ProcessModel m;
    m.n = 500;
    m.preset = Preset::sis;
    m.lambda = RateSchedule::constant(2.0);
    m.mu = RateSchedule::constant(1.2);
    m.initial = InitialCondition::state(50);
    const int reps = 100;
    double sum_mid = 0.0, sum_end = 0.0;
    for (int r = 0; r < reps; ++r) {
        const Trajectory traj =
            simulate_controlled(m, make_policy(), 20.0, derive_seed(808, 0, r));
        sum_mid += static_cast<double>(traj.state_at(10.0)) / m.n;
        sum_end += static_cast<double>(traj.state_at(20.0)) / m.n;
    }
    auto ode_at = [&](double t) {
        std::size_t best = 0;
        for (std::size_t k = 0; k < ts.size(); ++k)
            if (std::fabs(ts[k] - t) < std::fabs(ts[best] - t)) best = k;
        return zs[best];
    };
    CHECK_THAT(sum_mid / reps, Catch::Matchers::WithinAbs(ode_at(10.0), 0.02));
    CHECK_THAT(sum_end / reps, Catch::Matchers::WithinAbs(ode_at(20.0), 0.02));
}
