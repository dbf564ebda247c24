#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "epictrl/ctmc.hpp"
#include "epictrl/experiments.hpp"
#include "epictrl/rates.hpp"

using namespace epictrl;

namespace {

ProcessModel sis_model(int n, double lambda, double mu, int i0) {
    ProcessModel m;
    m.n = n;
    m.preset = Preset::sis;
    m.lambda = RateSchedule::constant(lambda);
    m.mu = RateSchedule::constant(mu);
    m.initial = InitialCondition::state(i0);
    return m;
}

/// Dense matrix exponential by scaling-and-squaring on a Taylor series;
/// fine for the tiny generators used here. Test-side oracle only.
std::vector<std::vector<double>> expm(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    double norm = 0.0;
    for (const auto& row : a) {
        double s = 0.0;
        for (double v : row) s += std::fabs(v);
        norm = std::max(norm, s);
    }
    int squarings = 0;
    while (norm > 0.5) {
        norm /= 2.0;
        ++squarings;
    }
    const double scale = std::pow(2.0, -squarings);
    for (auto& row : a)
        for (double& v : row) v *= scale;

    auto matmul = [n](const std::vector<std::vector<double>>& x,
                      const std::vector<std::vector<double>>& y) {
        std::vector<std::vector<double>> z(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) {
                const double v = x[i][k];
                if (v == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) z[i][j] += v * y[k][j];
            }
        return z;
    };

    std::vector<std::vector<double>> result(n, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> term(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) result[i][i] = term[i][i] = 1.0;
    for (int k = 1; k <= 24; ++k) {
        term = matmul(term, a);
        const double inv = 1.0 / k;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                term[i][j] *= inv;
                result[i][j] += term[i][j];
            }
    }
    for (int s = 0; s < squarings; ++s) result = matmul(result, result);
    return result;
}

}  // namespace

TEST_CASE("empty state is absorbing", "[ctmc]") {
    const Trajectory traj = simulate(sis_model(50, 2.0, 1.0, 0), 100.0, 3);
    REQUIRE(traj.states.size() == 1);
    CHECK(traj.states[0] == 0);
    CHECK(traj.horizon == 100.0);
    CHECK(traj.state_at(99.0) == 0);
}

TEST_CASE("no cures means a monotone path absorbing at n", "[ctmc]") {
    ProcessModel m = sis_model(30, 2.0, 0.0, 1);
    const Trajectory traj = simulate(m, 500.0, 11);
    for (std::size_t k = 1; k < traj.states.size(); ++k)
        CHECK(traj.states[k] == traj.states[k - 1] + 1);
    CHECK(traj.states.back() == 30);
}

TEST_CASE("paths are reproducible and structurally valid", "[ctmc]") {
    const ProcessModel m = sis_model(100, 2.0, 1.0, 10);
    const Trajectory a = simulate(m, 10.0, 12345);
    const Trajectory b = simulate(m, 10.0, 12345);
    CHECK(a.times == b.times);
    CHECK(a.states == b.states);
    const Trajectory c = simulate(m, 10.0, 54321);
    CHECK(a.times != c.times);

    REQUIRE(!a.times.empty());
    CHECK(a.times.front() == 0.0);
    for (std::size_t k = 1; k < a.times.size(); ++k) {
        CHECK(a.times[k] > a.times[k - 1]);
        CHECK(std::abs(a.states[k] - a.states[k - 1]) == 1);
        CHECK(a.states[k] >= 0);
        CHECK(a.states[k] <= m.n);
    }
}

TEST_CASE("thinning proposals never exceed the majorant", "[ctmc]") {
    ProcessModel m = sis_model(60, 2.0, 1.0, 6);
    m.lambda = RateSchedule::sinusoidal(2.0, 0.7, 3.0);
    m.mu = RateSchedule::piecewise_linear({{0.0, 0.5}, {5.0, 1.5}});
    ThinningAudit audit;
    simulate(m, 8.0, 99, &audit);
    REQUIRE(!audit.proposals.empty());
    CHECK(audit.max_ratio <= 1.0 + 1e-12);
    bool any_rejected = false;
    for (const auto& p : audit.proposals) {
        CHECK(p.total_rate <= p.majorant * (1.0 + 1e-12));
        if (!p.accepted) any_rejected = true;
    }
    CHECK(any_rejected);  // time-varying rates must thin something
}

TEST_CASE("state distribution matches the matrix exponential", "[ctmc][slow]") {
    // homogeneous chain, small n: chi-square goodness of fit at the 1% level
    const int n = 6;
    const double lambda = 2.0, mu = 1.0, t = 0.7;
    const int i0 = 3;
    ProcessModel m = sis_model(n, lambda, mu, i0);

    std::vector<std::vector<double>> q(n + 1, std::vector<double>(n + 1, 0.0));
    for (int i = 0; i <= n; ++i) {
        const double up = lambda * i * (n - i) / n;
        const double down = mu * i;
        if (i < n) q[i][i + 1] = up * t;
        if (i > 0) q[i][i - 1] = down * t;
        q[i][i] = -(up + down) * t;
    }
    const auto pt = expm(q);

    const int reps = 20000;
    std::vector<int> counts(n + 1, 0);
    for (int r = 0; r < reps; ++r) {
        const Trajectory traj = simulate(m, t, derive_seed(2024, 0, r));
        counts[traj.states.back()]++;
    }

    // merge bins with expected count < 5 into their left neighbor
    std::vector<double> expected(n + 1);
    for (int j = 0; j <= n; ++j) expected[j] = reps * pt[i0][j];
    std::vector<double> obs_bins, exp_bins;
    for (int j = 0; j <= n; ++j) {
        if (!exp_bins.empty() && (expected[j] < 5.0 || exp_bins.back() < 5.0)) {
            exp_bins.back() += expected[j];
            obs_bins.back() += counts[j];
        } else {
            exp_bins.push_back(expected[j]);
            obs_bins.push_back(counts[j]);
        }
    }
    double chi2 = 0.0;
    for (std::size_t b = 0; b < exp_bins.size(); ++b) {
        const double d = obs_bins[b] - exp_bins[b];
        chi2 += d * d / exp_bins[b];
    }
    // chi-square 99th percentiles for df = 1..7
    const double crit[] = {6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475};
    const std::size_t df = exp_bins.size() - 1;
    REQUIRE(df >= 1);
    REQUIRE(df <= 7);
    CHECK(chi2 < crit[df - 1]);
}

TEST_CASE("scaled mean tracks the limiting path", "[ctmc][slow]") {
    const ProcessModel m = sis_model(1000, 2.0, 1.0, 100);
    const auto ref = exp_detail::reference_path(Preset::sis, m.lambda, m.mu, 0.1, 10.0, 1e-10);
    const int reps = 200;
    double sum = 0.0, sumsq = 0.0;
    for (int r = 0; r < reps; ++r) {
        const Trajectory traj = simulate(m, 10.0, derive_seed(77, 1, r));
        const double z = static_cast<double>(traj.state_at(10.0)) / m.n;
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / reps;
    const double sd = std::sqrt((sumsq / reps - mean * mean) * reps / (reps - 1));
    const double se = sd / std::sqrt(static_cast<double>(reps));
    CHECK(std::fabs(mean - ref.x_at(10.0)) <= 3.0 * se);
}

TEST_CASE("identity control reproduces the nominal path", "[ctmc]") {
    ProcessModel m = sis_model(80, 2.0, 1.0, 8);
    m.lambda = RateSchedule::sinusoidal(2.0, 0.5, 4.0);
    const Trajectory nominal = simulate(m, 6.0, 321);

    StateFeedback fb;
    fb.rates = [&m](double t, int) -> RatePair { return {m.lambda.eval(t), m.mu.eval(t)}; };
    fb.lambda_max = m.lambda.bounds(0.0, 6.0).hi;
    fb.mu_max = m.mu.bounds(0.0, 6.0).hi;
    const Trajectory controlled = simulate_controlled(m, fb, 6.0, 321);
    CHECK(nominal.times == controlled.times);
    CHECK(nominal.states == controlled.states);
}

TEST_CASE("zero cure control forbids down-moves", "[ctmc]") {
    ProcessModel m = sis_model(40, 2.0, 1.0, 4);
    StateFeedback fb;
    fb.rates = [](double, int) -> RatePair { return {2.0, 0.0}; };
    fb.lambda_max = 2.0;
    fb.mu_max = 1.0;
    const Trajectory traj = simulate_controlled(m, fb, 20.0, 5);
    for (std::size_t k = 1; k < traj.states.size(); ++k)
        CHECK(traj.states[k] > traj.states[k - 1]);
}

TEST_CASE("control contract violations are errors", "[ctmc]") {
    ProcessModel m = sis_model(40, 2.0, 1.0, 4);
    StateFeedback fb;
    fb.rates = [](double, int) -> RatePair { return {5.0, 0.0}; };  // above its declared cap
    fb.lambda_max = 2.0;
    fb.mu_max = 1.0;
    CHECK_THROWS_AS(simulate_controlled(m, fb, 20.0, 5), std::runtime_error);
}

TEST_CASE("initial conditions", "[ctmc]") {
    CHECK_THROWS_AS(InitialCondition::distribution({0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(InitialCondition::distribution({0.5, 0.4}), std::invalid_argument);
    CHECK_THROWS_AS(InitialCondition::distribution({-0.1, 1.1}), std::invalid_argument);

    ProcessModel m = sis_model(2, 1.0, 1.0, 0);
    m.initial = InitialCondition::distribution({0.0, 1.0, 0.0});
    const Trajectory traj = simulate(m, 1.0, 9);
    CHECK(traj.states.front() == 1);

    ProcessModel bad = sis_model(5, 1.0, 1.0, 9);
    CHECK_THROWS_AS(simulate(bad, 1.0, 1), std::invalid_argument);
}

TEST_CASE("scaling", "[ctmc]") {
    Trajectory traj;
    traj.n = 4;
    traj.times = {0.0, 0.5, 1.2};
    traj.states = {2, 3, 2};
    traj.horizon = 2.0;
    traj.seed = 7;
    const ScaledTrajectory s = scale(traj);
    CHECK(s.values == std::vector<double>{0.5, 0.75, 0.5});
    CHECK(s.times == traj.times);
    for (std::size_t k = 0; k < s.values.size(); ++k)
        CHECK(s.values[k] * traj.n == traj.states[k]);  // exact round-trip
}

TEST_CASE("pathwise cost is an exact interval sum", "[ctmc]") {
    const Trajectory traj = simulate(sis_model(50, 2.0, 1.0, 5), 8.0, 42);

    HorizonCostSpec unit;
    unit.running = [](double, double, double) { return 1.0; };
    unit.horizon = 5.0;
    CHECK_THAT(pathwise_cost(traj, unit), Catch::Matchers::WithinAbs(5.0, 1e-12));

    HorizonCostSpec terminal_only;
    terminal_only.terminal = [](double z) { return z; };
    terminal_only.horizon = 8.0;
    CHECK(pathwise_cost(traj, terminal_only) ==
          static_cast<double>(traj.state_at(8.0)) / traj.n);

    HorizonCostSpec quad;
    quad.running = [](double z, double, double) { return (z - 0.3) * (z - 0.3); };
    quad.horizon = 8.0;
    const double exact = pathwise_cost(traj, quad);

    // quadrature oracle: midpoint rule on a refinement of the event grid
    double oracle = 0.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const double t0 = traj.times[k];
        const double t1 = (k + 1 < traj.times.size()) ? traj.times[k + 1] : traj.horizon;
        const int sub = 100;
        for (int s = 0; s < sub; ++s) {
            const double tm = t0 + (t1 - t0) * (s + 0.5) / sub;
            const double z = static_cast<double>(traj.state_at(tm)) / traj.n;
            oracle += (z - 0.3) * (z - 0.3) * (t1 - t0) / sub;
        }
    }
    CHECK_THAT(exact, Catch::Matchers::WithinAbs(oracle, 1e-10));

    HorizonCostSpec too_long;
    too_long.running = [](double, double, double) { return 1.0; };
    too_long.horizon = 9.0;
    CHECK_THROWS_AS(pathwise_cost(traj, too_long), std::invalid_argument);
}

TEST_CASE("trajectory csv has the final horizon row", "[ctmc]") {
    const Trajectory traj = simulate(sis_model(10, 2.0, 1.0, 1), 2.0, 5);
    std::ostringstream os;
    write_trajectory_csv(os, traj);
    const std::string csv = os.str();
    CHECK(csv.rfind("t,state,frac", 0) == 0);
    const auto rows = std::count(csv.begin(), csv.end(), '\n');
    CHECK(rows == static_cast<long>(traj.times.size()) + 2);  // header + events + horizon row
}
