#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "epictrl/ctmc.hpp"
#include "epictrl/mdp.hpp"
#include "epictrl/meanfield.hpp"
#include "epictrl/rates.hpp"

namespace epictrl {

/// Rate-of-change box for the constrained controller; both channels must
/// straddle zero so the ratio can move in either direction.
struct ThetaBounds {
    double lambda_lo = -1.0;
    double lambda_hi = 1.0;
    double mu_lo = -1.0;
    double mu_hi = 1.0;
};

/// Argmax of P over a nonempty ratio interval inside [0, c]: x_star when
/// contained, otherwise the endpoint on the rising side; ties go to the
/// smaller value. `ratio_now` is caller context and does not enter the
/// argmax.
inline double reachable_target(const ProfitSpec& profit, double ratio_now, double lo, double hi) {
    (void)ratio_now;
    const double c = profit.mass();
    lo = std::max(lo, 0.0);
    hi = std::min(hi, c);
    if (!(lo <= hi)) throw std::domain_error("reachable_target: empty interval");
    std::vector<double> candidates{lo, hi, std::min(std::max(profit.x_star(), lo), hi)};
    if (profit.kind() == ProfitSpec::Kind::table)
        for (const auto& p : profit.table_points())
            if (p.first > lo && p.first < hi) candidates.push_back(p.first);
    std::sort(candidates.begin(), candidates.end());
    double best_x = candidates.front();
    double best_v = profit.eval(best_x);
    for (double x : candidates) {
        const double v = profit.eval(x);
        if (v > best_v) {
            best_v = v;
            best_x = x;
        }
    }
    return best_x;
}

class ControlPolicy {
public:
    enum class Kind { nominal, stationary, ideal_trajectory, rate_constrained, tabular };

    /// Follow the given schedules (state-independent).
    static ControlPolicy nominal(RateSchedule lambda, RateSchedule mu, double mass = 1.0) {
        ControlPolicy p;
        p.kind_ = Kind::nominal;
        p.lambda_sched_ = std::move(lambda);
        p.mu_sched_ = std::move(mu);
        p.mass_ = mass;
        return p;
    }

    static ControlPolicy stationary(double lambda, double mu, double mass = 1.0) {
        if (!(lambda >= 0.0) || !(mu >= 0.0))
            throw std::invalid_argument("ControlPolicy: stationary rates must be >= 0");
        ControlPolicy p;
        p.kind_ = Kind::stationary;
        p.lambda0_ = lambda;
        p.mu0_ = mu;
        p.mass_ = mass;
        return p;
    }

    /// Hold mu/lambda = x_star with rates (kappa*delta_hat, kappa*delta_hat*x_star);
    /// kappa scales the approach speed without moving the tracked state.
    static ControlPolicy ideal_trajectory(double x_star, double kappa, double delta_hat,
                                          double mass = 1.0) {
        if (!(x_star > 0.0 && x_star < mass))
            throw std::invalid_argument(
                "ideal_trajectory: x_star at the simplex boundary; use a one-sided stationary "
                "policy (mu = 0 for the zero state, mu > lambda*c for the full state) instead");
        if (!(kappa >= 1.0)) throw std::invalid_argument("ideal_trajectory: kappa must be >= 1");
        if (!(delta_hat > 0.0)) throw std::invalid_argument("ideal_trajectory: delta_hat must be > 0");
        ControlPolicy p;
        p.kind_ = Kind::ideal_trajectory;
        p.x_star_ = x_star;
        p.kappa_ = kappa;
        p.delta_hat_ = delta_hat;
        p.mass_ = mass;
        return p;
    }

    /// Track the best reachable ratio under derivative bounds, re-planned at
    /// every control step; rates stay in [floor, caps].
    static ControlPolicy rate_constrained(ProfitSpec profit, ThetaBounds theta, double lambda0,
                                          double mu0, double lambda_cap, double mu_cap,
                                          double rate_floor = 1e-6) {
        if (!(theta.lambda_lo < 0.0 && theta.lambda_hi > 0.0 && theta.mu_lo < 0.0 &&
              theta.mu_hi > 0.0))
            throw std::domain_error("rate_constrained: theta bounds must straddle zero");
        if (!(lambda0 > 0.0 && mu0 >= 0.0))
            throw std::invalid_argument("rate_constrained: initial rates must be positive");
        if (!(lambda_cap >= lambda0 && mu_cap >= mu0))
            throw std::invalid_argument("rate_constrained: initial rates exceed the caps");
        ControlPolicy p;
        p.kind_ = Kind::rate_constrained;
        p.profit_ = std::move(profit);
        p.theta_ = theta;
        p.lambda0_ = lambda0;
        p.mu0_ = mu0;
        p.lambda_cap_ = lambda_cap;
        p.mu_cap_ = mu_cap;
        p.rate_floor_ = rate_floor;
        p.mass_ = p.profit_.mass();
        p.x_star_ = p.profit_.x_star();
        return p;
    }

    /// Per-state table from an MDP solve; lifts only to the matching n.
    static ControlPolicy tabular(Policy policy, int n, double mass = 1.0) {
        if (static_cast<int>(policy.action.size()) != n + 1)
            throw std::invalid_argument("ControlPolicy: tabular policy size mismatch");
        ControlPolicy p;
        p.kind_ = Kind::tabular;
        p.table_ = std::move(policy);
        p.table_n_ = n;
        p.mass_ = mass;
        return p;
    }

    Kind kind() const noexcept { return kind_; }
    double mass() const noexcept { return mass_; }
    double x_star() const noexcept { return x_star_; }
    double kappa() const noexcept { return kappa_; }
    double delta_hat() const noexcept { return delta_hat_; }
    double lambda0() const noexcept { return lambda0_; }
    double mu0() const noexcept { return mu0_; }
    const ThetaBounds& theta() const noexcept { return theta_; }
    const ProfitSpec& profit() const noexcept { return profit_; }
    const Policy& table() const noexcept { return table_; }
    int table_n() const noexcept { return table_n_; }
    double rate_floor() const noexcept { return rate_floor_; }
    const RateSchedule& lambda_schedule() const noexcept { return lambda_sched_; }
    const RateSchedule& mu_schedule() const noexcept { return mu_sched_; }

    /// Admissible-rate caps over [0, horizon].
    RatePair caps(double horizon = std::numeric_limits<double>::infinity()) const {
        switch (kind_) {
        case Kind::nominal:
            return {lambda_sched_.bounds(0.0, horizon).hi, mu_sched_.bounds(0.0, horizon).hi};
        case Kind::stationary:
            return {lambda0_, mu0_};
        case Kind::ideal_trajectory:
            return {kappa_ * delta_hat_, kappa_ * delta_hat_ * x_star_};
        case Kind::rate_constrained:
            return {lambda_cap_, mu_cap_};
        case Kind::tabular: {
            RatePair c{0.0, 0.0};
            for (const auto& a : table_.action) {
                c.lambda = std::max(c.lambda, a.lambda);
                c.mu = std::max(c.mu, a.mu);
            }
            return c;
        }
        }
        return {0.0, 0.0};
    }

private:
    Kind kind_ = Kind::stationary;
    double mass_ = 1.0;
    RateSchedule lambda_sched_ = RateSchedule::constant(0.0);
    RateSchedule mu_sched_ = RateSchedule::constant(0.0);
    double lambda0_ = 0.0, mu0_ = 0.0;
    double x_star_ = 0.5, kappa_ = 1.0, delta_hat_ = 1.0;
    ProfitSpec profit_ = ProfitSpec::quadratic(0.5);
    ThetaBounds theta_;
    double lambda_cap_ = 0.0, mu_cap_ = 0.0, rate_floor_ = 1e-6;
    Policy table_;
    int table_n_ = 0;
};

/// Per-run controller instance. Pure policies evaluate live; the
/// rate-constrained kind holds rates between advance() calls, which fire on
/// accepted integrator steps or simulated events, never mid-step.
class Controller {
public:
    explicit Controller(ControlPolicy policy) : policy_(std::move(policy)) {
        if (policy_.kind() == ControlPolicy::Kind::rate_constrained) {
            lam_ = policy_.lambda0();
            mu_ = policy_.mu0();
            target_ = std::min(std::max(policy_.x_star(), 0.0), policy_.mass());
        }
    }

    bool stateful() const noexcept {
        return policy_.kind() == ControlPolicy::Kind::rate_constrained;
    }

    RatePair rates(double t, double x) const {
        switch (policy_.kind()) {
        case ControlPolicy::Kind::nominal:
            return {policy_.lambda_schedule().eval(t), policy_.mu_schedule().eval(t)};
        case ControlPolicy::Kind::stationary:
            return {policy_.lambda0(), policy_.mu0()};
        case ControlPolicy::Kind::ideal_trajectory:
            return {policy_.kappa() * policy_.delta_hat(),
                    policy_.kappa() * policy_.delta_hat() * policy_.x_star()};
        case ControlPolicy::Kind::rate_constrained:
            return {lam_, mu_};
        case ControlPolicy::Kind::tabular: {
            const int i = static_cast<int>(std::lround(x / policy_.mass() * policy_.table_n()));
            const auto& a = policy_.table().action.at(std::min(std::max(i, 0), policy_.table_n()));
            return a;
        }
        }
        return {0.0, 0.0};
    }

    /// Current tracked state: x_star for the ideal policy, the reachable
    /// target for the constrained one, NaN otherwise.
    double target() const noexcept {
        switch (policy_.kind()) {
        case ControlPolicy::Kind::ideal_trajectory:
            return policy_.x_star();
        case ControlPolicy::Kind::rate_constrained:
            return target_;
        default:
            return std::numeric_limits<double>::quiet_NaN();
        }
    }

    void advance(double t, double x) {
        (void)x;
        if (!stateful()) return;
        const double dt = t - last_t_;
        last_t_ = t;
        if (!(dt > 0.0)) return;

        const ThetaBounds& th = policy_.theta();
        const double f = kInterior;  // keeps emitted derivatives strictly inside the open box
        const double floor = policy_.rate_floor();
        const RatePair cap = policy_.caps();

        const double lam_lo = std::max(floor, lam_ + f * th.lambda_lo * dt);
        const double lam_hi = std::min(cap.lambda, lam_ + f * th.lambda_hi * dt);
        const double mu_lo = std::max(0.0, mu_ + f * th.mu_lo * dt);
        const double mu_hi = std::min(cap.mu, mu_ + f * th.mu_hi * dt);
        const double r_lo = mu_lo / lam_hi;
        const double r_hi = mu_hi / lam_lo;
        target_ = reachable_target(policy_.profit(), mu_ / lam_, r_lo, r_hi);

        const double r_now = mu_ / lam_;
        if (std::fabs(r_now - target_) <= kHysteresis * std::max(policy_.x_star(), 1e-12)) {
            // already on target (within the hysteresis band): hold rates
        } else if (target_ >= r_lo && target_ <= r_hi) {
            // target reachable this step: land on it exactly, moving as few
            // channels as possible (mu first, then lambda)
            double nl = lam_;
            double nm = target_ * nl;
            if (nm > mu_hi) {
                nm = mu_hi;
                nl = (target_ > 0.0) ? nm / target_ : lam_hi;
            } else if (nm < mu_lo) {
                nm = mu_lo;
                nl = (target_ > 0.0) ? nm / target_ : lam_hi;
            }
            lam_ = std::min(std::max(nl, lam_lo), lam_hi);
            mu_ = std::min(std::max(nm, mu_lo), mu_hi);
        } else if (target_ > r_now) {
            lam_ = lam_lo;
            mu_ = mu_hi;
        } else {
            lam_ = lam_hi;
            mu_ = mu_lo;
        }
    }

    const ControlPolicy& policy() const noexcept { return policy_; }

private:
    static constexpr double kInterior = 0.999;
    static constexpr double kHysteresis = 1e-3;  // fraction of x_star

    ControlPolicy policy_;
    double lam_ = 0.0, mu_ = 0.0;
    double last_t_ = 0.0;
    double target_ = std::numeric_limits<double>::quiet_NaN();
};

struct StationaryControl {
    double mu_star = 0.0;
    double value = 0.0;
};

namespace control_detail {

template <typename F>
double golden_max(F&& g, double a, double b, double tol) {
    constexpr double gr = 0.6180339887498949;
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = g(x1), f2 = g(x2);
    while (b - a > tol) {
        if (f1 >= f2) {  // ties keep the left interval
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = g(x2);
        }
    }
    // smallest maximizer within the terminal bracket
    double best_x = a, best_v = g(a);
    for (int k = 1; k <= 32; ++k) {
        const double x = a + (b - a) * k / 32.0;
        const double v = g(x);
        if (v > best_v + 1e-15) {
            best_v = v;
            best_x = x;
        }
    }
    return best_x;
}

}  // namespace control_detail

/// Optimal one-sided stationary cure rate: the smallest maximizer of
/// P(min{c, mu/lambda}) - C_mu(mu) over [0, mu_cap], found by a 1e3-point
/// grid plus golden-section refinement of each candidate bracket.
inline StationaryControl stationary_one_sided(const ProfitSpec& profit, const ActionCostSpec& cost,
                                              double lambda_fixed, double mu_cap) {
    if (!(mu_cap > 0.0)) throw std::domain_error("stationary_one_sided: mu_cap must be > 0");
    if (!(lambda_fixed > 0.0))
        throw std::invalid_argument("stationary_one_sided: lambda must be > 0");
    if (cost.kind() == ActionCostSpec::Kind::general)
        throw std::invalid_argument("stationary_one_sided: general action costs not supported here");

    const double c = profit.mass();
    auto objective = [&](double mu) {
        return profit.eval(std::min(c, mu / lambda_fixed)) - cost.eval(0.0, mu);
    };

    constexpr int kGrid = 1000;
    std::vector<double> g(kGrid + 1);
    for (int k = 0; k <= kGrid; ++k) g[k] = objective(mu_cap * k / kGrid);

    std::vector<double> candidates;
    for (int k = 0; k <= kGrid; ++k) {
        const bool left_ok = (k == 0) || g[k] >= g[k - 1];
        const bool right_ok = (k == kGrid) || g[k] >= g[k + 1];
        if (left_ok && right_ok) {
            const double a = mu_cap * std::max(0, k - 1) / kGrid;
            const double b = mu_cap * std::min(kGrid, k + 1) / kGrid;
            candidates.push_back(control_detail::golden_max(objective, a, b, mu_cap * 1e-9));
        }
    }
    double best_v = -std::numeric_limits<double>::infinity();
    for (double x : candidates) best_v = std::max(best_v, objective(x));
    double best_x = std::numeric_limits<double>::infinity();
    const double tie = 1e-12 * (1.0 + std::fabs(best_v));
    for (double x : candidates)
        if (objective(x) >= best_v - tie) best_x = std::min(best_x, x);
    return {best_x, objective(best_x)};
}

inline ControlPolicy ideal_trajectory_controller(double x_star, double kappa, double delta_hat,
                                                 double mass = 1.0) {
    return ControlPolicy::ideal_trajectory(x_star, kappa, delta_hat, mass);
}

inline ControlPolicy rate_constrained_controller(ProfitSpec profit, ThetaBounds theta,
                                                 double lambda0, double mu0, double lambda_cap,
                                                 double mu_cap, double rate_floor = 1e-6) {
    return ControlPolicy::rate_constrained(std::move(profit), theta, lambda0, mu0, lambda_cap,
                                           mu_cap, rate_floor);
}

/// A controlled mean-field run: the state path plus the rates and tracked
/// target at each accepted step, and the accumulated cost when a spec is
/// attached.
struct ControlledRun {
    OdeTrajectory traj;
    std::vector<RatePair> rates;
    std::vector<double> target;
    double cost = 0.0;
};

inline ControlledRun run_controlled(const ControlPolicy& policy, double mass, double x0,
                                    double horizon, double tol,
                                    const HorizonCostSpec* cost_spec = nullptr,
                                    double max_control_step = 0.05) {
    if (!(x0 >= 0.0 && x0 <= mass))
        throw std::domain_error("run_controlled: initial state outside [0, c]");
    const double T = cost_spec ? cost_spec->horizon : horizon;
    if (cost_spec && T > horizon)
        throw std::invalid_argument("run_controlled: cost horizon exceeds the run horizon");

    Controller ctl(policy);
    const RatePair cap = policy.caps(horizon);
    const double eps_l = 1e-9 * (1.0 + cap.lambda);
    const double eps_m = 1e-9 * (1.0 + cap.mu);

    ControlledRun run;
    run.traj.dim = 1;
    run.traj.mass = mass;
    run.traj.tol = tol;

    const int dim = cost_spec && cost_spec->running ? 2 : 1;
    ode_detail::StateVec y{};
    y[0] = x0;
    const double cap_step =
        ctl.stateful() ? max_control_step : std::numeric_limits<double>::infinity();

    double final_cost_state = 0.0;
    ode_detail::rk45(
        [&](double t, const ode_detail::StateVec& z, ode_detail::StateVec& out) {
            // trial stages may poke just outside the simplex; user-facing
            // callbacks see the clamped state
            const double zc = std::min(std::max(z[0], 0.0), mass);
            const RatePair r = ctl.rates(t, zc);
            if (r.lambda < -eps_l || r.lambda > cap.lambda + eps_l || r.mu < -eps_m ||
                r.mu > cap.mu + eps_m)
                throw std::runtime_error("run_controlled: policy emitted rates outside its caps");
            out[0] = r.lambda * z[0] * z[0] - (r.lambda * mass + r.mu) * z[0] + r.mu * mass;
            if (dim > 1) out[1] = cost_spec->running(zc, r.lambda, r.mu);
        },
        y, dim, 0.0, T, tol,
        [&](double t, ode_detail::StateVec& z, const ode_detail::StateVec& f, double h,
            const ode_detail::DenseCoeffs* dc) {
            if (z[0] < 0.0 || z[0] > mass) {
                if (z[0] < -1e-9 || z[0] > mass + 1e-9)
                    throw std::runtime_error("run_controlled: state left [0, c] beyond tolerance");
                z[0] = std::min(std::max(z[0], 0.0), mass);
            }
            ctl.advance(t, z[0]);
            run.traj.times.push_back(t);
            run.traj.states.push_back({z[0], 0.0});
            run.traj.derivs.push_back({f[0], 0.0});
            run.traj.step_sizes.push_back(h);
            if (dc) run.traj.dense.push_back(*dc);
            run.rates.push_back(ctl.rates(t, z[0]));
            run.target.push_back(ctl.target());
            final_cost_state = (dim > 1) ? z[1] : 0.0;
        },
        cap_step);

    run.cost = final_cost_state;
    if (cost_spec && cost_spec->terminal) run.cost += cost_spec->terminal(run.traj.states.back()[0]);
    return run;
}

/// Finite-horizon cost of the controlled mean-field path; the field supplies
/// the mass, the policy supplies the rates.
inline double evaluate_ode_cost(const ControlPolicy& policy, const VectorField& field, double x0,
                                const HorizonCostSpec& spec, double tol = 1e-8) {
    const ControlledRun run = run_controlled(policy, field.mass, x0, spec.horizon, tol, &spec);
    return run.cost;
}

/// State-feedback lift to the n-system: mean-field policies read the scaled
/// state i/n * c; tabular policies index directly and require matching n.
/// The returned feedback owns a fresh controller confined to one run.
inline StateFeedback lift_policy(const ControlPolicy& policy, int n,
                                 double horizon = std::numeric_limits<double>::infinity()) {
    if (n < 1) throw std::invalid_argument("lift_policy: n must be >= 1");
    if (policy.kind() == ControlPolicy::Kind::tabular && policy.table_n() != n)
        throw std::invalid_argument("lift_policy: tabular policy was solved for a different n");

    auto ctl = std::make_shared<Controller>(policy);
    const double mass = policy.mass();
    const RatePair cap = policy.caps(horizon);

    StateFeedback fb;
    fb.lambda_max = cap.lambda;
    fb.mu_max = cap.mu;
    if (policy.kind() == ControlPolicy::Kind::tabular) {
        fb.rates = [ctl, n](double, int i) {
            const auto& tab = ctl->policy().table();
            return tab.action.at(static_cast<std::size_t>(std::min(std::max(i, 0), n)));
        };
    } else {
        fb.rates = [ctl, n, mass](double t, int i) {
            return ctl->rates(t, static_cast<double>(i) / n * mass);
        };
    }
    if (ctl->stateful())
        fb.on_event = [ctl, n, mass](double t, int i) {
            ctl->advance(t, static_cast<double>(i) / n * mass);
        };
    return fb;
}

/// Controlled simulation of the finite-n chain under a lifted policy.
inline Trajectory simulate_controlled(const ProcessModel& model, const ControlPolicy& policy,
                                      double horizon, std::uint64_t seed,
                                      ThinningAudit* audit = nullptr) {
    return simulate_controlled(model, lift_policy(policy, model.n, horizon), horizon, seed, audit);
}

}  // namespace epictrl
