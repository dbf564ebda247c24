#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "epictrl/rates.hpp"
#include "epictrl/rng.hpp"

namespace epictrl {

/// Transition-rate convention for the birth-death chain on {0..n}.
/// `paper`: up-rate lambda*i*(n-i)/n, down-rate mu*(n-i).
/// `sis`: up-rate lambda*i*(n-i)/n, down-rate mu*i (i counts infected).
enum class Preset { paper, sis };

inline const char* to_string(Preset p) { return p == Preset::paper ? "paper" : "sis"; }

struct RatePair {
    double lambda = 0.0;
    double mu = 0.0;
};

class InitialCondition {
public:
    static InitialCondition state(int i0) {
        InitialCondition c;
        c.deterministic_ = true;
        c.i0_ = i0;
        return c;
    }

    /// Probability vector over {0..n}; must sum to 1 within 1e-12.
    static InitialCondition distribution(std::vector<double> probs) {
        if (probs.empty())
            throw std::invalid_argument("InitialCondition: empty probability vector");
        double sum = 0.0;
        for (double p : probs) {
            if (!(p >= 0.0))
                throw std::invalid_argument("InitialCondition: negative probability");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-12)
            throw std::invalid_argument("InitialCondition: probabilities must sum to 1");
        InitialCondition c;
        c.deterministic_ = false;
        c.probs_ = std::move(probs);
        return c;
    }

    bool deterministic() const noexcept { return deterministic_; }
    int fixed_state() const noexcept { return i0_; }

    int sample(int n, SplitMix64& rng) const {
        if (deterministic_) {
            if (i0_ < 0 || i0_ > n)
                throw std::invalid_argument("InitialCondition: state outside {0..n}");
            return i0_;
        }
        if (static_cast<int>(probs_.size()) != n + 1)
            throw std::invalid_argument("InitialCondition: probability vector must have n+1 entries");
        const double u = rng.uniform01();
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            acc += probs_[i];
            if (u < acc) return i;
        }
        return n;
    }

private:
    bool deterministic_ = true;
    int i0_ = 0;
    std::vector<double> probs_;
};

struct ProcessModel {
    int n = 1;
    Preset preset = Preset::sis;
    RateSchedule lambda = RateSchedule::constant(0.0);
    RateSchedule mu = RateSchedule::constant(0.0);
    InitialCondition initial = InitialCondition::state(0);
};

/// Event-time sample path: times strictly increasing from 0, states after
/// each event, consecutive states differing by exactly one.
struct Trajectory {
    std::vector<double> times;
    std::vector<int> states;
    int n = 1;
    double horizon = 0.0;
    std::uint64_t seed = 0;

    double final_time() const { return times.empty() ? 0.0 : times.back(); }

    int state_at(double t) const {
        if (times.empty() || t < times.front())
            throw std::domain_error("Trajectory::state_at: time before path start");
        // last event time <= t
        std::size_t lo = 0, hi = times.size();
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (times[mid] <= t) lo = mid; else hi = mid;
        }
        return states[lo];
    }
};

struct ScaledTrajectory {
    std::vector<double> times;
    std::vector<double> values;  // state / n, in [0, 1]
    int n = 1;
    double horizon = 0.0;
    std::uint64_t seed = 0;
};

inline ScaledTrajectory scale(const Trajectory& traj) {
    ScaledTrajectory s;
    s.times = traj.times;
    s.values.reserve(traj.states.size());
    for (int v : traj.states) s.values.push_back(static_cast<double>(v) / traj.n);
    s.n = traj.n;
    s.horizon = traj.horizon;
    s.seed = traj.seed;
    return s;
}

/// State-feedback control for the finite-n chain. `rates` is consulted at
/// every proposal time; `on_event` (optional) advances stateful controllers
/// and fires after each accepted jump.
struct StateFeedback {
    std::function<RatePair(double t, int state)> rates;
    std::function<void(double t, int state)> on_event;
    double lambda_max = 0.0;
    double mu_max = 0.0;
};

/// Optional record of thinning proposals, for auditing that accepted event
/// rates never exceed the majorant.
struct ThinningAudit {
    struct Proposal {
        double t;
        int state;
        double total_rate;
        double majorant;
        bool accepted;
    };
    std::vector<Proposal> proposals;
    double max_ratio = 0.0;  // sup of total_rate / majorant over proposals
};

namespace ctmc_detail {

inline double up_rate(Preset, int n, int i, double lambda) {
    return lambda * static_cast<double>(i) * static_cast<double>(n - i) / n;
}

inline double down_rate(Preset preset, int n, int i, double mu) {
    if (i == 0) return 0.0;  // no state below 0
    return preset == Preset::paper ? mu * static_cast<double>(n - i)
                                   : mu * static_cast<double>(i);
}

template <typename RateFn>
Trajectory run_thinning(const ProcessModel& model, double horizon, std::uint64_t seed,
                        RateFn&& rates_at, double lambda_hi, double mu_hi,
                        const std::function<void(double, int)>& on_event, ThinningAudit* audit) {
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be > 0");
    if (model.n < 1) throw std::invalid_argument("simulate: n must be >= 1");

    SplitMix64 rng(seed);
    const int n = model.n;
    int i = model.initial.sample(n, rng);

    Trajectory traj;
    traj.n = n;
    traj.horizon = horizon;
    traj.seed = seed;
    traj.times.push_back(0.0);
    traj.states.push_back(i);

    double t = 0.0;
    for (;;) {
        const double up_max = up_rate(model.preset, n, i, lambda_hi);
        const double down_max = down_rate(model.preset, n, i, mu_hi);
        const double majorant = up_max + down_max;
        if (!(majorant > 0.0)) break;  // absorbing under any admissible rates

        t += rng.exponential(majorant);
        if (t >= horizon) break;

        const RatePair r = rates_at(t, i);
        const double u = up_rate(model.preset, n, i, r.lambda);
        const double d = down_rate(model.preset, n, i, r.mu);
        const double total = u + d;
        if (total > majorant * (1.0 + 1e-9))
            throw std::runtime_error("simulate: event rate exceeded the thinning majorant");
        if (audit) {
            audit->proposals.push_back({t, i, total, majorant, true});
            audit->max_ratio = std::max(audit->max_ratio, total / majorant);
        }

        const double w = rng.uniform01() * majorant;
        if (w < u) {
            ++i;
        } else if (w < total) {
            --i;
        } else {
            if (audit) audit->proposals.back().accepted = false;
            continue;  // thinning rejection: self-loop
        }
        traj.times.push_back(t);
        traj.states.push_back(i);
        if (on_event) on_event(t, i);
    }
    return traj;
}

}  // namespace ctmc_detail

/// Exact sample path of the time-inhomogeneous chain on [0, horizon] by
/// thinning against per-state majorant rates built from the schedules'
/// horizon-wide bounds. Identical (model, horizon, seed) reproduce the path
/// bit for bit.
inline Trajectory simulate(const ProcessModel& model, double horizon, std::uint64_t seed,
                           ThinningAudit* audit = nullptr) {
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be > 0");
    const double lambda_hi = model.lambda.bounds(0.0, horizon).hi;
    const double mu_hi = model.mu.bounds(0.0, horizon).hi;
    return ctmc_detail::run_thinning(
        model, horizon, seed,
        [&](double t, int) -> RatePair { return {model.lambda.eval(t), model.mu.eval(t)}; },
        lambda_hi, mu_hi, nullptr, audit);
}

/// Controlled chain: rates come from the policy instead of the schedules.
/// The policy must emit rates inside [0, lambda_max] x [0, mu_max]; a
/// violation is a contract error.
inline Trajectory simulate_controlled(const ProcessModel& model, const StateFeedback& policy,
                                      double horizon, std::uint64_t seed,
                                      ThinningAudit* audit = nullptr) {
    if (!policy.rates) throw std::invalid_argument("simulate_controlled: policy has no rate function");
    if (!(policy.lambda_max >= 0.0) || !(policy.mu_max >= 0.0))
        throw std::invalid_argument("simulate_controlled: invalid rate caps");
    const double eps_l = 1e-9 * (1.0 + policy.lambda_max);
    const double eps_m = 1e-9 * (1.0 + policy.mu_max);
    return ctmc_detail::run_thinning(
        model, horizon, seed,
        [&](double t, int i) -> RatePair {
            const RatePair r = policy.rates(t, i);
            if (r.lambda < -eps_l || r.lambda > policy.lambda_max + eps_l || r.mu < -eps_m ||
                r.mu > policy.mu_max + eps_m)
                throw std::runtime_error("simulate_controlled: policy emitted rates outside its caps");
            return r;
        },
        policy.lambda_max, policy.mu_max, policy.on_event, audit);
}

/// Finite-horizon cost of a path: running cost on (scaled state, action)
/// plus a terminal cost. The path is piecewise constant and the action is
/// held per inter-event interval, so the integral is an exact finite sum.
struct HorizonCostSpec {
    std::function<double(double z, double lambda, double mu)> running;  // bounded
    std::function<double(double z)> terminal;                           // bounded
    double horizon = 0.0;
};

inline double pathwise_cost(const Trajectory& traj, const HorizonCostSpec& spec,
                            const std::function<RatePair(double, int)>& action = nullptr,
                            double mass = 1.0) {
    if (!(spec.horizon > 0.0)) throw std::invalid_argument("pathwise_cost: horizon must be > 0");
    if (spec.horizon > traj.horizon * (1.0 + 1e-12))
        throw std::invalid_argument("pathwise_cost: trajectory does not cover the cost horizon");
    const double T = spec.horizon;
    double total = 0.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const double t0 = traj.times[k];
        if (t0 >= T) break;
        const double t1 = (k + 1 < traj.times.size()) ? std::min(traj.times[k + 1], T) : T;
        if (t1 <= t0) continue;
        const double z = static_cast<double>(traj.states[k]) / traj.n * mass;
        RatePair u{0.0, 0.0};
        if (action) u = action(t0, traj.states[k]);
        if (spec.running) total += spec.running(z, u.lambda, u.mu) * (t1 - t0);
    }
    if (spec.terminal) {
        const double zT = static_cast<double>(traj.state_at(T)) / traj.n * mass;
        total += spec.terminal(zT);
    }
    return total;
}

/// CSV export: header `t,state,frac`, one row per event plus a final row at
/// the horizon.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,state,frac\n";
    os.precision(17);
    for (std::size_t k = 0; k < traj.times.size(); ++k)
        os << traj.times[k] << ',' << traj.states[k] << ','
           << static_cast<double>(traj.states[k]) / traj.n << '\n';
    os << traj.horizon << ',' << traj.states.back() << ','
       << static_cast<double>(traj.states.back()) / traj.n << '\n';
}

}  // namespace epictrl
