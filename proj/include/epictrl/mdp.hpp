#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "epictrl/ctmc.hpp"
#include "epictrl/lp.hpp"
#include "epictrl/rates.hpp"

namespace epictrl {

/// Total-cost control problem for the uniformized birth-death chain with a
/// cost-free absorbing target at the profit-maximizing grid state.
class MdpProblem {
public:
    /// nu = 0 requests the default uniformization constant,
    /// 1.25 x (max total outflow at the rate caps).
    static MdpProblem make(int n, Preset preset, double lambda_max, double mu_max,
                           ProfitSpec profit, ActionCostSpec action_cost, double nu = 0.0) {
        if (n < 1) throw std::invalid_argument("MdpProblem: n must be >= 1");
        if (!(lambda_max >= 0.0) || !(mu_max >= 0.0))
            throw std::invalid_argument("MdpProblem: rate caps must be >= 0");
        MdpProblem p;
        p.n_ = n;
        p.preset_ = preset;
        p.lambda_max_ = lambda_max;
        p.mu_max_ = mu_max;
        p.profit_ = std::move(profit);
        p.action_cost_ = std::move(action_cost);

        double outflow = 0.0;
        for (int i = 0; i <= n; ++i)
            outflow = std::max(outflow, ctmc_detail::up_rate(preset, n, i, lambda_max) +
                                            ctmc_detail::down_rate(preset, n, i, mu_max));
        if (nu == 0.0) nu = 1.25 * outflow;
        if (!(nu > outflow))
            throw std::invalid_argument("MdpProblem: uniformization constant must exceed the max total rate");
        p.nu_ = nu;

        p.i_star_ = argmax_state(p.profit_, n);
        const double scale = p.profit_.mass() / n;
        const double peak = p.profit_.eval(p.i_star_ * scale);
        p.cost_.resize(n + 1);
        for (int i = 0; i <= n; ++i) p.cost_[i] = peak - p.profit_.eval(i * scale);

        // states that cannot reach the target under any action are flagged
        // infinite up front instead of being approximated by large numbers
        p.finite_.assign(n + 1, 0);
        p.finite_[p.i_star_] = 1;
        for (int i = p.i_star_ - 1; i >= 0; --i)
            p.finite_[i] = p.finite_[i + 1] &&
                           ctmc_detail::up_rate(preset, n, i, lambda_max) > 0.0;
        for (int i = p.i_star_ + 1; i <= n; ++i)
            p.finite_[i] = p.finite_[i - 1] &&
                           ctmc_detail::down_rate(preset, n, i, mu_max) > 0.0;

        if (p.action_cost_.kind() == ActionCostSpec::Kind::general)
            for (const auto& e : p.action_cost_.table())
                if (e.lambda > lambda_max * (1.0 + 1e-12) || e.mu > mu_max * (1.0 + 1e-12))
                    throw std::invalid_argument("MdpProblem: action table entry exceeds the rate caps");
        return p;
    }

    int n() const noexcept { return n_; }
    Preset preset() const noexcept { return preset_; }
    double lambda_max() const noexcept { return lambda_max_; }
    double mu_max() const noexcept { return mu_max_; }
    double nu() const noexcept { return nu_; }
    int i_star() const noexcept { return i_star_; }
    const ProfitSpec& profit() const noexcept { return profit_; }
    const ActionCostSpec& action_cost() const noexcept { return action_cost_; }

    /// Normalized stage cost c(i) >= 0, zero exactly at the target state.
    double cost(int i) const { return cost_.at(i); }
    const std::vector<double>& costs() const noexcept { return cost_; }
    bool finite_state(int i) const { return finite_.at(i) != 0; }
    const std::vector<char>& finite_mask() const noexcept { return finite_; }

    /// The paper-form stage cost -P + action cost, which may be negative;
    /// kept for reporting alongside the normalized c(i).
    double raw_g(int i, double lambda, double mu) const {
        return -profit_.eval(static_cast<double>(i) / n_ * profit_.mass()) +
               action_cost_.eval(lambda, mu);
    }

    /// Solver-facing action list: the box vertices with zero/linear costs
    /// attached, or the explicit finite table for general costs.
    std::vector<ActionCostSpec::Entry> action_entries() const {
        if (action_cost_.kind() == ActionCostSpec::Kind::general) return action_cost_.table();
        std::vector<ActionCostSpec::Entry> es;
        for (double l : {0.0, lambda_max_})
            for (double m : {0.0, mu_max_})
                es.push_back({l, m, action_cost_.eval(l, m)});
        std::sort(es.begin(), es.end(), [](const auto& a, const auto& b) {
            return a.lambda != b.lambda ? a.lambda < b.lambda : a.mu < b.mu;
        });
        es.erase(std::unique(es.begin(), es.end(),
                             [](const auto& a, const auto& b) {
                                 return a.lambda == b.lambda && a.mu == b.mu;
                             }),
                 es.end());
        return es;
    }

private:
    int n_ = 1;
    Preset preset_ = Preset::paper;
    double lambda_max_ = 1.0, mu_max_ = 1.0, nu_ = 1.0;
    ProfitSpec profit_ = ProfitSpec::quadratic(0.5);
    ActionCostSpec action_cost_ = ActionCostSpec::zero();
    int i_star_ = 0;
    std::vector<double> cost_;
    std::vector<char> finite_;
};

struct TransitionProbs {
    double up = 0.0;
    double down = 0.0;
    double stay = 1.0;
};

/// Discrete-time chain sampled at the exponential nu-clock; self-loops
/// absorb the slack so each row sums to one.
class UniformizedChain {
public:
    UniformizedChain(int n, Preset preset, double nu) : n_(n), preset_(preset), nu_(nu) {
        up_factor_.resize(n + 1);
        down_factor_.resize(n + 1);
        for (int i = 0; i <= n; ++i) {
            up_factor_[i] = static_cast<double>(i) * (n - i) / (static_cast<double>(n) * nu);
            down_factor_[i] = (i == 0) ? 0.0
                              : preset == Preset::paper ? static_cast<double>(n - i) / nu
                                                        : static_cast<double>(i) / nu;
        }
    }

    int n() const noexcept { return n_; }
    double nu() const noexcept { return nu_; }

    TransitionProbs probs(int i, double lambda, double mu) const {
        TransitionProbs p;
        p.up = lambda * up_factor_.at(i);
        p.down = mu * down_factor_.at(i);
        p.stay = 1.0 - p.up - p.down;
        return p;
    }

private:
    int n_;
    Preset preset_;
    double nu_;
    std::vector<double> up_factor_, down_factor_;
};

inline UniformizedChain uniformize(const MdpProblem& p) {
    return UniformizedChain(p.n(), p.preset(), p.nu());
}

struct ValueFunction {
    std::vector<double> J;
    std::vector<char> finite;
    int i_star = 0;

    double delta(int i) const {  // J(i) - J(i-1)
        if (i < 1 || i >= static_cast<int>(J.size()))
            throw std::domain_error("ValueFunction::delta: index out of range");
        return J[i] - J[i - 1];
    }
};

struct Policy {
    std::vector<RatePair> action;
    std::vector<char> masked;  // true where the value is infinite and the action meaningless
};

namespace mdp_detail {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDivergenceCap = 1e12;

/// Expected one-step cost of (i, entry) given J; +inf if the action leaks
/// probability onto an infinite-value state. Zero-probability terms are
/// skipped so 0 * inf never appears.
inline double action_value(const MdpProblem& p, const UniformizedChain& u, const ValueFunction& v,
                           int i, const ActionCostSpec::Entry& e) {
    const TransitionProbs t = u.probs(i, e.lambda, e.mu);
    double val = p.cost(i) + e.cost;
    if (t.up > 0.0) {
        if (!v.finite[i + 1]) return kInf;
        val += t.up * v.J[i + 1];
    }
    if (t.down > 0.0) {
        if (!v.finite[i - 1]) return kInf;
        val += t.down * v.J[i - 1];
    }
    if (t.stay > 0.0) {
        if (!v.finite[i]) return kInf;
        val += t.stay * v.J[i];
    }
    return val;
}

inline std::vector<std::size_t> sorted_entry_order(const std::vector<ActionCostSpec::Entry>& es) {
    std::vector<std::size_t> order(es.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (es[a].lambda != es[b].lambda) return es[a].lambda < es[b].lambda;
        return es[a].mu < es[b].mu;
    });
    return order;
}

}  // namespace mdp_detail

/// Greedy policy for a value function; ties break toward smaller lambda,
/// then smaller mu. Infinite-value states get a masked (0,0) action.
inline Policy extract_policy(const MdpProblem& p, const ValueFunction& v) {
    const UniformizedChain u = uniformize(p);
    const auto entries = p.action_entries();
    const auto order = mdp_detail::sorted_entry_order(entries);
    Policy pol;
    pol.action.assign(p.n() + 1, RatePair{0.0, 0.0});
    pol.masked.assign(p.n() + 1, 0);
    for (int i = 0; i <= p.n(); ++i) {
        if (i == v.i_star) continue;  // absorbing: action immaterial
        if (!v.finite[i]) {
            pol.masked[i] = 1;
            continue;
        }
        double best = mdp_detail::kInf;
        RatePair best_a{0.0, 0.0};
        for (std::size_t k : order) {
            const double val = mdp_detail::action_value(p, u, v, i, entries[k]);
            if (val < best) {
                best = val;
                best_a = {entries[k].lambda, entries[k].mu};
            }
        }
        pol.action[i] = best_a;
    }
    return pol;
}

/// Sup-norm Bellman defect of J over the finite non-target states.
inline double bellman_residual(const MdpProblem& p, const ValueFunction& v) {
    if (static_cast<int>(v.J.size()) != p.n() + 1)
        throw std::invalid_argument("bellman_residual: value function size mismatch");
    const UniformizedChain u = uniformize(p);
    const auto entries = p.action_entries();
    double res = 0.0;
    for (int i = 0; i <= p.n(); ++i) {
        if (i == v.i_star || !v.finite[i]) continue;
        double best = mdp_detail::kInf;
        for (const auto& e : entries)
            best = std::min(best, mdp_detail::action_value(p, u, v, i, e));
        res = std::max(res, std::fabs(v.J[i] - best));
    }
    return res;
}

/// Exact value function for the zero-action-cost problem under the paper
/// preset: outward recursions from the absorbing target, with states whose
/// pushing rate vanishes flagged infinite.
inline std::pair<ValueFunction, Policy> solve_closed_form(const MdpProblem& p) {
    if (p.action_cost().kind() != ActionCostSpec::Kind::zero)
        throw std::invalid_argument("solve_closed_form: requires zero action costs");
    if (p.preset() != Preset::paper)
        throw std::invalid_argument("solve_closed_form: recursions are specific to the paper preset");

    const int n = p.n();
    const int i_star = p.i_star();
    ValueFunction v;
    v.J.assign(n + 1, 0.0);
    v.finite.assign(n + 1, 1);
    v.i_star = i_star;
    Policy pol;
    pol.action.assign(n + 1, RatePair{0.0, 0.0});
    pol.masked.assign(n + 1, 0);

    for (int i = i_star - 1; i >= 0; --i) {
        const double rate = ctmc_detail::up_rate(p.preset(), n, i, p.lambda_max());
        if (!v.finite[i + 1] || rate <= 0.0) {
            v.J[i] = mdp_detail::kInf;
            v.finite[i] = 0;
            pol.masked[i] = 1;
            continue;
        }
        v.J[i] = v.J[i + 1] + p.nu() * p.cost(i) / rate;
        pol.action[i] = {p.lambda_max(), 0.0};
    }
    for (int i = i_star + 1; i <= n; ++i) {
        const double rate = ctmc_detail::down_rate(p.preset(), n, i, p.mu_max());
        if (!v.finite[i - 1] || rate <= 0.0) {
            v.J[i] = mdp_detail::kInf;
            v.finite[i] = 0;
            pol.masked[i] = 1;
            continue;
        }
        v.J[i] = v.J[i - 1] + p.nu() * p.cost(i) / rate;
        pol.action[i] = {0.0, p.mu_max()};
    }
    return {std::move(v), std::move(pol)};
}

/// Synchronous value iteration to the requested Bellman residual. An
/// optional warm start replaces the zero initialization.
inline std::pair<ValueFunction, Policy> value_iteration(const MdpProblem& p, double tol,
                                                        const ValueFunction* init = nullptr,
                                                        long* sweeps_out = nullptr) {
    if (!(tol > 0.0)) throw std::domain_error("value_iteration: tol must be > 0");
    const UniformizedChain u = uniformize(p);
    const auto entries = p.action_entries();
    if (entries.empty()) throw std::invalid_argument("value_iteration: empty action set");

    const int n = p.n();
    ValueFunction v;
    v.i_star = p.i_star();
    v.finite.assign(p.finite_mask().begin(), p.finite_mask().end());
    v.J.assign(n + 1, 0.0);
    for (int i = 0; i <= n; ++i)
        if (!v.finite[i]) v.J[i] = mdp_detail::kInf;
    if (init) {
        if (static_cast<int>(init->J.size()) != n + 1)
            throw std::invalid_argument("value_iteration: warm start size mismatch");
        for (int i = 0; i <= n; ++i)
            if (v.finite[i] && init->finite[i]) v.J[i] = init->J[i];
    }

    std::vector<double> next(n + 1, 0.0);
    const long max_sweeps = 50'000'000L / std::max(1, n);
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        double residual = 0.0;
        for (int i = 0; i <= n; ++i) {
            if (i == v.i_star || !v.finite[i]) {
                next[i] = v.J[i];
                continue;
            }
            double best = mdp_detail::kInf;
            for (const auto& e : entries)
                best = std::min(best, mdp_detail::action_value(p, u, v, i, e));
            if (best > mdp_detail::kDivergenceCap) {
                // value ran past the cap: reclassify as unreachable
                v.finite[i] = 0;
                next[i] = mdp_detail::kInf;
                continue;
            }
            residual = std::max(residual, std::fabs(best - v.J[i]));
            next[i] = best;
        }
        v.J.swap(next);
        if (residual <= tol) {
            if (sweeps_out) *sweeps_out = sweep + 1;
            return {v, extract_policy(p, v)};
        }
    }
    throw std::runtime_error("value_iteration: failed to converge within the sweep budget");
}

namespace mdp_detail {

struct Tridiag {
    std::vector<double> sub, diag, super, rhs;
};

/// Thomas solve with a zero-pivot guard; returns false on singularity.
inline bool solve_tridiag(Tridiag m, std::vector<double>& out) {
    const std::size_t k = m.diag.size();
    out.assign(k, 0.0);
    for (std::size_t r = 1; r < k; ++r) {
        if (std::fabs(m.diag[r - 1]) < 1e-13) return false;
        const double w = m.sub[r] / m.diag[r - 1];
        m.diag[r] -= w * m.super[r - 1];
        m.rhs[r] -= w * m.rhs[r - 1];
    }
    if (std::fabs(m.diag[k - 1]) < 1e-13) return false;
    out[k - 1] = m.rhs[k - 1] / m.diag[k - 1];
    for (std::size_t r = k - 1; r-- > 0;) out[r] = (m.rhs[r] - m.super[r] * out[r + 1]) / m.diag[r];
    return true;
}

}  // namespace mdp_detail

/// Per-stage action cost of a rate pair under the problem's cost spec; for
/// the general kind the pair must match a table entry.
inline double stage_action_cost(const MdpProblem& p, const RatePair& a) {
    if (p.action_cost().kind() != ActionCostSpec::Kind::general)
        return p.action_cost().eval(a.lambda, a.mu);
    for (const auto& e : p.action_cost().table())
        if (e.lambda == a.lambda && e.mu == a.mu) return e.cost;
    throw std::invalid_argument("stage_action_cost: rate pair not in the action table");
}

/// Policy iteration with exact tridiagonal policy evaluation. The initial
/// policy defaults to pushing toward the target and must be proper; an
/// improper policy raises an error naming the offending states.
inline std::pair<ValueFunction, Policy> policy_iteration(const MdpProblem& p,
                                                         const Policy* initial = nullptr,
                                                         int* iterations_out = nullptr) {
    const int n = p.n();
    const int i_star = p.i_star();
    const UniformizedChain u = uniformize(p);
    const auto entries = p.action_entries();
    const auto order = mdp_detail::sorted_entry_order(entries);

    Policy pol;
    if (initial) {
        if (static_cast<int>(initial->action.size()) != n + 1)
            throw std::invalid_argument("policy_iteration: initial policy size mismatch");
        pol = *initial;
    } else {
        pol.action.assign(n + 1, RatePair{0.0, 0.0});
        pol.masked.assign(n + 1, 0);
        for (int i = 0; i < i_star; ++i) pol.action[i] = {p.lambda_max(), 0.0};
        for (int i = i_star + 1; i <= n; ++i) pol.action[i] = {0.0, p.mu_max()};
    }

    ValueFunction v;
    v.i_star = i_star;
    v.finite.assign(p.finite_mask().begin(), p.finite_mask().end());
    v.J.assign(n + 1, 0.0);
    for (int i = 0; i <= n; ++i)
        if (!v.finite[i]) v.J[i] = mdp_detail::kInf;

    // two contiguous finite segments flank the absorbing target
    auto segment = [&](int from, int to) {  // inclusive, ascending
        std::vector<int> states;
        for (int i = from; i <= to; ++i)
            if (v.finite[i] && i != i_star) states.push_back(i);
        return states;
    };
    int lo = i_star - 1;
    while (lo >= 0 && v.finite[lo]) --lo;
    int hi = i_star + 1;
    while (hi <= n && v.finite[hi]) ++hi;
    const std::vector<int> lower_seg = segment(lo + 1, i_star - 1);
    const std::vector<int> upper_seg = segment(i_star + 1, hi - 1);

    auto evaluate_segment = [&](const std::vector<int>& seg) {
        if (seg.empty()) return;
        const std::size_t k = seg.size();
        mdp_detail::Tridiag sys;
        sys.sub.assign(k, 0.0);
        sys.diag.assign(k, 0.0);
        sys.super.assign(k, 0.0);
        sys.rhs.assign(k, 0.0);
        std::vector<double> absorb_rhs(k, 0.0);
        std::vector<std::string> leaks;
        for (std::size_t r = 0; r < k; ++r) {
            const int i = seg[r];
            const auto& a = pol.action[i];
            const TransitionProbs t = u.probs(i, a.lambda, a.mu);
            sys.diag[r] = t.up + t.down;  // 1 - stay
            sys.rhs[r] = p.cost(i) + stage_action_cost(p, a);
            // neighbors: target contributes zero, in-segment couples,
            // outside-finite leaks make the policy improper
            if (t.down > 0.0) {
                if (i - 1 == i_star) {
                    absorb_rhs[r] += t.down;
                } else if (r > 0 && seg[r - 1] == i - 1) {
                    sys.sub[r] = -t.down;
                } else {
                    leaks.push_back(std::to_string(i));
                }
            }
            if (t.up > 0.0) {
                if (i + 1 == i_star) {
                    absorb_rhs[r] += t.up;
                } else if (r + 1 < k && seg[r + 1] == i + 1) {
                    sys.super[r] = -t.up;
                } else {
                    leaks.push_back(std::to_string(i));
                }
            }
        }
        if (!leaks.empty()) {
            std::string msg = "policy_iteration: improper policy leaks to unreachable states from {";
            for (std::size_t q = 0; q < leaks.size(); ++q) msg += (q ? "," : "") + leaks[q];
            throw std::runtime_error(msg + "}");
        }
        // properness: absorption probabilities must all be ~1
        mdp_detail::Tridiag asys = sys;
        asys.rhs = absorb_rhs;
        std::vector<double> a;
        if (!mdp_detail::solve_tridiag(asys, a))
            throw std::runtime_error("policy_iteration: improper policy (singular evaluation system)");
        std::string bad;
        for (std::size_t r = 0; r < k; ++r)
            if (!(a[r] > 1.0 - 1e-9)) bad += (bad.empty() ? "" : ",") + std::to_string(seg[r]);
        if (!bad.empty())
            throw std::runtime_error("policy_iteration: improper policy; target unreached from {" + bad + "}");

        std::vector<double> sol;
        if (!mdp_detail::solve_tridiag(sys, sol))
            throw std::runtime_error("policy_iteration: improper policy (singular evaluation system)");
        for (std::size_t r = 0; r < k; ++r) v.J[seg[r]] = sol[r];
    };

    const int max_iters = 1000;
    for (int it = 1; it <= max_iters; ++it) {
        evaluate_segment(lower_seg);
        evaluate_segment(upper_seg);

        bool changed = false;
        for (int i = 0; i <= n; ++i) {
            if (i == i_star || !v.finite[i]) continue;
            double best = mdp_detail::kInf;
            RatePair best_a = pol.action[i];
            for (std::size_t q : order) {
                const double val = mdp_detail::action_value(p, u, v, i, entries[q]);
                if (val < best - 1e-12) {
                    best = val;
                    best_a = {entries[q].lambda, entries[q].mu};
                } else if (val < best) {
                    best = val;
                }
            }
            if (best_a.lambda != pol.action[i].lambda || best_a.mu != pol.action[i].mu) {
                pol.action[i] = best_a;
                changed = true;
            }
        }
        if (!changed) {
            if (iterations_out) *iterations_out = it;
            pol.masked.assign(n + 1, 0);
            for (int i = 0; i <= n; ++i) {
                if (i == i_star) pol.action[i] = {0.0, 0.0};
                if (!v.finite[i]) {
                    pol.action[i] = {0.0, 0.0};
                    pol.masked[i] = 1;
                }
            }
            return {v, pol};
        }
    }
    throw std::runtime_error("policy_iteration: did not converge within the iteration budget");
}

/// LP encoding of the Bellman system: maximize weighted values subject to
/// one inequality per (state, action).
struct MdpLpEncoding {
    LpProblem lp;
    std::vector<int> var_state;                 // LP variable -> state index
    std::vector<std::pair<int, int>> row_meta;  // LP row -> (state, action entry)
};

namespace mdp_detail {

inline MdpLpEncoding encode_lp(const MdpProblem& p, const std::vector<ActionCostSpec::Entry>& entries,
                               const std::vector<double>& weights) {
    const int n = p.n();
    const int i_star = p.i_star();
    if (!weights.empty() && static_cast<int>(weights.size()) != n + 1)
        throw std::invalid_argument("encode_lp: weights must have n+1 entries");

    MdpLpEncoding enc;
    std::vector<int> var_of(n + 1, -1);
    for (int i = 0; i <= n; ++i) {
        if (i == i_star || !p.finite_state(i)) continue;
        var_of[i] = static_cast<int>(enc.var_state.size());
        enc.var_state.push_back(i);
        const double w = weights.empty() ? 1.0 : weights[i];
        if (!(w > 0.0)) throw std::invalid_argument("encode_lp: weights must be positive");
        enc.lp.objective.push_back(w);
    }
    const std::size_t nv = enc.lp.objective.size();
    enc.lp.lower.assign(nv, 0.0);  // total costs are nonnegative here
    enc.lp.upper.assign(nv, std::numeric_limits<double>::infinity());

    const UniformizedChain u = uniformize(p);
    for (int i = 0; i <= n; ++i) {
        if (i == i_star || !p.finite_state(i)) continue;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const auto& e = entries[k];
            const TransitionProbs t = u.probs(i, e.lambda, e.mu);
            // rows that leak onto infinite-value states are vacuous
            if (t.up > 0.0 && i + 1 != i_star && !p.finite_state(i + 1)) continue;
            if (t.down > 0.0 && i - 1 != i_star && !p.finite_state(i - 1)) continue;
            std::vector<double> row(nv, 0.0);
            row[var_of[i]] = t.up + t.down;  // (1 - stay) J(i)
            if (t.up > 0.0 && i + 1 != i_star) row[var_of[i + 1]] -= t.up;
            if (t.down > 0.0 && i - 1 != i_star) row[var_of[i - 1]] -= t.down;
            enc.lp.rows.push_back(std::move(row));
            enc.lp.rhs.push_back(p.cost(i) + e.cost);
            enc.row_meta.emplace_back(i, static_cast<int>(k));
        }
    }
    return enc;
}

}  // namespace mdp_detail

/// Vertex LP for zero or linear action costs.
inline MdpLpEncoding encode_lp_linear(const MdpProblem& p, const std::vector<double>& weights = {}) {
    if (p.action_cost().kind() == ActionCostSpec::Kind::general)
        throw std::invalid_argument("encode_lp_linear: requires zero or linear action costs");
    return mdp_detail::encode_lp(p, p.action_entries(), weights);
}

/// LP over an explicit finite action table with per-pair costs.
inline MdpLpEncoding encode_lp_general(const MdpProblem& p,
                                       const std::vector<ActionCostSpec::Entry>& table,
                                       const std::vector<double>& weights = {}) {
    if (table.empty()) throw std::domain_error("encode_lp_general: empty action table");
    for (const auto& e : table)
        if (e.lambda < 0.0 || e.mu < 0.0 || e.lambda > p.lambda_max() * (1.0 + 1e-12) ||
            e.mu > p.mu_max() * (1.0 + 1e-12))
            throw std::invalid_argument("encode_lp_general: table entry outside the rate box");
    return mdp_detail::encode_lp(p, table, weights);
}

struct LpSolveResult {
    ValueFunction value;
    Policy policy;
    LpSolution lp;
};

/// Solve an encoded instance and decode values; an unbounded LP means no
/// proper policy exists in the encoded action set.
inline LpSolveResult solve_lp(const MdpProblem& p, const MdpLpEncoding& enc) {
    LpSolveResult r;
    r.lp = solve_simplex(enc.lp);
    if (r.lp.status == LpStatus::unbounded)
        throw std::runtime_error("solve_lp: no proper policy (LP unbounded)");
    if (r.lp.status != LpStatus::optimal)
        throw std::runtime_error("solve_lp: unexpected LP status");
    r.value.i_star = p.i_star();
    r.value.finite.assign(p.finite_mask().begin(), p.finite_mask().end());
    r.value.J.assign(p.n() + 1, 0.0);
    for (int i = 0; i <= p.n(); ++i)
        if (!r.value.finite[i]) r.value.J[i] = mdp_detail::kInf;
    for (std::size_t k = 0; k < enc.var_state.size(); ++k) r.value.J[enc.var_state[k]] = r.lp.x[k];
    r.policy = extract_policy(p, r.value);
    return r;
}

/// CSV export: header `i,J,lambda,mu,finite`, one row per state.
inline void write_values_csv(std::ostream& os, const ValueFunction& v, const Policy& pol) {
    os << "i,J,lambda,mu,finite\n";
    os.precision(17);
    for (std::size_t i = 0; i < v.J.size(); ++i) {
        os << i << ',';
        if (v.finite[i]) os << v.J[i];
        else os << "inf";
        os << ',' << pol.action[i].lambda << ',' << pol.action[i].mu << ','
           << static_cast<int>(v.finite[i]) << '\n';
    }
}

}  // namespace epictrl
