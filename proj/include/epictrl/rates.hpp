#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace epictrl {

struct RateBounds {
    double lo;
    double hi;
};

/// A nonnegative, continuous, time-varying rate (events per unit time).
/// Built-in kinds: constant, piecewise-linear (clamped outside the
/// breakpoints), and sinusoidal base + amp * cos(2*pi*t/period + phase).
class RateSchedule {
public:
    enum class Kind { constant, piecewise_linear, sinusoidal };

    static RateSchedule constant(double level) {
        if (!(level >= 0.0))
            throw std::invalid_argument("RateSchedule: constant level must be >= 0");
        RateSchedule s;
        s.kind_ = Kind::constant;
        s.params_ = {level};
        return s;
    }

    /// Breakpoints (t, value), t strictly increasing, values >= 0.
    /// The schedule is held constant before the first and after the last point.
    static RateSchedule piecewise_linear(std::vector<std::pair<double, double>> points) {
        if (points.empty())
            throw std::invalid_argument("RateSchedule: piecewise schedule needs at least one point");
        for (std::size_t k = 0; k < points.size(); ++k) {
            if (!(points[k].second >= 0.0))
                throw std::invalid_argument("RateSchedule: piecewise values must be >= 0");
            if (k > 0 && !(points[k].first > points[k - 1].first))
                throw std::invalid_argument("RateSchedule: piecewise breakpoints must be strictly increasing");
        }
        RateSchedule s;
        s.kind_ = Kind::piecewise_linear;
        s.points_ = std::move(points);
        return s;
    }

    static RateSchedule sinusoidal(double base, double amplitude, double period, double phase = 0.0) {
        if (!(amplitude >= 0.0))
            throw std::invalid_argument("RateSchedule: sinusoidal amplitude must be >= 0");
        if (!(base >= amplitude))
            throw std::invalid_argument("RateSchedule: sinusoidal base must be >= amplitude (rates are nonnegative)");
        if (!(period > 0.0))
            throw std::invalid_argument("RateSchedule: sinusoidal period must be > 0");
        RateSchedule s;
        s.kind_ = Kind::sinusoidal;
        s.params_ = {base, amplitude, period, phase};
        return s;
    }

    Kind kind() const noexcept { return kind_; }

    double eval(double t) const {
        if (!(t >= 0.0))
            throw std::domain_error("RateSchedule::eval: t must be >= 0");
        switch (kind_) {
        case Kind::constant:
            return params_[0];
        case Kind::piecewise_linear:
            return eval_piecewise(t);
        case Kind::sinusoidal:
            return params_[0] + params_[1] * std::cos(two_pi() / params_[2] * t + params_[3]);
        }
        return 0.0;  // unreachable
    }

    /// Tight [lo, hi] over the window [a, b], b > a >= 0.
    RateBounds bounds(double a, double b) const {
        if (!(a >= 0.0) || !(b > a))
            throw std::domain_error("RateSchedule::bounds: window must satisfy 0 <= a < b");
        switch (kind_) {
        case Kind::constant:
            return {params_[0], params_[0]};
        case Kind::piecewise_linear: {
            double lo = std::min(eval_piecewise(a), eval_piecewise(b));
            double hi = std::max(eval_piecewise(a), eval_piecewise(b));
            for (const auto& p : points_) {
                if (p.first > a && p.first < b) {
                    lo = std::min(lo, p.second);
                    hi = std::max(hi, p.second);
                }
            }
            return {lo, hi};
        }
        case Kind::sinusoidal: {
            const double base = params_[0], amp = params_[1], period = params_[2], phase = params_[3];
            const double w = two_pi() / period;
            double lo = std::min(eval(a), eval(b));
            double hi = std::max(eval(a), eval(b));
            if (b - a >= period) return {base - amp, base + amp};
            // interior extrema: w*t + phase = k*pi
            const double k0 = std::ceil((w * a + phase) / pi());
            const double k1 = std::floor((w * b + phase) / pi());
            for (double k = k0; k <= k1; k += 1.0) {
                const double t = (k * pi() - phase) / w;
                if (t <= a || t >= b) continue;
                const double v = (std::fmod(std::fabs(k), 2.0) < 0.5) ? base + amp : base - amp;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return {lo, hi};
        }
        }
        return {0.0, 0.0};  // unreachable
    }

private:
    static constexpr double pi() { return 3.14159265358979323846; }
    static constexpr double two_pi() { return 2.0 * pi(); }

    double eval_piecewise(double t) const {
        if (t <= points_.front().first) return points_.front().second;
        if (t >= points_.back().first) return points_.back().second;
        // find segment with points_[k].first <= t < points_[k+1].first
        auto it = std::upper_bound(points_.begin(), points_.end(), t,
                                   [](double v, const std::pair<double, double>& p) { return v < p.first; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double w = (t - lo.first) / (hi.first - lo.first);
        return lo.second + w * (hi.second - lo.second);
    }

    Kind kind_ = Kind::constant;
    std::vector<double> params_;
    std::vector<std::pair<double, double>> points_;
};

/// Profit as a function of the population fraction on [0, c]. Unimodal with
/// a single maximum at x_star; for the table form plateaus are allowed and
/// x_star is the smallest maximizer.
class ProfitSpec {
public:
    enum class Kind { linear, quadratic, table };

    static ProfitSpec linear(double slope, double intercept = 0.0, double mass = 1.0) {
        check_mass(mass);
        ProfitSpec p;
        p.kind_ = Kind::linear;
        p.mass_ = mass;
        p.a_ = intercept;
        p.b_ = slope;
        p.x_star_ = slope > 0.0 ? mass : 0.0;
        return p;
    }

    /// peak - curvature * (x - x_star)^2 with curvature > 0 and x_star in [0, c].
    static ProfitSpec quadratic(double x_star, double curvature = 1.0, double peak = 0.0, double mass = 1.0) {
        check_mass(mass);
        if (!(curvature > 0.0))
            throw std::invalid_argument("ProfitSpec: quadratic curvature must be > 0");
        if (!(x_star >= 0.0 && x_star <= mass))
            throw std::invalid_argument("ProfitSpec: x_star must lie in [0, c]");
        ProfitSpec p;
        p.kind_ = Kind::quadratic;
        p.mass_ = mass;
        p.a_ = peak;
        p.b_ = curvature;
        p.x_star_ = x_star;
        return p;
    }

    /// Piecewise-linear table over [0, c]. Breakpoints must cover [0, c],
    /// be strictly increasing, and form a unimodal sequence (non-decreasing
    /// then non-increasing). Unimodality is validated at load.
    static ProfitSpec table(std::vector<std::pair<double, double>> points, double mass = 1.0) {
        check_mass(mass);
        if (points.size() < 2)
            throw std::invalid_argument("ProfitSpec: table needs at least two points");
        if (points.front().first != 0.0 || points.back().first != mass)
            throw std::invalid_argument("ProfitSpec: table must cover [0, c] exactly");
        for (std::size_t k = 1; k < points.size(); ++k)
            if (!(points[k].first > points[k - 1].first))
                throw std::invalid_argument("ProfitSpec: table breakpoints must be strictly increasing");
        // unimodal: rises (weakly), then falls (weakly), one switch
        bool falling = false;
        for (std::size_t k = 1; k < points.size(); ++k) {
            const double d = points[k].second - points[k - 1].second;
            if (d < 0.0) falling = true;
            else if (d > 0.0 && falling)
                throw std::invalid_argument("ProfitSpec: table is not unimodal");
        }
        ProfitSpec p;
        p.kind_ = Kind::table;
        p.mass_ = mass;
        p.points_ = std::move(points);
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& q : p.points_) {
            if (q.second > best) {
                best = q.second;
                p.x_star_ = q.first;
            }
        }
        return p;
    }

    Kind kind() const noexcept { return kind_; }
    double mass() const noexcept { return mass_; }
    double x_star() const noexcept { return x_star_; }

    double eval(double x) const {
        if (!(x >= 0.0 && x <= mass_ * (1.0 + 1e-12)))
            throw std::domain_error("ProfitSpec::eval: x outside [0, c]");
        x = std::min(x, mass_);
        switch (kind_) {
        case Kind::linear:
            return a_ + b_ * x;
        case Kind::quadratic:
            return a_ - b_ * (x - x_star_) * (x - x_star_);
        case Kind::table: {
            auto it = std::upper_bound(points_.begin(), points_.end(), x,
                                       [](double v, const std::pair<double, double>& p) { return v < p.first; });
            if (it == points_.begin()) return points_.front().second;
            if (it == points_.end()) return points_.back().second;
            const auto& hi = *it;
            const auto& lo = *(it - 1);
            const double w = (x - lo.first) / (hi.first - lo.first);
            return lo.second + w * (hi.second - lo.second);
        }
        }
        return 0.0;  // unreachable
    }

    const std::vector<std::pair<double, double>>& table_points() const noexcept { return points_; }

private:
    static void check_mass(double mass) {
        if (!(mass > 0.0))
            throw std::invalid_argument("ProfitSpec: total mass c must be > 0");
    }

    Kind kind_ = Kind::quadratic;
    double mass_ = 1.0;
    double a_ = 0.0;  // intercept or peak
    double b_ = 1.0;  // slope or curvature
    double x_star_ = 0.0;
    std::vector<std::pair<double, double>> points_;
};

/// Cost of deploying control rates (lambda, mu).
class ActionCostSpec {
public:
    enum class Kind { zero, linear, general };

    struct Entry {
        double lambda;
        double mu;
        double cost;
    };

    static ActionCostSpec zero() { return ActionCostSpec{}; }

    static ActionCostSpec linear(double c_lambda, double c_mu) {
        if (!(c_lambda >= 0.0) || !(c_mu >= 0.0))
            throw std::invalid_argument("ActionCostSpec: linear rates must be >= 0");
        ActionCostSpec s;
        s.kind_ = Kind::linear;
        s.c_lambda_ = c_lambda;
        s.c_mu_ = c_mu;
        return s;
    }

    /// Finite action table with a cost per (lambda, mu) pair. Entries must be
    /// nonnegative; the caps check against (lambda_max, mu_max) happens where
    /// the table is attached to a control problem.
    static ActionCostSpec general(std::vector<Entry> table) {
        if (table.empty())
            throw std::invalid_argument("ActionCostSpec: general table must be nonempty");
        for (const auto& e : table)
            if (!(e.lambda >= 0.0) || !(e.mu >= 0.0))
                throw std::invalid_argument("ActionCostSpec: table rates must be >= 0");
        ActionCostSpec s;
        s.kind_ = Kind::general;
        s.table_ = std::move(table);
        return s;
    }

    Kind kind() const noexcept { return kind_; }
    double c_lambda() const noexcept { return c_lambda_; }
    double c_mu() const noexcept { return c_mu_; }
    const std::vector<Entry>& table() const noexcept { return table_; }

    /// Cost of a rate pair; defined for the zero and linear kinds.
    double eval(double lambda, double mu) const {
        switch (kind_) {
        case Kind::zero:
            return 0.0;
        case Kind::linear:
            return c_lambda_ * lambda + c_mu_ * mu;
        case Kind::general:
            throw std::domain_error("ActionCostSpec::eval: general costs are defined per table entry");
        }
        return 0.0;  // unreachable
    }

private:
    Kind kind_ = Kind::zero;
    double c_lambda_ = 0.0;
    double c_mu_ = 0.0;
    std::vector<Entry> table_;
};

inline double eval_rate(const RateSchedule& schedule, double t) { return schedule.eval(t); }

inline RateBounds rate_bounds(const RateSchedule& schedule, double a, double b) {
    return schedule.bounds(a, b);
}

/// Smallest i in {0..n} maximizing P(i/n * c).
inline int argmax_state(const ProfitSpec& profit, int n) {
    if (n < 1) throw std::domain_error("argmax_state: n must be >= 1");
    int best = 0;
    double best_v = profit.eval(0.0);
    for (int i = 1; i <= n; ++i) {
        const double v = profit.eval(static_cast<double>(i) / n * profit.mass());
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    return best;
}

/// Per-stage cost of occupying state i: profit shortfall against the best
/// grid state, nonnegative and zero exactly at the grid argmax.
inline double stage_cost(const ProfitSpec& profit, int n, int i) {
    if (i < 0 || i > n) throw std::domain_error("stage_cost: state outside [0, n]");
    const int i_star = argmax_state(profit, n);
    const double scale = profit.mass() / n;
    return profit.eval(i_star * scale) - profit.eval(i * scale);
}

}  // namespace epictrl
