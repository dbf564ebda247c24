#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "epictrl/rates.hpp"

namespace epictrl {

namespace ode_detail {

using StateVec = std::array<double, 4>;  // up to 4 active components

/// Per-interval coefficients of the 4th-order continuous extension.
struct DenseCoeffs {
    StateVec r3{}, r4{}, r5{};
};

inline double scaled_error(const StateVec& err, const StateVec& y, const StateVec& ynew, int dim,
                           double tol) {
    double sum = 0.0;
    for (int k = 0; k < dim; ++k) {
        const double sc = tol + tol * std::max(std::fabs(y[k]), std::fabs(ynew[k]));
        const double e = err[k] / sc;
        sum += e * e;
    }
    return std::sqrt(sum / dim);
}

/// Dormand-Prince 5(4) adaptive stepper. Calls
/// on_accept(t, y, f, h, dense-or-null) after every accepted step (the
/// initial point gets h=0 and no dense block). The max_step cap keeps
/// piecewise-constant controllers responsive.
template <typename Rhs, typename OnAccept>
void rk45(Rhs&& rhs, StateVec y, int dim, double t0, double t1, double tol, OnAccept&& on_accept,
          double max_step = std::numeric_limits<double>::infinity(),
          long* rejected_out = nullptr) {
    if (!(tol > 0.0)) throw std::domain_error("integrate: tol must be > 0");
    if (!(t1 > t0)) throw std::domain_error("integrate: horizon must exceed the start time");

    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                            e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                            e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
    // continuous-extension weights (Hairer/Norsett/Wanner dopri5)
    static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

    StateVec k1{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, yt{}, ynew{}, err{};
    double t = t0;
    rhs(t, y, k1);
    on_accept(t, y, k1, 0.0, static_cast<const DenseCoeffs*>(nullptr));

    double h = std::min({0.01 * (t1 - t0), max_step, 0.1});
    long accepted = 0, rejected = 0;
    const long step_cap = 20'000'000;
    while (t < t1) {
        h = std::min({h, t1 - t, max_step});
        if (h < 1e-14 * (1.0 + std::fabs(t)))
            throw std::runtime_error("integrate: step size underflow");
        if (accepted + rejected > step_cap)
            throw std::runtime_error("integrate: step budget exhausted");

        for (int q = 0; q < dim; ++q) yt[q] = y[q] + h * a21 * k1[q];
        rhs(t + c2 * h, yt, k2);
        for (int q = 0; q < dim; ++q) yt[q] = y[q] + h * (a31 * k1[q] + a32 * k2[q]);
        rhs(t + c3 * h, yt, k3);
        for (int q = 0; q < dim; ++q) yt[q] = y[q] + h * (a41 * k1[q] + a42 * k2[q] + a43 * k3[q]);
        rhs(t + c4 * h, yt, k4);
        for (int q = 0; q < dim; ++q)
            yt[q] = y[q] + h * (a51 * k1[q] + a52 * k2[q] + a53 * k3[q] + a54 * k4[q]);
        rhs(t + c5 * h, yt, k5);
        for (int q = 0; q < dim; ++q)
            yt[q] = y[q] + h * (a61 * k1[q] + a62 * k2[q] + a63 * k3[q] + a64 * k4[q] + a65 * k5[q]);
        rhs(t + h, yt, k6);
        for (int q = 0; q < dim; ++q)
            ynew[q] = y[q] + h * (b1 * k1[q] + b3 * k3[q] + b4 * k4[q] + b5 * k5[q] + b6 * k6[q]);
        rhs(t + h, ynew, k7);  // FSAL
        for (int q = 0; q < dim; ++q)
            err[q] = h * (e1 * k1[q] + e3 * k3[q] + e4 * k4[q] + e5 * k5[q] + e6 * k6[q] + e7 * k7[q]);

        // error-per-unit-step control: |err| <= tol * h * (1 + |y|), so the
        // accumulated defect over [t0, t1] stays near tol * (t1 - t0)
        const double en = scaled_error(err, y, ynew, dim, tol);
        if (en <= h) {
            DenseCoeffs dc;
            for (int q = 0; q < dim; ++q) {
                const double ydiff = ynew[q] - y[q];
                const double bspl = h * k1[q] - ydiff;
                dc.r3[q] = bspl;
                dc.r4[q] = ydiff - h * k7[q] - bspl;
                dc.r5[q] = h * (d1 * k1[q] + d3 * k3[q] + d4 * k4[q] + d5 * k5[q] + d6 * k6[q] +
                                d7 * k7[q]);
            }
            t += h;
            y = ynew;
            ++accepted;
            on_accept(t, y, k7, h, &dc);
            // the callback may clamp the state or re-plan a controller, so
            // the FSAL derivative is recomputed rather than reused
            rhs(t, y, k1);
        } else {
            ++rejected;
        }
        const double factor = (en > 0.0) ? 0.9 * std::pow(h / en, 0.25) : 5.0;
        h *= std::min(5.0, std::max(0.2, factor));
    }
    if (rejected_out) *rejected_out = rejected;
}

}  // namespace ode_detail

/// Right-hand side of the mean-field dynamics: the conserved pair
/// (dx, dy) = (-lambda x y + mu y, lambda x y - mu y), or its exact 1-D
/// reduction dx = lambda x^2 - (lambda c + mu) x + mu c after y = c - x.
struct VectorField {
    enum class Form { pair, reduced };

    RateSchedule lambda = RateSchedule::constant(1.0);
    RateSchedule mu = RateSchedule::constant(1.0);
    double mass = 1.0;  // c
    Form form = Form::reduced;

    int dim() const noexcept { return form == Form::pair ? 2 : 1; }

    void rhs(double t, const ode_detail::StateVec& z, ode_detail::StateVec& out) const {
        const double l = lambda.eval(t);
        const double m = mu.eval(t);
        if (form == Form::pair) {
            const double flow = -l * z[0] * z[1] + m * z[1];
            out[0] = flow;
            out[1] = -flow;
        } else {
            out[0] = l * z[0] * z[0] - (l * mass + m) * z[0] + m * mass;
        }
    }
};

/// Accepted-step record of an integration, with the stepper's continuous
/// extension retained per interval for dense output.
struct OdeTrajectory {
    std::vector<double> times;
    std::vector<std::array<double, 2>> states;
    std::vector<std::array<double, 2>> derivs;
    std::vector<double> step_sizes;
    std::vector<ode_detail::DenseCoeffs> dense;  // one block per interval
    int dim = 1;
    double mass = 1.0;
    double tol = 0.0;
    long rejected_steps = 0;

    double horizon() const { return times.empty() ? 0.0 : times.back(); }

    std::size_t interval_of(double t) const {
        if (times.size() < 2 || t < times.front() || t > times.back() * (1.0 + 1e-12))
            throw std::domain_error("OdeTrajectory: time outside the sampled range");
        std::size_t lo = 0, hi = times.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (times[mid] <= t) lo = mid; else hi = mid;
        }
        return lo;
    }

    double value_at(double t, int component = 0) const {
        const std::size_t k = interval_of(t);
        const double h = times[k + 1] - times[k];
        const double s = (t - times[k]) / h;
        const double y0 = states[k][component];
        if (k < dense.size()) {
            const auto& dc = dense[k];
            const double r2 = states[k + 1][component] - y0;
            return y0 + s * (r2 + (1.0 - s) * (dc.r3[component] +
                                               s * (dc.r4[component] +
                                                    (1.0 - s) * dc.r5[component])));
        }
        // cubic Hermite fallback for hand-built trajectories
        const double y1 = states[k + 1][component];
        const double d0 = derivs[k][component] * h, d1 = derivs[k + 1][component] * h;
        const double s2 = s * s, s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * d0 + (-2 * s3 + 3 * s2) * y1 +
               (s3 - s2) * d1;
    }

    double x_at(double t) const { return value_at(t, 0); }
};

/// Adaptive integration of the mean-field field on [0, horizon]. States are
/// confined to [0, c]; overshoot beyond 1e-9 is an integrator failure.
inline OdeTrajectory integrate(const VectorField& field, std::array<double, 2> z0, double horizon,
                               double tol) {
    const double c = field.mass;
    const int dim = field.dim();
    if (field.form == VectorField::Form::pair) {
        if (!(z0[0] >= 0.0 && z0[0] <= c && z0[1] >= 0.0 && z0[1] <= c) ||
            std::fabs(z0[0] + z0[1] - c) > 1e-9)
            throw std::domain_error("integrate: initial state off the simplex");
    } else {
        if (!(z0[0] >= 0.0 && z0[0] <= c))
            throw std::domain_error("integrate: initial state outside [0, c]");
    }

    OdeTrajectory traj;
    traj.dim = dim;
    traj.mass = c;
    traj.tol = tol;

    ode_detail::StateVec y{};
    y[0] = z0[0];
    y[1] = z0[1];
    long rejected = 0;
    ode_detail::rk45(
        [&](double t, const ode_detail::StateVec& z, ode_detail::StateVec& out) {
            field.rhs(t, z, out);
        },
        y, dim, 0.0, horizon, tol,
        [&](double t, ode_detail::StateVec& z, const ode_detail::StateVec& f, double h,
            const ode_detail::DenseCoeffs* dc) {
            for (int q = 0; q < dim; ++q) {
                if (z[q] < 0.0 || z[q] > c) {
                    if (z[q] < -1e-9 || z[q] > c + 1e-9)
                        throw std::runtime_error("integrate: state left [0, c] beyond tolerance");
                    z[q] = std::min(std::max(z[q], 0.0), c);
                }
            }
            traj.times.push_back(t);
            traj.states.push_back({z[0], z[1]});
            traj.derivs.push_back({f[0], f[1]});
            traj.step_sizes.push_back(h);
            if (dc) traj.dense.push_back(*dc);
        },
        std::numeric_limits<double>::infinity(), &rejected);
    traj.rejected_steps = rejected;
    return traj;
}

enum class StabilityCase {
    ratio_tracking = 1,   // 0 < mu/lambda <= xi < c throughout
    mass_stable = 2,      // mu/lambda > c throughout
    mass_marginal = 3,    // mu/lambda == c throughout
    zero_marginal = 4,    // mu == 0 throughout
    mixed = 0,            // ratio crosses regime boundaries
    unclassifiable = -1,  // lambda vanishes while mu > 0
};

inline const char* to_string(StabilityCase c) {
    switch (c) {
    case StabilityCase::ratio_tracking: return "1";
    case StabilityCase::mass_stable: return "2";
    case StabilityCase::mass_marginal: return "3";
    case StabilityCase::zero_marginal: return "4";
    case StabilityCase::mixed: return "mixed";
    case StabilityCase::unclassifiable: return "unclassifiable";
    }
    return "?";
}

struct StabilityReport {
    StabilityCase stability_case = StabilityCase::mixed;
    double x1_min = 0.0;  // range of mu(t)/lambda(t) over the audit grid
    double x1_max = 0.0;
    double x2_star = 1.0;  // c
    double xi = 0.0;
    double delta_measured = std::numeric_limits<double>::quiet_NaN();
};

/// Decide which ratio regime holds on a dense audit grid (1e4 intervals).
inline StabilityReport classify(const VectorField& field, double xi, double audit_horizon,
                                int grid_points = 10'001) {
    if (!(xi > 0.0 && xi < field.mass))
        throw std::domain_error("classify: xi must lie in (0, c)");
    if (!(audit_horizon > 0.0)) throw std::domain_error("classify: audit horizon must be > 0");

    StabilityReport rep;
    rep.x2_star = field.mass;
    rep.xi = xi;

    bool all_zero = true, all_above = true, all_at_mass = true, all_tracking = true;
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (int k = 0; k < grid_points; ++k) {
        const double t = audit_horizon * k / (grid_points - 1);
        const double l = field.lambda.eval(t);
        const double m = field.mu.eval(t);
        if (l <= 0.0) {
            if (m > 0.0) {
                rep.stability_case = StabilityCase::unclassifiable;
                return rep;
            }
            rep.stability_case = StabilityCase::unclassifiable;  // 0/0 ratio
            return rep;
        }
        const double r = m / l;
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        const double c = field.mass;
        if (r != 0.0) all_zero = false;
        if (!(r > c * (1.0 + 1e-12))) all_above = false;
        if (std::fabs(r - c) > 1e-12 * std::max(1.0, c)) all_at_mass = false;
        if (!(r > 0.0 && r <= xi)) all_tracking = false;
    }
    rep.x1_min = rmin;
    rep.x1_max = rmax;
    if (all_zero) rep.stability_case = StabilityCase::zero_marginal;
    else if (all_at_mass) rep.stability_case = StabilityCase::mass_marginal;
    else if (all_above) rep.stability_case = StabilityCase::mass_stable;
    else if (all_tracking) rep.stability_case = StabilityCase::ratio_tracking;
    else rep.stability_case = StabilityCase::mixed;
    return rep;
}

/// Sup over sampled t >= burn_in of |x(t) - mu(t)/lambda(t)|.
inline double measure_delta(const OdeTrajectory& traj, const VectorField& field, double burn_in) {
    if (!(burn_in < traj.horizon()))
        throw std::domain_error("measure_delta: burn-in must precede the trajectory end");
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const double t = traj.times[k];
        if (t < burn_in) continue;
        const double l = field.lambda.eval(t);
        if (l <= 0.0) throw std::runtime_error("measure_delta: ratio undefined (lambda = 0)");
        worst = std::max(worst, std::fabs(traj.states[k][0] - field.mu.eval(t) / l));
    }
    return worst;
}

/// Integral-equation audit: max over sample intervals of
/// |dx - integral of F along the dense-output path| (5-point Gauss-Legendre
/// per interval). A solution check, not part of solving.
inline double field_residual(const VectorField& field, const OdeTrajectory& traj) {
    static constexpr double gl_x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                       0.5384693101056831, 0.9061798459386640};
    static constexpr double gl_w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                       0.4786286704993665, 0.2369268850561891};
    double worst = 0.0;
    const int dim = traj.dim;
    for (std::size_t k = 0; k + 1 < traj.times.size(); ++k) {
        const double t0 = traj.times[k], t1 = traj.times[k + 1];
        const double h = t1 - t0;
        if (h <= 0.0) continue;
        std::array<double, 2> acc{0.0, 0.0};
        for (int g = 0; g < 5; ++g) {
            const double t = t0 + 0.5 * h * (1.0 + gl_x[g]);
            ode_detail::StateVec z{}, f{};
            z[0] = traj.value_at(t, 0);
            if (dim > 1) z[1] = traj.value_at(t, 1);
            field.rhs(t, z, f);
            for (int q = 0; q < dim; ++q) acc[q] += 0.5 * h * gl_w[g] * f[q];
        }
        for (int q = 0; q < dim; ++q)
            worst = std::max(worst, std::fabs(traj.states[k + 1][q] - traj.states[k][q] - acc[q]));
    }
    return worst;
}

/// Trajectory CSV: header `t,x,y` (the reduced form emits y = c - x).
inline void write_ode_csv(std::ostream& os, const OdeTrajectory& traj) {
    os << "t,x,y\n";
    os.precision(17);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const double x = traj.states[k][0];
        const double y = traj.dim > 1 ? traj.states[k][1] : traj.mass - x;
        os << traj.times[k] << ',' << x << ',' << y << '\n';
    }
}

}  // namespace epictrl
