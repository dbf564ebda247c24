#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace epictrl {

/// Dense linear program: maximize objective . x subject to rows . x <= rhs
/// and per-variable bounds (defaults: free).
struct LpProblem {
    std::vector<double> objective;
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;
    std::vector<double> lower;  // may be -inf
    std::vector<double> upper;  // may be +inf

    std::size_t num_vars() const { return objective.size(); }
    std::size_t num_rows() const { return rows.size(); }

    void set_default_bounds() {
        lower.assign(num_vars(), -std::numeric_limits<double>::infinity());
        upper.assign(num_vars(), std::numeric_limits<double>::infinity());
    }

    void validate() const {
        const std::size_t n = num_vars();
        if (rhs.size() != rows.size())
            throw std::invalid_argument("LpProblem: rows/rhs size mismatch");
        if (lower.size() != n || upper.size() != n)
            throw std::invalid_argument("LpProblem: bounds size mismatch");
        for (double c : objective)
            if (!std::isfinite(c)) throw std::invalid_argument("LpProblem: non-finite objective");
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != n)
                throw std::invalid_argument("LpProblem: row width mismatch");
            for (double a : rows[r])
                if (!std::isfinite(a)) throw std::invalid_argument("LpProblem: non-finite coefficient");
            if (!std::isfinite(rhs[r]))
                throw std::invalid_argument("LpProblem: non-finite rhs");
        }
        for (std::size_t j = 0; j < n; ++j)
            if (!(lower[j] <= upper[j]))
                throw std::invalid_argument("LpProblem: lower bound exceeds upper bound");
    }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
    switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    }
    return "?";
}

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    std::vector<double> x;
    double objective = 0.0;
    int iterations = 0;
    /// Row multipliers; nonnegative, and for problems with zero lower bounds
    /// and no upper bounds, objective == rhs . dual at the optimum.
    std::vector<double> dual;
};

namespace lp_detail {

constexpr double kFeasTol = 1e-8;
constexpr double kOptTol = 1e-9;
constexpr double kPivotTol = 1e-10;
constexpr int kRefactorEvery = 64;
constexpr int kStallLimit = 100;

struct StandardForm {
    // min cost . z  s.t.  mat z = b (b >= 0), z >= 0
    std::vector<double> cost;
    std::vector<std::vector<double>> cols;  // column-major
    std::vector<double> b;
    std::size_t m = 0;
    double obj_offset = 0.0;  // original objective = -(internal optimum) + offset handled by caller

    // mapping back to user variables: x[j] = sign[j] * z[pos[j]] + shift[j] (+ z[neg[j]] when split)
    struct VarMap {
        std::size_t pos = 0;
        std::size_t neg = 0;
        bool split = false;
        double sign = 1.0;
        double shift = 0.0;
    };
    std::vector<VarMap> vmap;
    std::vector<double> row_flip;  // +1 or -1 per original row
    std::vector<std::ptrdiff_t> artificial_of_row;  // -1 where the slack starts the basis
    std::size_t first_slack = 0;
    std::size_t first_artificial = 0;
};

class Simplex {
public:
    explicit Simplex(const StandardForm& sf) : sf_(sf), m_(sf.m), n_(sf.cols.size()) {}

    // returns false on infeasible (phase 1) — caller inspects phase1_gap
    bool solve(LpSolution& out, int& iterations, bool& unbounded);

    const std::vector<double>& basic_values() const { return xb_; }
    const std::vector<std::size_t>& basis() const { return basis_; }
    std::vector<double> duals(const std::vector<double>& cost) const;

private:
    void refactorize();
    std::vector<double> ftran(std::size_t col) const;
    double run_phase(const std::vector<double>& cost, bool phase1, int& iterations, bool& unbounded,
                     const std::vector<char>& allowed);

    const StandardForm& sf_;
    std::size_t m_, n_;
    std::vector<std::size_t> basis_;
    std::vector<std::vector<double>> binv_;
    std::vector<double> xb_;
    std::vector<char> in_basis_;
};

inline void Simplex::refactorize() {
    // dense Gauss-Jordan inverse of the basis matrix
    std::vector<std::vector<double>> a(m_, std::vector<double>(2 * m_, 0.0));
    for (std::size_t i = 0; i < m_; ++i) {
        for (std::size_t r = 0; r < m_; ++r) a[r][i] = sf_.cols[basis_[i]][r];
        a[i][m_ + i] = 1.0;
    }
    for (std::size_t c = 0; c < m_; ++c) {
        std::size_t piv = c;
        double best = std::fabs(a[c][c]);
        for (std::size_t r = c + 1; r < m_; ++r)
            if (std::fabs(a[r][c]) > best) {
                best = std::fabs(a[r][c]);
                piv = r;
            }
        if (best < 1e-13)
            throw std::runtime_error("solve_simplex: numerically singular basis");
        std::swap(a[c], a[piv]);
        const double d = a[c][c];
        for (std::size_t k = c; k < 2 * m_; ++k) a[c][k] /= d;
        for (std::size_t r = 0; r < m_; ++r) {
            if (r == c) continue;
            const double f = a[r][c];
            if (f == 0.0) continue;
            for (std::size_t k = c; k < 2 * m_; ++k) a[r][k] -= f * a[c][k];
        }
    }
    for (std::size_t r = 0; r < m_; ++r)
        for (std::size_t k = 0; k < m_; ++k) binv_[r][k] = a[r][m_ + k];
    // refresh basic values
    for (std::size_t r = 0; r < m_; ++r) {
        double v = 0.0;
        for (std::size_t k = 0; k < m_; ++k) v += binv_[r][k] * sf_.b[k];
        xb_[r] = v;
    }
}

inline std::vector<double> Simplex::ftran(std::size_t col) const {
    std::vector<double> d(m_, 0.0);
    const auto& a = sf_.cols[col];
    for (std::size_t r = 0; r < m_; ++r) {
        double v = 0.0;
        for (std::size_t k = 0; k < m_; ++k) v += binv_[r][k] * a[k];
        d[r] = v;
    }
    return d;
}

inline std::vector<double> Simplex::duals(const std::vector<double>& cost) const {
    std::vector<double> y(m_, 0.0);
    for (std::size_t k = 0; k < m_; ++k) {
        double v = 0.0;
        for (std::size_t i = 0; i < m_; ++i) v += cost[basis_[i]] * binv_[i][k];
        y[k] = v;
    }
    return y;
}

inline double Simplex::run_phase(const std::vector<double>& cost, bool phase1, int& iterations,
                                 bool& unbounded, const std::vector<char>& allowed) {
    unbounded = false;
    bool bland = false;
    int stall = 0;
    int since_refactor = 0;
    double prev_obj = std::numeric_limits<double>::infinity();
    const int iter_cap = 20000 + 200 * static_cast<int>(m_ + n_);

    for (;;) {
        if (iterations++ > iter_cap)
            throw std::runtime_error("solve_simplex: iteration limit exceeded");

        const std::vector<double> y = duals(cost);
        double obj = 0.0;
        for (std::size_t i = 0; i < m_; ++i) obj += cost[basis_[i]] * xb_[i];
        if (obj < prev_obj - 1e-13 * (1.0 + std::fabs(obj))) {
            stall = 0;
        } else if (++stall > kStallLimit) {
            bland = true;  // anti-cycling fallback
        }
        prev_obj = obj;

        // price nonbasic columns
        std::size_t enter = n_;
        double best_rc = -kOptTol;
        for (std::size_t j = 0; j < n_; ++j) {
            if (in_basis_[j] || !allowed[j]) continue;
            double rc = cost[j];
            const auto& a = sf_.cols[j];
            for (std::size_t k = 0; k < m_; ++k) rc -= y[k] * a[k];
            if (bland) {
                if (rc < -kOptTol) {
                    enter = j;
                    break;
                }
            } else if (rc < best_rc) {
                best_rc = rc;
                enter = j;
            }
        }
        if (enter == n_) return obj;  // optimal for this phase

        const std::vector<double> d = ftran(enter);
        std::size_t leave = m_;
        double best_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < m_; ++r) {
            // basic artificials sit at zero after phase 1 and must not grow:
            // they block (and leave, degenerately) in either pivot direction
            const bool art = !phase1 && basis_[r] >= sf_.first_artificial;
            const double denom = art ? std::fabs(d[r]) : d[r];
            if (denom > kPivotTol) {
                const double ratio = xb_[r] / denom;
                if (ratio < best_ratio - 1e-12 ||
                    (ratio < best_ratio + 1e-12 && (leave == m_ || basis_[r] < basis_[leave]))) {
                    best_ratio = ratio;
                    leave = r;
                }
            }
        }
        if (leave == m_) {
            if (phase1)
                throw std::runtime_error("solve_simplex: phase-1 subproblem unbounded (numerical failure)");
            unbounded = true;
            return obj;
        }

        // pivot: update basis inverse and basic values
        const double piv = d[leave];
        in_basis_[basis_[leave]] = 0;
        in_basis_[enter] = 1;
        basis_[leave] = enter;
        for (std::size_t k = 0; k < m_; ++k) binv_[leave][k] /= piv;
        xb_[leave] /= piv;
        for (std::size_t r = 0; r < m_; ++r) {
            if (r == leave) continue;
            const double f = d[r];
            if (f == 0.0) continue;
            for (std::size_t k = 0; k < m_; ++k) binv_[r][k] -= f * binv_[leave][k];
            xb_[r] -= f * xb_[leave];
        }
        if (xb_[leave] < 0.0 && xb_[leave] > -1e-11) xb_[leave] = 0.0;

        if (++since_refactor >= kRefactorEvery) {
            refactorize();
            since_refactor = 0;
        }
    }
}

inline bool Simplex::solve(LpSolution& out, int& iterations, bool& unbounded) {
    basis_.resize(m_);
    in_basis_.assign(n_, 0);
    bool needs_phase1 = false;
    for (std::size_t r = 0; r < m_; ++r) {
        if (sf_.artificial_of_row[r] >= 0) {
            basis_[r] = static_cast<std::size_t>(sf_.artificial_of_row[r]);
            needs_phase1 = true;
        } else {
            basis_[r] = sf_.first_slack + r;  // slack has coefficient +1 here
        }
        in_basis_[basis_[r]] = 1;
    }
    binv_.assign(m_, std::vector<double>(m_, 0.0));
    xb_.assign(m_, 0.0);
    if (m_ > 0) refactorize();

    std::vector<char> allow_all(n_, 1);
    if (needs_phase1) {
        std::vector<double> cost1(n_, 0.0);
        for (std::size_t j = sf_.first_artificial; j < n_; ++j) cost1[j] = 1.0;
        bool ub1 = false;
        const double gap = run_phase(cost1, true, iterations, ub1, allow_all);
        if (gap > kFeasTol) return false;  // infeasible
        // pivot lingering artificials out where possible
        for (std::size_t r = 0; r < m_; ++r) {
            if (basis_[r] < sf_.first_artificial) continue;
            for (std::size_t j = 0; j < sf_.first_artificial; ++j) {
                if (in_basis_[j]) continue;
                const std::vector<double> d = ftran(j);
                if (std::fabs(d[r]) > kPivotTol) {
                    in_basis_[basis_[r]] = 0;
                    in_basis_[j] = 1;
                    basis_[r] = j;
                    refactorize();
                    break;
                }
            }
        }
    }

    // phase 2: artificials may not re-enter
    std::vector<char> allowed(n_, 1);
    for (std::size_t j = sf_.first_artificial; j < n_; ++j) allowed[j] = 0;
    run_phase(sf_.cost, false, iterations, unbounded, allowed);
    out.iterations = iterations;
    return true;
}

}  // namespace lp_detail

/// Deterministic two-phase primal simplex with a dense, periodically
/// refactorized basis inverse and a Bland fallback after stalls. Suited to
/// the small dense instances this project generates.
inline LpSolution solve_simplex(const LpProblem& lp) {
    using namespace lp_detail;
    lp.validate();

    const std::size_t nu = lp.num_vars();
    const std::size_t mu = lp.num_rows();
    const double inf = std::numeric_limits<double>::infinity();

    StandardForm sf;
    sf.vmap.resize(nu);

    // variable transforms to z >= 0
    std::vector<std::vector<double>> colrows;  // per internal structural var: the user column and sign
    struct ColSpec {
        std::size_t user = 0;
        double sign = 1.0;
    };
    std::vector<ColSpec> colspec;
    std::vector<double> shift(nu, 0.0);
    std::vector<std::pair<std::size_t, double>> extra_rows;  // (user var, ub - lb) for finite two-sided bounds
    for (std::size_t j = 0; j < nu; ++j) {
        auto& vm = sf.vmap[j];
        if (lp.lower[j] > -inf) {
            vm.pos = colspec.size();
            vm.sign = 1.0;
            vm.shift = lp.lower[j];
            shift[j] = lp.lower[j];
            colspec.push_back({j, 1.0});
            if (lp.upper[j] < inf) extra_rows.emplace_back(j, lp.upper[j] - lp.lower[j]);
        } else if (lp.upper[j] < inf) {
            vm.pos = colspec.size();
            vm.sign = -1.0;
            vm.shift = lp.upper[j];
            shift[j] = lp.upper[j];
            colspec.push_back({j, -1.0});
        } else {
            vm.split = true;
            vm.pos = colspec.size();
            colspec.push_back({j, 1.0});
            vm.neg = colspec.size();
            colspec.push_back({j, -1.0});
        }
    }

    const std::size_t m = mu + extra_rows.size();
    sf.m = m;
    sf.row_flip.assign(m, 1.0);

    // assemble rows: user rows then bound rows, rhs adjusted for shifts
    std::vector<std::vector<double>> rowmat(m, std::vector<double>(colspec.size(), 0.0));
    std::vector<double> b(m, 0.0);
    for (std::size_t r = 0; r < mu; ++r) {
        double rb = lp.rhs[r];
        for (std::size_t j = 0; j < nu; ++j) rb -= lp.rows[r][j] * shift[j];
        b[r] = rb;
        for (std::size_t k = 0; k < colspec.size(); ++k)
            rowmat[r][k] = lp.rows[r][colspec[k].user] * colspec[k].sign;
    }
    for (std::size_t e = 0; e < extra_rows.size(); ++e) {
        const std::size_t r = mu + e;
        b[r] = extra_rows[e].second;
        const auto& vm = sf.vmap[extra_rows[e].first];
        rowmat[r][vm.pos] = 1.0;  // shifted variable <= ub - lb
    }

    // flip rows to make b >= 0, add slacks, then artificials where the slack
    // coefficient came out negative
    for (std::size_t r = 0; r < m; ++r) {
        if (b[r] < 0.0) {
            sf.row_flip[r] = -1.0;
            b[r] = -b[r];
            for (auto& v : rowmat[r]) v = -v;
        }
    }
    const std::size_t n_struct = colspec.size();
    sf.first_slack = n_struct;
    sf.first_artificial = n_struct + m;
    sf.artificial_of_row.assign(m, -1);
    std::vector<std::size_t> needs_artificial;
    for (std::size_t r = 0; r < m; ++r) {
        if (sf.row_flip[r] < 0.0) {
            sf.artificial_of_row[r] =
                static_cast<std::ptrdiff_t>(sf.first_artificial + needs_artificial.size());
            needs_artificial.push_back(r);
        }
    }
    const std::size_t n_total = sf.first_artificial + needs_artificial.size();

    sf.cols.assign(n_total, std::vector<double>(m, 0.0));
    for (std::size_t k = 0; k < n_struct; ++k)
        for (std::size_t r = 0; r < m; ++r) sf.cols[k][r] = rowmat[r][k];
    for (std::size_t r = 0; r < m; ++r) sf.cols[n_struct + r][r] = sf.row_flip[r];  // slack (+-1)
    for (std::size_t a = 0; a < needs_artificial.size(); ++a)
        sf.cols[sf.first_artificial + a][needs_artificial[a]] = 1.0;
    sf.b = b;

    // internal objective: min -(user objective)
    sf.cost.assign(n_total, 0.0);
    for (std::size_t k = 0; k < n_struct; ++k)
        sf.cost[k] = -lp.objective[colspec[k].user] * colspec[k].sign;

    LpSolution sol;
    Simplex sx(sf);
    int iterations = 0;
    bool unbounded = false;
    if (!sx.solve(sol, iterations, unbounded)) {
        sol.status = LpStatus::infeasible;
        sol.iterations = iterations;
        return sol;
    }
    if (unbounded) {
        sol.status = LpStatus::unbounded;
        sol.iterations = iterations;
        return sol;
    }

    // recover user variables
    std::vector<double> z(n_total, 0.0);
    for (std::size_t r = 0; r < m; ++r) z[sx.basis()[r]] = sx.basic_values()[r];
    sol.x.assign(nu, 0.0);
    for (std::size_t j = 0; j < nu; ++j) {
        const auto& vm = sf.vmap[j];
        if (vm.split)
            sol.x[j] = z[vm.pos] - z[vm.neg];
        else
            sol.x[j] = vm.shift + vm.sign * z[vm.pos];
    }
    sol.objective = 0.0;
    for (std::size_t j = 0; j < nu; ++j) sol.objective += lp.objective[j] * sol.x[j];

    // row duals mapped back to the user's <= rows
    const std::vector<double> yin = sx.duals(sf.cost);
    sol.dual.assign(mu, 0.0);
    for (std::size_t r = 0; r < mu; ++r) sol.dual[r] = -yin[r] * sf.row_flip[r];

    // status-correctness audit: never return a violated "optimal"
    for (std::size_t r = 0; r < mu; ++r) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < nu; ++j) lhs += lp.rows[r][j] * sol.x[j];
        if (lhs > lp.rhs[r] + kFeasTol * (1.0 + std::fabs(lp.rhs[r])))
            throw std::runtime_error("solve_simplex: primal feasibility lost");
    }
    for (std::size_t j = 0; j < nu; ++j)
        if (sol.x[j] < lp.lower[j] - kFeasTol || sol.x[j] > lp.upper[j] + kFeasTol)
            throw std::runtime_error("solve_simplex: variable bound violated");

    sol.status = LpStatus::optimal;
    sol.iterations = iterations;
    return sol;
}

/// Plain-text dense dump, one constraint per line.
inline std::string lp_to_text(const LpProblem& lp) {
    std::ostringstream os;
    os.precision(17);
    os << "epictrl-lp 1\n";
    os << "vars " << lp.num_vars() << "\n";
    os << "maximize";
    for (double c : lp.objective) os << ' ' << c;
    os << "\nbounds\n";
    for (std::size_t j = 0; j < lp.num_vars(); ++j) {
        if (std::isinf(lp.lower[j])) os << "-inf"; else os << lp.lower[j];
        os << ' ';
        if (std::isinf(lp.upper[j])) os << "inf"; else os << lp.upper[j];
        os << '\n';
    }
    os << "rows " << lp.num_rows() << "\n";
    for (std::size_t r = 0; r < lp.num_rows(); ++r) {
        for (std::size_t j = 0; j < lp.num_vars(); ++j) os << lp.rows[r][j] << ' ';
        os << "<= " << lp.rhs[r] << '\n';
    }
    return os.str();
}

inline LpProblem lp_from_text(const std::string& text) {
    std::istringstream is(text);
    std::string tok;
    LpProblem lp;
    is >> tok;
    if (tok != "epictrl-lp") throw std::invalid_argument("lp_from_text: bad magic");
    int ver = 0;
    is >> ver;
    std::size_t nv = 0, nr = 0;
    is >> tok >> nv;
    if (tok != "vars") throw std::invalid_argument("lp_from_text: expected vars");
    is >> tok;
    if (tok != "maximize") throw std::invalid_argument("lp_from_text: expected maximize");
    lp.objective.resize(nv);
    for (auto& c : lp.objective) is >> c;
    is >> tok;
    if (tok != "bounds") throw std::invalid_argument("lp_from_text: expected bounds");
    lp.lower.resize(nv);
    lp.upper.resize(nv);
    auto read_bound = [&](double sign) {
        std::string w;
        is >> w;
        if (w == "-inf") return -std::numeric_limits<double>::infinity();
        if (w == "inf" || w == "+inf") return std::numeric_limits<double>::infinity();
        (void)sign;
        return std::stod(w);
    };
    for (std::size_t j = 0; j < nv; ++j) {
        lp.lower[j] = read_bound(-1.0);
        lp.upper[j] = read_bound(+1.0);
    }
    is >> tok >> nr;
    if (tok != "rows") throw std::invalid_argument("lp_from_text: expected rows");
    lp.rows.assign(nr, std::vector<double>(nv, 0.0));
    lp.rhs.resize(nr);
    for (std::size_t r = 0; r < nr; ++r) {
        for (std::size_t j = 0; j < nv; ++j) is >> lp.rows[r][j];
        is >> tok;
        if (tok != "<=") throw std::invalid_argument("lp_from_text: expected <=");
        is >> lp.rhs[r];
    }
    if (!is) throw std::invalid_argument("lp_from_text: truncated input");
    return lp;
}

}  // namespace epictrl
