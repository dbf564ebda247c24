// epictrl: workbench CLI for controlled epidemic-like birth-death chains,
// their uniformized control problems, and the mean-field limit.
//
// Subcommands: simulate | solve | ode | control | experiment.
// Exit codes: 0 success, 1 runtime error, 2 config error, 3 criteria failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "epictrl/config.hpp"
#include "epictrl/control.hpp"
#include "epictrl/ctmc.hpp"
#include "epictrl/experiments.hpp"
#include "epictrl/lp.hpp"
#include "epictrl/mdp.hpp"
#include "epictrl/meanfield.hpp"
#include "epictrl/rates.hpp"
#include "epictrl/version.hpp"

namespace fs = std::filesystem;
using epictrl::Config;
using epictrl::ConfigError;
using json = nlohmann::json;

namespace {

/// Experiment or cross-check criteria failed; exits with code 3.
class CriteriaFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<int> reps;
    int parallel = 1;
    bool force = false;
    std::string format;  // csv|json|both; empty defers to the config
    std::string experiment_name;  // positional override
    std::string xstar_override;
};

std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// `get with default` helpers that record the default into the config, so the
// emitted echo is the fully-resolved run configuration
double num_or(Config& cfg, const std::string& key, double def) {
    if (!cfg.has(key)) cfg.set(key, fmt_num(def));
    return cfg.require_num(key);
}

int int_or(Config& cfg, const std::string& key, int def) {
    if (!cfg.has(key)) cfg.set(key, std::to_string(def));
    return cfg.require_int(key);
}

std::string str_or(Config& cfg, const std::string& key, const std::string& def) {
    if (!cfg.has(key)) cfg.set(key, def);
    return cfg.require_str(key);
}

struct RunContext {
    Config cfg;
    fs::path out;
    std::uint64_t seed = 1;
    std::optional<int> reps_override;
    int threads = 1;
    bool force = false;
    std::string format = "both";

    bool want_csv() const { return format == "csv" || format == "both"; }
    bool want_json() const { return format == "json" || format == "both"; }

    /// Hash of the resolved run parameters; the output block is delivery,
    /// not semantics, so identical runs into different directories carry the
    /// same hash.
    std::string hash_hex() const {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (const auto& [key, value] : cfg.entries()) {
            if (key.rfind("output.", 0) == 0) continue;
            for (char c : key + " = " + value + "\n") {
                h ^= static_cast<unsigned char>(c);
                h *= 0x100000001B3ull;
            }
        }
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << h;
        return os.str();
    }

    std::string csv_prelude() const {
        std::string s;
        s += std::string("# epictrl ") + epictrl::kVersion + "\n";
        s += "# config_hash " + hash_hex() + "\n";
        s += "# seed " + std::to_string(seed) + "\n";
        return s;
    }

    void decorate(json& j) const {
        j["tool_version"] = epictrl::kVersion;
        j["config_hash"] = hash_hex();
        j["seed"] = seed;
    }

    void write_file(const std::string& name, const std::string& content) const {
        const fs::path p = out / name;
        if (fs::exists(p) && !force)
            throw std::runtime_error("refusing to overwrite " + p.string() + " (pass --force)");
        std::ofstream os(p, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + p.string());
        os << content;
    }

    void write_json(const std::string& name, json j) const {
        decorate(j);
        write_file(name, j.dump(2) + "\n");
    }

    void finalize_echo() const { write_file("config.resolved", cfg.canonical()); }
};

RunContext make_context(const CliOptions& opt) {
    RunContext ctx;
    ctx.cfg = opt.config_path.empty() ? Config{} : Config::parse_file(opt.config_path);
    if (opt.seed) ctx.cfg.set("run.seed", std::to_string(*opt.seed));
    if (!ctx.cfg.has("run.seed")) ctx.cfg.set("run.seed", "1");
    try {
        ctx.seed = std::stoull(ctx.cfg.require_str("run.seed"));
    } catch (const std::exception&) {
        throw ConfigError("run.seed: expected an unsigned integer");
    }
    ctx.reps_override = opt.reps;

    std::string out = opt.out_dir;
    if (out.empty()) {
        if (const char* env = std::getenv("EPICTRL_OUT")) out = env;
    }
    if (out.empty()) out = ctx.cfg.get_str("output.dir", "epictrl_run");
    ctx.cfg.set("output.dir", out);
    ctx.out = out;
    fs::create_directories(ctx.out);

    ctx.format = opt.format.empty() ? str_or(ctx.cfg, "output.format", "both")
                                    : (ctx.cfg.set("output.format", opt.format), opt.format);
    if (ctx.format != "csv" && ctx.format != "json" && ctx.format != "both")
        throw ConfigError("output.format must be csv, json, or both");
    ctx.force = opt.force;
    ctx.threads = opt.parallel;
    return ctx;
}

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

const std::vector<std::string> kCommonKeys = {"run.seed", "output.dir", "output.format"};
const std::vector<std::string> kModelKeys = {"model.n",  "model.preset",  "model.lambda",
                                             "model.mu", "model.initial", "model.horizon"};
const std::vector<std::string> kProfitKeys = {"profit.kind",  "profit.x_star", "profit.curvature",
                                              "profit.peak",  "profit.c",      "profit.slope",
                                              "profit.intercept", "profit.points"};
const std::vector<std::string> kCostKeys = {"cost.kind", "cost.c_lambda", "cost.c_mu",
                                            "cost.table"};
const std::vector<std::string> kPolicyKeys = {
    "control.kind",   "control.lambda",     "control.mu",     "control.x_star",
    "control.kappa",  "control.delta_hat",  "control.theta",  "control.lambda0",
    "control.mu0",    "control.lambda_cap", "control.mu_cap", "control.policy_csv",
    "control.mass"};

epictrl::ProcessModel model_from(Config& cfg) {
    epictrl::ProcessModel model;
    model.n = cfg.require_int("model.n");
    model.preset = epictrl::parse_preset(str_or(cfg, "model.preset", "sis"), "model.preset");
    model.lambda = epictrl::parse_schedule(cfg.require_str("model.lambda"), "model.lambda");
    model.mu = epictrl::parse_schedule(cfg.require_str("model.mu"), "model.mu");
    model.initial =
        epictrl::parse_initial(str_or(cfg, "model.initial", "fraction:0.1"), model.n, "model.initial");
    return model;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(RunContext& ctx) {
    if (ctx.reps_override) ctx.cfg.set("sim.reps", std::to_string(*ctx.reps_override));
    ctx.cfg.ensure_known(kCommonKeys + kModelKeys + std::vector<std::string>{"sim.reps"});
    epictrl::ProcessModel model = model_from(ctx.cfg);
    const double horizon = num_or(ctx.cfg, "model.horizon", 10.0);
    const int reps = int_or(ctx.cfg, "sim.reps", 1);
    if (reps < 1) throw ConfigError("sim.reps must be >= 1");
    ctx.finalize_echo();

    std::vector<std::string> files;
    std::vector<std::uint64_t> seeds(reps);
    std::vector<std::string> bodies(reps);
    epictrl::exp_detail::parallel_for(reps, ctx.threads, [&](int r) {
        seeds[r] = epictrl::derive_seed(ctx.seed, 0, r);
        const epictrl::Trajectory traj = epictrl::simulate(model, horizon, seeds[r]);
        std::ostringstream os;
        epictrl::write_trajectory_csv(os, traj);
        bodies[r] = os.str();
    });
    for (int r = 0; r < reps; ++r) {
        std::ostringstream name;
        name << "traj_" << std::setw(3) << std::setfill('0') << r << ".csv";
        if (ctx.want_csv()) {
            ctx.write_file(name.str(), ctx.csv_prelude() + bodies[r]);
            files.push_back(name.str());
        }
    }

    json run;
    run["command"] = "simulate";
    run["n"] = model.n;
    run["preset"] = epictrl::to_string(model.preset);
    run["horizon"] = horizon;
    run["reps"] = reps;
    run["rep_seeds"] = seeds;
    run["files"] = files;
    ctx.write_json("run.json", run);
    return 0;
}

// ------------------------------------------------------------------- solve

epictrl::MdpProblem problem_from(Config& cfg) {
    const int n = cfg.require_int("model.n");
    const epictrl::Preset preset =
        epictrl::parse_preset(str_or(cfg, "model.preset", "paper"), "model.preset");
    const double lambda_max = num_or(cfg, "solver.lambda_max", 1.0);
    const double mu_max = num_or(cfg, "solver.mu_max", 1.0);
    const double nu = num_or(cfg, "solver.nu", 0.0);
    try {
        return epictrl::MdpProblem::make(n, preset, lambda_max, mu_max, epictrl::parse_profit(cfg),
                                         epictrl::parse_action_cost(cfg), nu);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("solver setup: ") + e.what());
    }
}

int cmd_solve(RunContext& ctx) {
    ctx.cfg.ensure_known(kCommonKeys + kProfitKeys + kCostKeys +
                         std::vector<std::string>{"model.n", "model.preset", "solver.method",
                                                  "solver.tol", "solver.nu", "solver.lambda_max",
                                                  "solver.mu_max", "solver.eta",
                                                  "solver.lp_dump"});
    const std::string method = ctx.cfg.require_str("solver.method");
    const double tol = num_or(ctx.cfg, "solver.tol", 1e-10);
    const epictrl::MdpProblem problem = problem_from(ctx.cfg);

    // LP objective weights: one shared value or one value per state
    std::vector<double> eta = ctx.cfg.get_num_list("solver.eta", {});
    if (eta.size() == 1) eta.assign(problem.n() + 1, eta[0]);
    if (!eta.empty() && static_cast<int>(eta.size()) != problem.n() + 1)
        throw ConfigError("solver.eta takes one weight or n+1 weights");

    const bool closed_ok = problem.action_cost().kind() == epictrl::ActionCostSpec::Kind::zero &&
                           problem.preset() == epictrl::Preset::paper;
    if (method == "closed" && !closed_ok)
        throw ConfigError("solver.method=closed requires zero action costs and the paper preset");
    ctx.finalize_echo();

    struct Solved {
        std::string name;
        epictrl::ValueFunction value;
        epictrl::Policy policy;
    };
    std::vector<Solved> solved;
    json stats;

    auto run_method = [&](const std::string& m) {
        if (m == "closed") {
            auto [v, pol] = epictrl::solve_closed_form(problem);
            solved.push_back({m, std::move(v), std::move(pol)});
        } else if (m == "vi") {
            auto [v, pol] = epictrl::value_iteration(problem, tol);
            solved.push_back({m, std::move(v), std::move(pol)});
        } else if (m == "pi") {
            int iters = 0;
            auto [v, pol] = epictrl::policy_iteration(problem, nullptr, &iters);
            stats["pi_iterations"] = iters;
            solved.push_back({m, std::move(v), std::move(pol)});
        } else if (m == "lp") {
            epictrl::MdpLpEncoding enc =
                problem.action_cost().kind() == epictrl::ActionCostSpec::Kind::general
                    ? epictrl::encode_lp_general(problem, problem.action_cost().table(), eta)
                    : epictrl::encode_lp_linear(problem, eta);
            if (ctx.cfg.get_str("solver.lp_dump", "false") == "true")
                ctx.write_file("lp_dump.txt", epictrl::lp_to_text(enc.lp));
            epictrl::LpSolveResult res = epictrl::solve_lp(problem, enc);
            stats["lp_iterations"] = res.lp.iterations;
            stats["lp_objective"] = res.lp.objective;
            solved.push_back({m, std::move(res.value), std::move(res.policy)});
        } else {
            throw ConfigError("solver.method must be closed|vi|pi|lp|all");
        }
    };

    if (method == "all") {
        if (closed_ok) run_method("closed");
        run_method("vi");
        run_method("pi");
        run_method("lp");
    } else {
        run_method(method);
    }

    json out;
    out["command"] = "solve";
    out["method"] = method;
    out["n"] = problem.n();
    out["i_star"] = problem.i_star();
    out["nu"] = problem.nu();
    out["stats"] = stats;
    json residuals;
    for (const auto& s : solved) {
        residuals[s.name] = epictrl::bellman_residual(problem, s.value);
        if (ctx.want_csv()) {
            std::ostringstream os;
            epictrl::write_values_csv(os, s.value, s.policy);
            ctx.write_file("values_" + s.name + ".csv", ctx.csv_prelude() + os.str());
        }
    }
    out["bellman_residuals"] = residuals;

    bool pass = true;
    if (solved.size() > 1) {
        double worst = 0.0;
        for (std::size_t a = 0; a < solved.size(); ++a)
            for (std::size_t b = a + 1; b < solved.size(); ++b)
                for (int i = 0; i <= problem.n(); ++i) {
                    if (!solved[a].value.finite[i] || !solved[b].value.finite[i]) continue;
                    worst = std::max(worst, std::fabs(solved[a].value.J[i] - solved[b].value.J[i]));
                }
        pass = worst <= 1e-6;
        out["agreement"] = {{"max_abs_diff", worst}, {"tolerance", 1e-6}, {"pass", pass}};
    }
    ctx.write_json("solve.json", out);
    if (!pass) throw CriteriaFailure("cross-solver agreement exceeded 1e-6");
    return 0;
}

// --------------------------------------------------------------------- ode

int cmd_ode(RunContext& ctx) {
    ctx.cfg.ensure_known({"run.seed", "output.*", "model.lambda", "model.mu", "ode.*"});
    epictrl::VectorField field;
    field.lambda = epictrl::parse_schedule(ctx.cfg.require_str("model.lambda"), "model.lambda");
    field.mu = epictrl::parse_schedule(ctx.cfg.require_str("model.mu"), "model.mu");
    field.mass = num_or(ctx.cfg, "ode.c", 1.0);
    const std::string form = str_or(ctx.cfg, "ode.form", "reduced");
    if (form == "pair") field.form = epictrl::VectorField::Form::pair;
    else if (form == "reduced") field.form = epictrl::VectorField::Form::reduced;
    else throw ConfigError("ode.form must be pair or reduced");

    const double x0 = ctx.cfg.require_num("ode.x0");
    const double horizon = ctx.cfg.require_num("ode.horizon");
    const double tol = num_or(ctx.cfg, "ode.tol", 1e-8);
    const double xi = num_or(ctx.cfg, "ode.xi", field.mass / 2.0);
    const double audit_horizon = num_or(ctx.cfg, "ode.audit_horizon", horizon);
    ctx.finalize_echo();

    const epictrl::OdeTrajectory traj =
        epictrl::integrate(field, {x0, field.mass - x0}, horizon, tol);
    if (ctx.want_csv()) {
        std::ostringstream os;
        epictrl::write_ode_csv(os, traj);
        ctx.write_file("ode.csv", ctx.csv_prelude() + os.str());
    }

    epictrl::StabilityReport rep = epictrl::classify(field, xi, audit_horizon);
    if (ctx.cfg.has("ode.burn_in") &&
        rep.stability_case == epictrl::StabilityCase::ratio_tracking)
        rep.delta_measured = epictrl::measure_delta(traj, field, ctx.cfg.require_num("ode.burn_in"));

    json j;
    j["command"] = "ode";
    j["case"] = epictrl::to_string(rep.stability_case);
    j["x1_star_range"] = {rep.x1_min, rep.x1_max};
    j["x2_star"] = rep.x2_star;
    j["xi"] = rep.xi;
    if (std::isnan(rep.delta_measured)) j["delta_measured"] = nullptr;
    else j["delta_measured"] = rep.delta_measured;
    j["final_x"] = traj.states.back()[0];
    j["field_residual"] = epictrl::field_residual(field, traj);
    ctx.write_json("stability.json", j);
    return 0;
}

// ----------------------------------------------------------------- control

epictrl::HorizonCostSpec cost_spec_from(Config& cfg, const std::string& prefix, double horizon) {
    epictrl::HorizonCostSpec spec;
    spec.horizon = horizon;
    const std::string c1 = str_or(cfg, prefix + ".c1", "zero");
    if (c1 == "zero") {
        spec.running = nullptr;
    } else if (c1 == "one") {
        spec.running = [](double, double, double) { return 1.0; };
    } else if (c1 == "profit_gap") {
        auto profit = std::make_shared<epictrl::ProfitSpec>(epictrl::parse_profit(cfg));
        const double peak = profit->eval(profit->x_star());
        spec.running = [profit, peak](double z, double, double) { return peak - profit->eval(z); };
    } else if (c1.rfind("quadratic:", 0) == 0) {
        const double ref = epictrl::parse_x_star(c1.substr(10), prefix + ".c1");
        spec.running = [ref](double z, double, double) { return (z - ref) * (z - ref); };
    } else {
        throw ConfigError(prefix + ".c1 must be zero|one|profit_gap|quadratic:<x>");
    }
    const std::string c2 = str_or(cfg, prefix + ".c2", "zero");
    if (c2 == "zero") {
        spec.terminal = nullptr;
    } else if (c2 == "identity") {
        spec.terminal = [](double z) { return z; };
    } else if (c2.rfind("quadratic:", 0) == 0) {
        const double ref = epictrl::parse_x_star(c2.substr(10), prefix + ".c2");
        spec.terminal = [ref](double z) { return (z - ref) * (z - ref); };
    } else {
        throw ConfigError(prefix + ".c2 must be zero|identity|quadratic:<x>");
    }
    return spec;
}

epictrl::Policy read_policy_csv(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open policy csv: " + path);
    epictrl::Policy pol;
    pol.action.assign(n + 1, epictrl::RatePair{0.0, 0.0});
    pol.masked.assign(n + 1, 0);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // i,J,lambda,mu,finite
            continue;
        }
        std::istringstream ls(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ls, tok, ',')) cols.push_back(tok);
        if (cols.size() != 5) throw ConfigError("policy csv: malformed row '" + line + "'");
        const int i = std::stoi(cols[0]);
        if (i < 0 || i > n) throw ConfigError("policy csv: state out of range");
        pol.action[i] = {std::stod(cols[2]), std::stod(cols[3])};
        pol.masked[i] = cols[4] == "0";
    }
    return pol;
}

epictrl::ControlPolicy policy_from(Config& cfg, double mass) {
    const std::string kind = cfg.require_str("control.kind");
    if (kind == "stationary")
        return epictrl::ControlPolicy::stationary(cfg.require_num("control.lambda"),
                                                  cfg.require_num("control.mu"), mass);
    if (kind == "ideal")
        return epictrl::ControlPolicy::ideal_trajectory(
            epictrl::parse_x_star(cfg.require_str("control.x_star"), "control.x_star"),
            num_or(cfg, "control.kappa", 1.0), num_or(cfg, "control.delta_hat", 1.0), mass);
    if (kind == "rate_constrained") {
        const auto th = cfg.get_num_list("control.theta", {});
        if (th.size() != 4)
            throw ConfigError("control.theta takes four values: lambda_lo,lambda_hi,mu_lo,mu_hi");
        return epictrl::ControlPolicy::rate_constrained(
            epictrl::parse_profit(cfg), {th[0], th[1], th[2], th[3]},
            cfg.require_num("control.lambda0"), cfg.require_num("control.mu0"),
            cfg.require_num("control.lambda_cap"), cfg.require_num("control.mu_cap"));
    }
    if (kind == "nominal")
        return epictrl::ControlPolicy::nominal(
            epictrl::parse_schedule(cfg.require_str("model.lambda"), "model.lambda"),
            epictrl::parse_schedule(cfg.require_str("model.mu"), "model.mu"), mass);
    if (kind == "tabular") {
        const int n = cfg.require_int("model.n");
        return epictrl::ControlPolicy::tabular(
            read_policy_csv(cfg.require_str("control.policy_csv"), n), n, mass);
    }
    throw ConfigError("control.kind must be stationary|ideal|rate_constrained|nominal|tabular");
}

int cmd_control(RunContext& ctx) {
    ctx.cfg.ensure_known(
        {"run.seed", "output.*", "model.*", "control.*", "profit.*", "cost.*"});
    const std::string task = ctx.cfg.require_str("control.task");

    if (task == "stationary") {
        const epictrl::ProfitSpec profit = epictrl::parse_profit(ctx.cfg);
        const epictrl::ActionCostSpec cost = epictrl::parse_action_cost(ctx.cfg);
        const double lambda_fixed = ctx.cfg.require_num("control.lambda_fixed");
        const double mu_cap = ctx.cfg.require_num("control.mu_cap");
        ctx.finalize_echo();
        const epictrl::StationaryControl res =
            epictrl::stationary_one_sided(profit, cost, lambda_fixed, mu_cap);
        json j;
        j["command"] = "control";
        j["task"] = task;
        j["mu_star"] = res.mu_star;
        j["value"] = res.value;
        ctx.write_json("control.json", j);
        return 0;
    }

    if (task != "evaluate") throw ConfigError("control.task must be evaluate or stationary");
    const double mass = num_or(ctx.cfg, "control.mass", 1.0);
    const epictrl::ControlPolicy policy = policy_from(ctx.cfg, mass);
    const double x0 = ctx.cfg.require_num("control.x0");
    const double T = ctx.cfg.require_num("control.T");
    const double tol = num_or(ctx.cfg, "control.tol", 1e-8);
    const double max_step = num_or(ctx.cfg, "control.max_step", 0.05);
    const epictrl::HorizonCostSpec spec = cost_spec_from(ctx.cfg, "control", T);
    ctx.finalize_echo();

    const epictrl::ControlledRun run =
        epictrl::run_controlled(policy, mass, x0, T, tol, &spec, max_step);
    if (ctx.want_csv()) {
        std::ostringstream os;
        os << "t,x,lambda,mu,target\n";
        os.precision(17);
        for (std::size_t k = 0; k < run.traj.times.size(); ++k)
            os << run.traj.times[k] << ',' << run.traj.states[k][0] << ',' << run.rates[k].lambda
               << ',' << run.rates[k].mu << ',' << run.target[k] << '\n';
        ctx.write_file("controlled.csv", ctx.csv_prelude() + os.str());
    }
    json j;
    j["command"] = "control";
    j["task"] = task;
    j["cost"] = run.cost;
    j["final_x"] = run.traj.states.back()[0];
    ctx.write_json("control.json", j);
    return 0;
}

// -------------------------------------------------------------- experiment

int cmd_experiment(RunContext& ctx, const CliOptions& opt) {
    if (!opt.experiment_name.empty()) ctx.cfg.set("experiment.name", opt.experiment_name);
    if (!opt.xstar_override.empty()) ctx.cfg.set("experiment.x_star", opt.xstar_override);
    if (ctx.reps_override) ctx.cfg.set("experiment.reps", std::to_string(*ctx.reps_override));
    ctx.cfg.ensure_known({"run.seed", "output.*", "model.*", "experiment.*", "control.*",
                          "profit.*", "cost.*"});
    const std::string name = ctx.cfg.require_str("experiment.name");

    if (name == "meanfield_gap") {
        epictrl::MeanfieldGapConfig gc;
        gc.preset = epictrl::parse_preset(str_or(ctx.cfg, "model.preset", "sis"), "model.preset");
        gc.lambda = epictrl::parse_schedule(ctx.cfg.require_str("model.lambda"), "model.lambda");
        gc.mu = epictrl::parse_schedule(ctx.cfg.require_str("model.mu"), "model.mu");
        gc.initial_fraction = num_or(ctx.cfg, "experiment.initial_fraction", 0.1);
        gc.n_list = ctx.cfg.get_int_list("experiment.n_list", {100, 1000, 10000});
        gc.horizon = num_or(ctx.cfg, "experiment.horizon", 10.0);
        gc.reps = int_or(ctx.cfg, "experiment.reps", 30);
        gc.seed0 = ctx.seed;
        gc.threads = ctx.threads;
        gc.ode_tol = num_or(ctx.cfg, "experiment.ode_tol", 1e-10);
        ctx.finalize_echo();
        const epictrl::ExperimentReport rep = epictrl::meanfield_gap(gc);
        if (ctx.want_csv()) ctx.write_file("meanfield_gap.csv", ctx.csv_prelude() + rep.to_csv());
        ctx.write_json("report.json", rep.to_json());
        if (!rep.pass) throw CriteriaFailure("meanfield_gap criteria failed");
        return 0;
    }

    if (name == "value_gap") {
        epictrl::ValueGapConfig vc;
        vc.preset = epictrl::parse_preset(str_or(ctx.cfg, "model.preset", "sis"), "model.preset");
        vc.policy = policy_from(ctx.cfg, 1.0);
        const double T = ctx.cfg.require_num("control.T");
        vc.cost = cost_spec_from(ctx.cfg, "control", T);
        vc.initial_fraction = num_or(ctx.cfg, "experiment.initial_fraction", 0.1);
        vc.n_list = ctx.cfg.get_int_list("experiment.n_list", {100, 400, 1600});
        vc.reps = int_or(ctx.cfg, "experiment.reps", 200);
        vc.seed0 = ctx.seed;
        vc.threads = ctx.threads;
        vc.ode_tol = num_or(ctx.cfg, "experiment.ode_tol", 1e-10);
        ctx.finalize_echo();
        const epictrl::ExperimentReport rep = epictrl::value_gap(vc);
        if (ctx.want_csv()) ctx.write_file("value_gap.csv", ctx.csv_prelude() + rep.to_csv());
        ctx.write_json("report.json", rep.to_json());
        if (!rep.pass) throw CriteriaFailure("value_gap criteria failed");
        return 0;
    }

    if (name == "argmax" || name == "dips") {
        const std::string xs = str_or(ctx.cfg, "experiment.x_star", "0.25");
        const double x_star = epictrl::parse_x_star(xs, "experiment.x_star");
        const int n_max = int_or(ctx.cfg, "experiment.n_max", name == "dips" ? 100 : 1000);
        std::vector<int> ns = ctx.cfg.get_int_list("experiment.n_list", {});
        if (ns.empty())
            for (int n = 1; n <= n_max; ++n) ns.push_back(n);
        const epictrl::ProfitSpec profit = epictrl::ProfitSpec::quadratic(x_star);
        ctx.finalize_echo();
        const epictrl::ExperimentReport rep = epictrl::argmax_scan(profit, ns);
        if (ctx.want_csv()) ctx.write_file("argmax.csv", ctx.csv_prelude() + rep.to_csv());
        ctx.write_json("report.json", rep.to_json());
        if (name == "dips") {
            std::optional<epictrl::RationalXStar> rational;
            const auto slash = xs.find('/');
            if (slash != std::string::npos)
                rational = epictrl::RationalXStar{std::stol(xs.substr(0, slash)),
                                                  std::stol(xs.substr(slash + 1))};
            else if (xs != "golden")
                throw ConfigError("experiment.x_star must be p/q or 'golden' for the dips check");
            const epictrl::DipsResult dips = epictrl::convergent_dips(rep, x_star, rational);
            json dj;
            dj["pass"] = dips.pass;
            dj["notes"] = dips.notes;
            dj["details"] = dips.details;
            ctx.write_json("dips.json", dj);
            if (!dips.pass) throw CriteriaFailure("convergent-dips criteria failed");
        }
        return 0;
    }

    throw ConfigError("experiment.name must be meanfield_gap|value_gap|argmax|dips");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"workbench for controlled epidemic-like chains and their mean-field limits"};
    app.require_subcommand(1);

    CliOptions opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "run configuration file");
        sub->add_option("--seed", opt.seed, "base RNG seed (overrides run.seed)");
        sub->add_option("--out", opt.out_dir, "output directory (overrides EPICTRL_OUT)");
        sub->add_option("--reps", opt.reps, "replication count override");
        sub->add_option(
               "--parallel",
               [&opt](const std::vector<std::string>& vals) {
                   opt.parallel = vals.empty() ? 0 : std::stoi(vals[0]);  // 0: one per core
                   return true;
               },
               "worker threads for replications (no value: one per core)")
            ->expected(0, 1);
        sub->add_flag("--force", opt.force, "allow overwriting existing outputs");
        sub->add_option("--format", opt.format, "csv|json|both");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "sample paths of the finite-n chain");
    CLI::App* solve = app.add_subcommand("solve", "solve the uniformized control problem");
    CLI::App* ode = app.add_subcommand("ode", "integrate and classify the mean-field system");
    CLI::App* control = app.add_subcommand("control", "evaluate mean-field control policies");
    CLI::App* experiment = app.add_subcommand("experiment", "scripted convergence experiments");
    for (CLI::App* sub : {simulate, solve, ode, control, experiment}) add_common(sub);
    experiment->add_option("name", opt.experiment_name,
                           "experiment name (overrides experiment.name)");
    experiment->add_option("--xstar", opt.xstar_override,
                           "profit maximum: number, p/q, or 'golden'");

    CLI11_PARSE(app, argc, argv);

    // --parallel with no value means one worker per hardware thread
    if (opt.parallel == 0) opt.parallel = static_cast<int>(std::thread::hardware_concurrency());

    try {
        RunContext ctx = make_context(opt);
        if (simulate->parsed()) return cmd_simulate(ctx);
        if (solve->parsed()) return cmd_solve(ctx);
        if (ode->parsed()) return cmd_ode(ctx);
        if (control->parsed()) return cmd_control(ctx);
        if (experiment->parsed()) return cmd_experiment(ctx, opt);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CriteriaFailure& e) {
        std::cerr << "criteria failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
