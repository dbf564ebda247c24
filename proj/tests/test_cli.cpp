#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;
};

fs::path scratch_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "epictrl_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

fs::path fresh_dir(const std::string& name) {
    static int counter = 0;
    fs::path p = scratch_root() / (name + "_" + std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

CliResult run_cli(const std::string& args) {
    const fs::path log = scratch_root() / "last_output.txt";
    const std::string cmd = std::string(EPICTRL_BIN) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::ostringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

fs::path write_config(const std::string& name, const std::string& body) {
    const fs::path p = scratch_root() / name;
    std::ofstream os(p);
    os << body;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kSimConfig =
    "model.n = 60\n"
    "model.lambda = constant:2\n"
    "model.mu = constant:1\n"
    "model.initial = fraction:0.1\n"
    "model.horizon = 4\n";

}  // namespace

TEST_CASE("simulate writes deterministic files", "[cli]") {
    const fs::path cfg = write_config("sim.cfg", kSimConfig);
    const fs::path out_a = fresh_dir("sim_a");
    const fs::path out_b = fresh_dir("sim_b");

    const CliResult a = run_cli("simulate --config " + cfg.string() + " --seed 7 --out " +
                                out_a.string());
    REQUIRE(a.exit_code == 0);
    const CliResult b = run_cli("simulate --config " + cfg.string() + " --seed 7 --out " +
                                out_b.string());
    REQUIRE(b.exit_code == 0);

    CHECK(slurp(out_a / "traj_000.csv") == slurp(out_b / "traj_000.csv"));
    CHECK(slurp(out_a / "run.json") == slurp(out_b / "run.json"));
    // resolved configs match except for the delivery directory
    auto strip_outdir = [](std::string text) {
        const auto pos = text.find("output.dir");
        const auto end = text.find('\n', pos);
        return text.erase(pos, end - pos + 1);
    };
    CHECK(strip_outdir(slurp(out_a / "config.resolved")) ==
          strip_outdir(slurp(out_b / "config.resolved")));

    const std::string traj = slurp(out_a / "traj_000.csv");
    CHECK(traj.find("# epictrl") == 0);
    CHECK(traj.find("# seed 7") != std::string::npos);
    CHECK(traj.find("t,state,frac") != std::string::npos);

    // a different seed changes the bytes
    const fs::path out_c = fresh_dir("sim_c");
    run_cli("simulate --config " + cfg.string() + " --seed 8 --out " + out_c.string());
    CHECK(slurp(out_a / "traj_000.csv") != slurp(out_c / "traj_000.csv"));
}

TEST_CASE("parallel replication is content-identical to serial", "[cli]") {
    const fs::path cfg = write_config("sim_par.cfg", kSimConfig);
    const fs::path serial = fresh_dir("serial");
    const fs::path parallel = fresh_dir("parallel");
    REQUIRE(run_cli("simulate --config " + cfg.string() + " --seed 3 --reps 6 --out " +
                    serial.string())
                .exit_code == 0);
    REQUIRE(run_cli("simulate --config " + cfg.string() + " --seed 3 --reps 6 --parallel 3 --out " +
                    parallel.string())
                .exit_code == 0);
    for (int r = 0; r < 6; ++r) {
        std::ostringstream name;
        name << "traj_00" << r << ".csv";
        CHECK(slurp(serial / name.str()) == slurp(parallel / name.str()));
    }
}

TEST_CASE("overwrites require force", "[cli]") {
    const fs::path cfg = write_config("sim_force.cfg", kSimConfig);
    const fs::path out = fresh_dir("force");
    REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " + out.string()).exit_code == 0);
    const CliResult blocked = run_cli("simulate --config " + cfg.string() + " --out " + out.string());
    CHECK(blocked.exit_code == 1);
    CHECK(blocked.output.find("--force") != std::string::npos);
    CHECK(run_cli("simulate --config " + cfg.string() + " --force --out " + out.string())
              .exit_code == 0);
}

TEST_CASE("config errors exit 2 and name the key", "[cli]") {
    const fs::path missing = write_config("missing_n.cfg",
                                          "model.lambda = constant:2\nmodel.mu = constant:1\n");
    const CliResult r =
        run_cli("simulate --config " + missing.string() + " --out " + fresh_dir("cfg_err").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("model.n") != std::string::npos);

    const fs::path unknown = write_config("unknown.cfg", kSimConfig + "model.typo_key = 1\n");
    const CliResult u =
        run_cli("simulate --config " + unknown.string() + " --out " + fresh_dir("cfg_unk").string());
    CHECK(u.exit_code == 2);
    CHECK(u.output.find("model.typo_key") != std::string::npos);
}

TEST_CASE("solve runs every method and cross-checks", "[cli]") {
    const fs::path cfg = write_config("solve.cfg",
                                      "model.n = 4\n"
                                      "model.preset = paper\n"
                                      "solver.method = all\n"
                                      "solver.nu = 6\n"
                                      "profit.kind = quadratic\n"
                                      "profit.x_star = 0.5\n"
                                      "profit.curvature = 16\n");
    const fs::path out = fresh_dir("solve");
    const CliResult r = run_cli("solve --config " + cfg.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    const json solve = json::parse(slurp(out / "solve.json"));
    CHECK(solve.at("agreement").at("pass").get<bool>());
    CHECK(solve.at("agreement").at("max_abs_diff").get<double>() <= 1e-6);
    const std::string values = slurp(out / "values_closed.csv");
    CHECK(values.find("1,8,1,0,1") != std::string::npos);
    CHECK(values.find("3,6,0,1,1") != std::string::npos);

    // closed form with linear costs is a config error
    const fs::path bad = write_config("solve_bad.cfg",
                                      "model.n = 4\n"
                                      "model.preset = paper\n"
                                      "solver.method = closed\n"
                                      "profit.kind = quadratic\n"
                                      "profit.x_star = 0.5\n"
                                      "cost.kind = linear\n"
                                      "cost.c_lambda = 0.1\n");
    CHECK(run_cli("solve --config " + bad.string() + " --out " + fresh_dir("solve_bad").string())
              .exit_code == 2);
}

TEST_CASE("ode classifies and measures", "[cli]") {
    const fs::path cfg = write_config("ode.cfg",
                                      "model.lambda = constant:2\n"
                                      "model.mu = constant:1\n"
                                      "ode.x0 = 0.9\n"
                                      "ode.horizon = 100\n"
                                      "ode.xi = 0.6\n"
                                      "ode.burn_in = 60\n");
    const fs::path out = fresh_dir("ode");
    REQUIRE(run_cli("ode --config " + cfg.string() + " --out " + out.string()).exit_code == 0);
    const json stab = json::parse(slurp(out / "stability.json"));
    CHECK(stab.at("case").get<std::string>() == "1");
    CHECK(stab.at("x2_star").get<double>() == 1.0);
    CHECK(stab.at("delta_measured").get<double>() <= 1e-6);
    CHECK(slurp(out / "ode.csv").find("t,x,y") != std::string::npos);
}

TEST_CASE("control evaluates costs at an equilibrium start", "[cli]") {
    const fs::path cfg = write_config("control.cfg",
                                      "control.task = evaluate\n"
                                      "control.kind = stationary\n"
                                      "control.lambda = 2\n"
                                      "control.mu = 1\n"
                                      "control.x0 = 0.5\n"
                                      "control.T = 5\n"
                                      "control.c1 = quadratic:0\n"
                                      "control.c2 = identity\n");
    const fs::path out = fresh_dir("control");
    REQUIRE(run_cli("control --config " + cfg.string() + " --out " + out.string()).exit_code == 0);
    const json ctl = json::parse(slurp(out / "control.json"));
    // flat path at 0.5: cost = T * 0.25 + 0.5
    CHECK_THAT(ctl.at("cost").get<double>(), Catch::Matchers::WithinAbs(1.75, 1e-6));
    CHECK(slurp(out / "controlled.csv").find("t,x,lambda,mu,target") != std::string::npos);

    const fs::path stat = write_config("stationary.cfg",
                                       "control.task = stationary\n"
                                       "control.lambda_fixed = 1\n"
                                       "control.mu_cap = 2\n"
                                       "profit.kind = linear\n"
                                       "profit.slope = 1\n"
                                       "cost.kind = linear\n"
                                       "cost.c_mu = 0.1\n");
    const fs::path out2 = fresh_dir("stationary");
    REQUIRE(run_cli("control --config " + stat.string() + " --out " + out2.string()).exit_code == 0);
    const json res = json::parse(slurp(out2 / "control.json"));
    CHECK_THAT(res.at("mu_star").get<double>(), Catch::Matchers::WithinAbs(1.0, 1e-5));
    CHECK_THAT(res.at("value").get<double>(), Catch::Matchers::WithinAbs(0.9, 1e-6));
}

TEST_CASE("experiment argmax emits the figure csv", "[cli]") {
    const fs::path out = fresh_dir("argmax");
    const CliResult r = run_cli("experiment argmax --xstar golden --out " + out.string() +
                                " --config /dev/null");
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(out / "argmax.csv");
    CHECK(csv.find("n,i_star,ratio,abs_err") != std::string::npos);
    const json rep = json::parse(slurp(out / "report.json"));
    CHECK(rep.at("name").get<std::string>() == "argmax_scan");
    CHECK(rep.at("cells").size() == 1000);

    // dips as a named experiment with a rational maximum
    const fs::path out2 = fresh_dir("dips");
    const CliResult d = run_cli("experiment dips --xstar 1/4 --out " + out2.string() +
                                " --config /dev/null");
    REQUIRE(d.exit_code == 0);
    const json dips = json::parse(slurp(out2 / "dips.json"));
    CHECK(dips.at("pass").get<bool>());
}

TEST_CASE("experiment meanfield_gap reruns byte-identically", "[cli][slow]") {
    const fs::path cfg = write_config("gap.cfg",
                                      "model.lambda = constant:2\n"
                                      "model.mu = constant:1\n"
                                      "experiment.name = meanfield_gap\n"
                                      "experiment.n_list = 50,200\n"
                                      "experiment.reps = 10\n"
                                      "experiment.horizon = 4\n");
    const fs::path out_a = fresh_dir("gap_a");
    const fs::path out_b = fresh_dir("gap_b");
    REQUIRE(run_cli("experiment --config " + cfg.string() + " --seed 5 --out " + out_a.string())
                .exit_code == 0);
    REQUIRE(run_cli("experiment --config " + cfg.string() + " --seed 5 --parallel 2 --out " +
                    out_b.string())
                .exit_code == 0);
    CHECK(slurp(out_a / "report.json") == slurp(out_b / "report.json"));
    CHECK(slurp(out_a / "meanfield_gap.csv") == slurp(out_b / "meanfield_gap.csv"));
}

TEST_CASE("environment variable provides the output directory", "[cli]") {
    const fs::path cfg = write_config("env.cfg", kSimConfig);
    const fs::path out = fresh_dir("env_out");
    const std::string cmd = "EPICTRL_OUT=" + out.string() + " " + EPICTRL_BIN +
                            " simulate --config " + cfg.string() + " > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(out / "run.json"));
}
