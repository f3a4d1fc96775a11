#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "levyecf/experiment.hpp"

using namespace levyecf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("levyecf_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Json gaussian_config()
{
    return Json{{"family", "gaussian"}, {"eta", {0.3, 1.0}}, {"grid_points", 10}, {"grid_u_max", 2.0},
                {"eta0", {0.25, 1.05}}, {"n", 2000}, {"seed", 7}};
}

}  // namespace

TEST_CASE("config validation")
{
    CHECK_NOTHROW(ExperimentConfig::from_json(gaussian_config()));
    Json bad = gaussian_config();
    bad["colour"] = "red";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = gaussian_config();
    bad["eta"] = {0.3};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = gaussian_config();
    bad["algorithm"] = "alg2";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = gaussian_config();
    bad["ar"] = {1.5};
    bad["algorithm"] = "alg3";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = gaussian_config();
    bad["eta0"] = {0.1, 1.0, 2.0};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    Json free = gaussian_config();
    free["free"] = {"sigma"};
    free["eta0"] = {1.1};
    const ExperimentConfig c = ExperimentConfig::from_json(free);
    CHECK(c.truth.free_count() == 1);
    CHECK(truth_vector(c).names == std::vector<std::string>{"eta[sigma]"});
}

TEST_CASE("default grid spans two standard deviations of the increment law")
{
    Json j = gaussian_config();
    j.erase("grid_u_max");
    j["eta"] = {0.3, 4.0};
    j["eta0"] = {0.25, 4.1};
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    CHECK(c.grid_e()[9] == doctest::Approx(0.5));
    CHECK(c.grid_s()[9] == doctest::Approx(0.5));
}

TEST_CASE("number formatting keeps 17 significant digits")
{
    for (double v : {0.1, -1.0 / 3.0, 6.02214076e23, 2.2250738585072014e-308}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(3.0) == "3");
}

TEST_CASE("data CSV parsing")
{
    std::istringstream ok("dy\n1.5\n-2e-3\n\n+0.25\r\n");
    const VectorXd v = parse_data_csv(ok);
    REQUIRE(v.size() == 3);
    CHECK(v(2) == 0.25);
    std::istringstream header_only("dy\n");
    CHECK(parse_data_csv(header_only).size() == 0);
    std::istringstream corrupt("dy\n1.0\n0.3x\n");
    try {
        parse_data_csv(corrupt);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::istringstream two("dy\n1.0,2.0\n");
    CHECK_THROWS_AS(parse_data_csv(two), ParseError);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_data_csv(empty), ParseError);
}

TEST_CASE("simulate: empty, reproducible and CLT-consistent")
{
    Json j = gaussian_config();
    j["n"] = 0;
    const fs::path a = scratch("sim_empty");
    cmd_simulate(ExperimentConfig::from_json(j), a.string());
    CHECK(slurp(a / "data.csv") == "dy\n");

    j["n"] = 50000;
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    const fs::path b = scratch("sim_b"), d = scratch("sim_d");
    cmd_simulate(c, b.string());
    cmd_simulate(c, d.string());
    CHECK(slurp(b / "data.csv") == slurp(d / "data.csv"));
    CHECK(slurp(b / "data.json") == slurp(d / "data.json"));

    const VectorXd y = read_data_csv((b / "data.csv").string());
    REQUIRE(y.size() == 50000);
    CHECK(y == c.simulate_data(50000, 7));
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / (y.size() - 1.0);
    CHECK(std::abs(mean - 0.3) < 4.0 / std::sqrt(50000.0));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / 50000.0));
}

TEST_CASE("estimate: recursive and offline summaries")
{
    Json j = gaussian_config();
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    const fs::path dir = scratch("estimate");
    cmd_simulate(c, dir.string());
    const Json s = cmd_estimate(c, (dir / "data.csv").string(), (dir / "alg1").string());
    CHECK(s["estimate"].contains("eta[mu]"));
    CHECK(s["reset_count"].get<long>() == 0);
    CHECK(s["seed"].get<long>() == 7);
    const std::string traj = slurp(dir / "alg1" / "trajectory.csv");
    CHECK(traj.rfind("n,eta[mu],eta[sigma],\"r_e[1,1]\"", 0) == 0);

    j["algorithm"] = "offline";
    const Json o = cmd_estimate(ExperimentConfig::from_json(j), (dir / "data.csv").string(), (dir / "off").string());
    CHECK(o["converged"].get<bool>());
    CHECK(std::abs(o["estimate"]["eta[mu]"].get<double>() - s["estimate"]["eta[mu]"].get<double>()) < 0.1);

    std::ofstream(dir / "bad.csv") << "dy\n0.1\n0.2\nnot-a-number\n";
    try {
        cmd_estimate(c, (dir / "bad.csv").string(), (dir / "bad").string());
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
}

TEST_CASE("Monte Carlo: identical seeds give zero covariance")
{
    Json j = gaussian_config();
    j["replications"] = 4;
    j["same_seed"] = true;
    j["n"] = 500;
    const MonteCarloReport r = run_montecarlo(ExperimentConfig::from_json(j));
    CHECK(r.study.n_cov.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.study.runs.size() == 4);
}

TEST_CASE("Monte Carlo: theoretical covariance is the closed form")
{
    Json j = gaussian_config();
    j["replications"] = 3;
    j["n"] = 300;
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    const MonteCarloReport r = run_montecarlo(c);
    CHECK(r.sigma == sigma_eta(make_gaussian(0.3, 1.0), FreqGrid::equispaced(10, 2.0)));
    const Json out = r.to_json();
    CHECK(out["replications"].get<int>() == 3);
    CHECK(out["failures"].empty());

    Json a = gaussian_config();
    a["replications"] = 1;
    CHECK_THROWS_AS(run_montecarlo(ExperimentConfig::from_json(a)), ConfigError);
}

TEST_CASE("Monte Carlo: results do not depend on the thread count")
{
    Json j = gaussian_config();
    j["replications"] = 6;
    j["n"] = 400;
    j["threads"] = 1;
    const MonteCarloReport one = run_montecarlo(ExperimentConfig::from_json(j));
    j["threads"] = 3;
    const MonteCarloReport three = run_montecarlo(ExperimentConfig::from_json(j));
    CHECK(one.study.n_cov == three.study.n_cov);
}

TEST_CASE("command line front end")
{
    const char* cli = std::getenv("LEVYECF_CLI");
    if (!cli) {
        MESSAGE("LEVYECF_CLI not set; skipping");
        return;
    }
    const fs::path dir = scratch("cli");
    std::ofstream(dir / "cfg.json") << gaussian_config().dump();
    const std::string base = std::string("\"") + cli + "\"";
    const std::string cfg = " --config \"" + (dir / "cfg.json").string() + "\"";
    auto run = [](const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); };
    CHECK(run(base + " simulate" + cfg + " --out \"" + (dir / "a").string() + "\"") == 0);
    CHECK(run(base + " simulate" + cfg + " --out \"" + (dir / "b").string() + "\" --seed-override 7") == 0);
    CHECK(slurp(dir / "a" / "data.csv") == slurp(dir / "b" / "data.csv"));
    CHECK(run(base + " estimate" + cfg + " --data \"" + (dir / "a" / "data.csv").string() + "\" --out \""
              + (dir / "est").string() + "\"") == 0);
    CHECK(fs::exists(dir / "est" / "summary.json"));
    std::ofstream(dir / "bad.csv") << "dy\n1\nx\n";
    const std::string err = (dir / "err.txt").string();
    CHECK(std::system((base + " estimate" + cfg + " --data \"" + (dir / "bad.csv").string() + "\" --out \""
                       + (dir / "bad").string() + "\" 2> \"" + err + "\"").c_str()) != 0);
    CHECK(slurp(err).find("line 3") != std::string::npos);
    CHECK(run(base + " frobnicate") != 0);
}
