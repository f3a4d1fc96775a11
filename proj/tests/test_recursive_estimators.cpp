#include <doctest.h>

#include <cmath>

#include "levyecf/recursive_estimators.hpp"

using namespace levyecf;

namespace {

EstimatorSetup iid_setup()
{
    EstimatorSetup s;
    s.algorithm = Algorithm::Iid;
    s.noise = make_gaussian(0.3, 1.0);
    s.grid_e = FreqGrid::equispaced(10, 2.0);
    s.eta0 = Eigen::Vector2d(0.25, 1.05);
    return s;
}

EstimatorSetup system_setup(Algorithm alg, const ArmaOrder& order, const VectorXd& theta0)
{
    EstimatorSetup s;
    s.algorithm = alg;
    s.noise = make_gaussian(0.0, 1.0);
    s.order = order;
    s.grid_e = FreqGrid::equispaced(10, 2.0);
    s.grid_s = FreqGrid::equispaced(10, 2.0);
    s.theta0 = theta0;
    s.eta0 = Eigen::Vector2d(0.05, 1.05);
    return s;
}

}  // namespace

TEST_CASE("algorithm names")
{
    for (auto a : {Algorithm::Iid, Algorithm::KnownNoise, Algorithm::ThreeStage})
        CHECK(algorithm_from_string(to_string(a)) == a);
    CHECK(algorithm_from_string("three_stage") == Algorithm::ThreeStage);
    CHECK_THROWS_AS(algorithm_from_string("alg4"), ConfigError);
}

TEST_CASE("state layout of the three-stage scheme")
{
    const StateLayout l = StateLayout::make(Algorithm::ThreeStage, 2, 2, 10);
    CHECK(l.size == 2 + 4 + 2 + 4 + 2 + 80);
    CHECK(l.theta_p == 0);
    CHECK(l.r_p == 2);
    CHECK(l.eta == 6);
    CHECK(l.r_e == 8);
    CHECK(l.theta_s == 12);
    CHECK(l.g == 14);
    const auto names = l.component_names({"mu", "sigma"});
    REQUIRE(static_cast<Index>(names.size()) == l.size);
    CHECK(names[0] == "theta_p[1]");
    CHECK(names[6] == "eta[mu]");
    CHECK(names[14] == "g[1,1].re");
    CHECK(names[15] == "g[1,1].im");

    const StateLayout k = StateLayout::make(Algorithm::KnownNoise, 1, 2, 4);
    CHECK(k.size == 1 + 8);
    CHECK(k.eta_size() == 0);
}

TEST_CASE("G block storage is interleaved complex")
{
    const StateLayout l = StateLayout::make(Algorithm::KnownNoise, 1, 2, 2);
    VectorXd x = VectorXd::Zero(l.size);
    g_block(x, l)(1, 0) = Complex(3.0, -4.0);
    CHECK(x(l.g + 2) == 3.0);
    CHECK(x(l.g + 3) == -4.0);
}

TEST_CASE("one step of the i.i.d. scheme")
{
    EstimatorSetup s;
    s.algorithm = Algorithm::Iid;
    s.noise = make_gaussian(0.0, 1.0);
    s.noise.free = {0};
    s.grid_e = FreqGrid(VectorXd::Constant(1, 1.0));
    s.weight_e = WeightKind::Identity;
    s.eta0 = VectorXd::Zero(1);
    s.r_e0 = MatrixXd::Identity(1, 1);
    EstimatorState st = initial_state(s);
    const CorrectionModel model(s);
    const double y = 0.8;
    const StepOutcome o = alg1_step(st, y, model);
    CHECK_FALSE(o.reset);
    CHECK(st.n == 1);
    CHECK(st.eta()(0) == doctest::Approx(std::exp(-0.5) * std::sin(y)).epsilon(1e-14));
    CHECK(st.eta()(0) == doctest::Approx(0.4350984630621634).epsilon(1e-14));
    CHECK(st.r_e()(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("resetting returns exactly to the initial point")
{
    EstimatorSetup s = iid_setup();
    EstimatorState st = initial_state(s);
    const VectorXd x0 = st.x;
    st.x(0) += 0.1;
    VectorXd big = VectorXd::Zero(st.x.size());
    big(1) = -1e6;  // sigma far below zero
    const StepOutcome o = dfl_step(st, big, [&s](const VectorXd& x) { return in_domain(s, x); });
    CHECK(o.reset);
    CHECK(st.reset_count == 1);
    CHECK(st.x == x0);
    CHECK(o.escaped.size() == x0.size());
    VectorXd nan = VectorXd::Zero(st.x.size());
    nan(0) = NAN;
    CHECK(dfl_step(st, nan, [&s](const VectorXd& x) { return in_domain(s, x); }).reset);
    CHECK(st.reset_count == 2);
}

TEST_CASE("initial point must be interior")
{
    EstimatorSetup s = iid_setup();
    s.domain.eta_lower = Eigen::Vector2d(0.26, 0.5);
    s.domain.eta_upper = Eigen::Vector2d(1.0, 2.0);
    CHECK_THROWS_AS(initial_state(s), ConfigError);
    EstimatorSetup sys = system_setup(Algorithm::KnownNoise, {1, 0}, VectorXd::Constant(1, 0.99));
    CHECK_THROWS_AS(initial_state(sys), ConfigError);
}

TEST_CASE("scheme mismatch is rejected")
{
    EstimatorSetup s = iid_setup();
    EstimatorState st = initial_state(s);
    const CorrectionModel model(s);
    CHECK_THROWS_AS(alg2_step(st, 0.1, model), ConfigError);
    CHECK_THROWS_AS(alg3_step(st, 0.1, model), ConfigError);
}

TEST_CASE("i.i.d. scheme converges on gaussian data")
{
    EstimatorSetup s = iid_setup();
    const Index n = 20000;
    const VectorXd y = sample(s.noise, n, 11).values;
    const Trajectory t = run(s, y);
    const EstimatorState f = run_final(s, y);
    CHECK(t.final_state.x == f.x);
    CHECK(static_cast<Index>(t.records.size()) == n);
    const MatrixXd sig = sigma_eta(s.noise, s.grid_e);
    CHECK(std::abs(f.eta()(0) - 0.3) < 4.0 * std::sqrt(sig(0, 0) / n));
    CHECK(std::abs(f.eta()(1) - 1.0) < 4.0 * std::sqrt(sig(1, 1) / n));
    CHECK(f.reset_count == 0);
}

TEST_CASE("i.i.d. scheme on variance gamma data")
{
    EstimatorSetup s;
    s.algorithm = Algorithm::Iid;
    s.noise = make_variance_gamma(0.8, 0.5, -0.3);
    s.grid_e = FreqGrid::equispaced(10, 2.0);
    s.eta0 = Eigen::Vector3d(0.75, 0.45, -0.25);
    const Index n = 20000;
    const EstimatorState f = run_final(s, sample(s.noise, n, 4).values);
    const VectorXd sd = sigma_eta(s.noise, s.grid_e).diagonal().cwiseSqrt() / std::sqrt(double(n));
    CHECK(((f.eta() - s.noise.eta).cwiseAbs().array() < 5.0 * sd.array()).all());
}

TEST_CASE("known-noise scheme converges for AR(1)")
{
    EstimatorSetup s = system_setup(Algorithm::KnownNoise, {1, 0}, VectorXd::Constant(1, -0.3));
    const ArmaParams truth(VectorXd::Constant(1, -0.5), VectorXd());
    s.rp_weight = r_p_estimate(truth, s.noise, 100000, 1);
    const Index n = 50000;
    const VectorXd y = simulate(truth, sample(s.noise, n, 8).values);
    const EstimatorState f = run_final(s, y);
    const double sd = std::sqrt(sigma_theta(s.noise, s.grid_s, s.rp_weight)(0, 0) / n);
    CHECK(std::abs(f.theta_s()(0) + 0.5) < 4.0 * sd);
}

TEST_CASE("three-stage scheme converges for ARMA(1,1)")
{
    EstimatorSetup s = system_setup(Algorithm::ThreeStage, {1, 1}, Eigen::Vector2d(-0.4, 0.2));
    const ArmaParams truth(VectorXd::Constant(1, -0.5), VectorXd::Constant(1, 0.3));
    const Index n = 20000;
    const VectorXd y = simulate(truth, sample(s.noise, n, 21).values);
    const EstimatorState f = run_final(s, y);
    CHECK((f.theta_p() - truth.theta()).cwiseAbs().maxCoeff() < 0.05);
    CHECK((f.theta_s() - truth.theta()).cwiseAbs().maxCoeff() < 0.05);
    CHECK(std::abs(f.eta()(0)) < 0.05);
    CHECK(std::abs(f.eta()(1) - 1.0) < 0.05);
}

TEST_CASE("G warm-up initialization averages the G target")
{
    EstimatorSetup s = system_setup(Algorithm::KnownNoise, {1, 0}, VectorXd::Constant(1, -0.5));
    s.g_init = GInit::Warmup;
    s.warmup_length = 500;
    const ArmaParams truth(VectorXd::Constant(1, -0.5), VectorXd());
    const VectorXd y = simulate(truth, sample(s.noise, 500, 2).values);
    const EstimatorState st = initial_state(s, y);
    CHECK(st.g().cwiseAbs().maxCoeff() > 0.0);
    CHECK(st.x == st.x0);
}
