#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "levyecf/experiment.hpp"

using namespace levyecf;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::string fmt(const VectorXd& v, int digits = 4)
{
    std::string s = "(";
    for (Index k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v(k), digits);
    return s + ")";
}

Json gaussian_iid_config()
{
    return Json{{"family", "gaussian"}, {"eta", {0.3, 1.0}}, {"algorithm", "alg1"}, {"weight", "c"},
                {"grid_points", 10}, {"grid_u_max", 2.0}, {"eta0", {0.25, 1.05}},
                {"eta_lower", {-2.0, 0.25}}, {"eta_upper", {2.6, 4.0}}};
}

Json arma11_three_stage_config()
{
    return Json{{"family", "gaussian"}, {"eta", {0.0, 1.0}}, {"ar", {-0.5}}, {"ma", {0.3}},
                {"algorithm", "alg3"}, {"weight", "c"}, {"grid_points", 4}, {"grid_u_max", 2.0},
                {"grid_s_points", 4}, {"grid_s_u_max", 2.0}, {"eta0", {0.05, 1.05}}, {"theta0", {-0.4, 0.2}},
                {"eta_lower", {-2.0, 0.25}}, {"eta_upper", {2.0, 4.0}}};
}

MonteCarloStudy study(Json j, Index n, Index replications, std::uint64_t seed)
{
    j["n"] = n;
    j["replications"] = replications;
    j["seed"] = seed;
    return monte_carlo_study(ExperimentConfig::from_json(j), n);
}

VectorXd iid_truth_point(const EstimatorSetup& s)
{
    const StateLayout l = s.layout();
    VectorXd x = VectorXd::Zero(l.size);
    x.segment(l.eta, l.eta_size()) = s.noise.free_values();
    const MatrixXcd phi = cf_jacobian(s.noise, s.grid_e.u());
    r_e_block(x, l) = weighted_gram(phi, make_weight(s.weight_e, s.noise, s.grid_e).inverse);
    return x;
}

Outcome criterion_1(MonteCarloStudy& alg1_20k)
{
    const ExperimentConfig cfg = ExperimentConfig::from_json(gaussian_iid_config());
    const MatrixXd sigma = sigma_eta(cfg.truth, cfg.grid_e());
    alg1_20k = study(gaussian_iid_config(), 20000, 100, 10000);
    const VectorXd ratio = alg1_20k.n_cov.diagonal().cwiseQuotient(sigma.diagonal());
    const bool pass = alg1_20k.failures == 0 && ((ratio.array() - 1.0).abs() <= 0.35).all();
    return {pass, "N*var/sigma_eta = " + fmt(ratio) + ", sigma_eta diag = " + fmt(VectorXd(sigma.diagonal()))
                      + ", failures " + std::to_string(alg1_20k.failures)};
}

Outcome criterion_2(const MonteCarloStudy& alg1_20k)
{
    const MonteCarloStudy a5k = study(gaussian_iid_config(), 5000, 100, 10000);
    const VectorXd r1 = a5k.rmse.cwiseQuotient(alg1_20k.rmse);
    const MonteCarloStudy b10k = study(arma11_three_stage_config(), 10000, 100, 20000);
    const MonteCarloStudy b40k = study(arma11_three_stage_config(), 40000, 100, 20000);
    const VectorXd r3 = b10k.rmse.cwiseQuotient(b40k.rmse);
    auto in_band = [](const VectorXd& r) { return (r.array() >= 1.6).all() && (r.array() <= 2.5).all(); };
    const long failures = a5k.failures + alg1_20k.failures + b10k.failures + b40k.failures;
    const bool pass = failures == 0 && in_band(r1) && in_band(r3);
    return {pass, "alg1 rmse(N)/rmse(4N) = " + fmt(r1) + "; alg3 ARMA(1,1) = " + fmt(r3) + ", failures "
                      + std::to_string(failures)};
}

Outcome criterion_3()
{
    const Json j{{"family", "gaussian"}, {"eta", {0.0, 1.0}}, {"ar", {-0.5}}, {"algorithm", "alg2"},
                 {"weight", "c"}, {"rp_weight", "estimate"}, {"grid_s_points", 4}, {"grid_s_u_max", 2.0},
                 {"theta0", {-0.4}}};
    const ExperimentConfig cfg = ExperimentConfig::from_json(j);
    const double sigma = sigma_theta(cfg.truth, cfg.grid_s(), config_r_p(cfg))(0, 0);
    const MonteCarloStudy s = study(j, 50000, 100, 30000);
    const double ratio = s.n_cov(0, 0) / sigma;
    return {s.failures == 0 && std::abs(ratio - 1.0) <= 0.35,
            "N*var = " + fmt(s.n_cov(0, 0)) + ", sigma_theta = " + fmt(sigma) + ", ratio " + fmt(ratio)};
}

Outcome criterion_4()
{
    const ExperimentConfig iid = ExperimentConfig::from_json(gaussian_iid_config());
    const EstimatorSetup s = iid.estimator_setup();
    const JacobianResult j = jacobian_at(make_iid_ode(iid.truth, s), iid_truth_point(s));
    double spec_err = 0.0;
    for (Index k = 0; k < j.eigenvalues.size(); ++k)
        spec_err = std::max(spec_err, std::abs(j.eigenvalues(k) - Complex(-1.0, 0.0)));

    Json t{{"family", "gaussian"}, {"eta", {0.0, 1.0}}, {"ar", {-0.5}}, {"ma", {0.3}}, {"algorithm", "alg3"},
           {"weight", "c"}, {"grid_points", 3}, {"grid_u_max", 2.0}, {"grid_s_points", 3}, {"grid_s_u_max", 2.0},
           {"eta0", {0.05, 1.05}}, {"theta0", {-0.4, 0.2}}, {"ode_path_length", 200000}, {"ode_t_end", 0.0},
           {"ode_seed", 12345}};
    const OdeCheck oc = run_ode_check(ExperimentConfig::from_json(t));
    double diag = 0.0;
    for (double e : oc.blocks.diag_error) diag = std::max(diag, e);
    const bool pass = spec_err < 1e-4 && diag < 0.05 && oc.blocks.max_upper < 0.05;
    return {pass, "i.i.d. max |lambda+1| = " + fmt(spec_err) + "; three-stage max |J_kk+I| = " + fmt(diag)
                      + ", max upper = " + fmt(oc.blocks.max_upper)};
}

Outcome criterion_5()
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    MatrixXd b(4, 4);
    for (Index r = 0; r < 4; ++r)
        for (Index c = 0; c < 4; ++c) b(r, c) = nd(rng);
    const MatrixXd p = b * b.transpose() + MatrixXd::Identity(4, 4);
    const double id_err = (lyapunov_solve(-MatrixXd::Identity(4, 4), p).sigma_xx - p).cwiseAbs().maxCoeff();

    const ExperimentConfig iid = ExperimentConfig::from_json(gaussian_iid_config());
    const EstimatorSetup s = iid.estimator_setup();
    const VectorXd x = iid_truth_point(s);
    const JacobianResult j = jacobian_at(make_iid_ode(iid.truth, s), x);
    const MatrixXd p_star = p_star_iid(x, iid.truth, s, 200000, 55);
    const LyapunovResult lr = lyapunov_solve(j.jacobian, p_star);
    const MatrixXd sigma = sigma_eta(iid.truth, iid.grid_e());
    const VectorXd ratio = lr.sigma_xx.topLeftCorner(2, 2).diagonal().cwiseQuotient(sigma.diagonal());
    const bool pass = id_err < 1e-12 && ((ratio.array() - 1.0).abs() <= 0.10).all();
    return {pass, "A=-I max |Sigma-P| = " + fmt(id_err) + "; eta block / sigma_eta = " + fmt(ratio)
                      + ", residual " + fmt(lr.residual)};
}

VectorXd random_stable_poly(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const double r1 = 0.9 * ud(rng);
    if (ud(rng) < 0.5) {
        const double w = M_PI * ud(rng);
        return Eigen::Vector2d(-2.0 * r1 * std::cos(w), r1 * r1);
    }
    const double a = (2.0 * ud(rng) - 1.0) * r1, c = (2.0 * ud(rng) - 1.0) * 0.9;
    return Eigen::Vector2d(-(a + c), a * c);
}

Outcome criterion_6()
{
    std::mt19937_64 rng(66);
    const ArmaOrder order{2, 2};
    double inv_err = 0.0, sens_err = 0.0;
    for (int model = 0; model < 50; ++model) {
        const ArmaParams p(random_stable_poly(rng), random_stable_poly(rng));
        const VectorXd noise = sample(make_gaussian(0.0, 1.0), 2000, 600 + model).values;
        const VectorXd y = simulate(p, noise);
        const VectorXd eps = innovations(order, p.theta(), y);
        const Index t0 = default_transient(order);
        inv_err = std::max(inv_err, (eps - noise).tail(y.size() - t0).cwiseAbs().maxCoeff());

        const VectorXd ys = y.head(300);
        FilterState st(order);
        MatrixXd sens(ys.size(), 4);
        for (Index t = 0; t < ys.size(); ++t)
            sens.row(t) = innovation_step(order, p.theta(), st, ys(t)).eps_theta.transpose();
        for (Index k = 0; k < 4; ++k) {
            const double h = 1e-6;
            VectorXd up = p.theta(), dn = p.theta();
            up(k) += h;
            dn(k) -= h;
            const VectorXd fd = (innovations(order, up, ys) - innovations(order, dn, ys)) / (2.0 * h);
            sens_err = std::max(sens_err, (fd - sens.col(k)).cwiseAbs().maxCoeff()
                                              / std::max(1.0, fd.cwiseAbs().maxCoeff()));
        }
    }
    return {inv_err < 1e-10 && sens_err < 1e-6,
            "50 models: max inversion error " + fmt(inv_err) + ", max relative eps_theta error " + fmt(sens_err)};
}

Outcome criterion_7()
{
    const std::vector<NoiseModel> models{make_gaussian(0.3, 1.0), make_variance_gamma(0.8, 0.5, -0.3),
                                         make_nig(2.0, 0.5, 1.2, 0.1)};
    const FreqGrid g = FreqGrid::equispaced(5, 2.5);
    const Index n = 1000000;
    bool pass = true;
    std::string detail;
    for (std::size_t f = 0; f < models.size(); ++f) {
        const VectorXd y = sample(models[f], n, 70 + f).values;
        MatrixXcd z(n, g.size());
        for (Index t = 0; t < n; ++t)
            for (Index k = 0; k < g.size(); ++k) z(t, k) = std::polar(1.0, g[k] * y(t));
        const MatrixXcd centered = z.rowwise() - z.colwise().mean();
        const MatrixXcd sample_c = (centered.transpose() * centered.conjugate()) / static_cast<double>(n);
        const double err = (sample_c - c_matrix_raw(models[f], g)).cwiseAbs().maxCoeff();
        pass = pass && err < 5e-3;
        detail += (f ? ", " : "") + to_string(models[f].family) + " " + fmt(err);
    }
    return {pass, "max |C - sample cov|: " + detail};
}

Outcome criterion_8()
{
    Json j = gaussian_iid_config();
    j["eta0"] = {0.1, 1.0};
    j["eta_lower"] = {-1.0, 0.5};
    j["eta_upper"] = {0.2, 2.0};
    const ExperimentConfig cfg = ExperimentConfig::from_json(j);
    const EstimatorSetup setup = cfg.estimator_setup();
    const VectorXd data = cfg.simulate_data(5000, 81);
    const CorrectionModel model(setup);
    EstimatorState st = initial_state(setup, data);
    long escapes = 0, mismatches = 0;
    for (Index t = 0; t < data.size(); ++t) {
        FilterState fp = st.filter_p, fs = st.filter_s;
        const VectorXd q = model.correction(model.prepare(st.x), fp, fs, data(t));
        const double gain = 1.0 / static_cast<double>(st.n + 1);
        const VectorXd candidate = st.x + gain * q;
        const bool escape = !in_domain(setup, candidate);
        const StepOutcome o = alg1_step(st, data(t), model);
        if (escape) ++escapes;
        if (o.reset != escape) ++mismatches;
        if (escape && !(st.x == st.x0 && o.escaped == candidate)) ++mismatches;
        if (!escape && st.x != candidate) ++mismatches;
    }
    const bool part_a = escapes > 0 && mismatches == 0 && st.reset_count == escapes;

    Json g = gaussian_iid_config();
    g.erase("eta_lower");
    g.erase("eta_upper");
    g["eta0"] = {0.31, 1.01};
    const MonteCarloStudy s = study(g, 10000, 100, 80000);
    long clean = 0, near = 0;
    for (const RunResult& r : s.runs) {
        if (r.ok && r.reset_count == 0) ++clean;
        if (r.ok && (r.estimate.values - Eigen::Vector2d(0.3, 1.0)).cwiseAbs().maxCoeff() < 0.1) ++near;
    }
    const bool part_b = clean >= 95;
    return {part_a && part_b, "restricted domain: " + std::to_string(escapes) + " escapes, reset_count "
                                  + std::to_string(st.reset_count) + ", mismatches " + std::to_string(mismatches)
                                  + "; generous domain: " + std::to_string(clean) + "/100 runs without reset, "
                                  + std::to_string(near) + "/100 within 0.1 of the truth"};
}

Outcome criterion_9()
{
    const ExperimentConfig cfg = ExperimentConfig::from_json(gaussian_iid_config());
    const FreqGrid g = cfg.grid_e();
    const Index n = 20000;
    const VectorXd var = sigma_eta(cfg.truth, g).diagonal().cwiseMax(
        eta_sandwich_covariance(cfg.truth, g, c_matrix(cfg.truth, g).inverse()).diagonal());
    const VectorXd se = (var / static_cast<double>(n)).cwiseSqrt();
    double worst = 0.0;
    int agree = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const VectorXd y = cfg.simulate_data(n, 90000 + seed);
        const EstimatorState st = run_final(cfg.estimator_setup(), y);
        const OfflineFit off = offline_ecf_iid(y, cfg.truth, g);
        const double r = ((st.eta() - off.estimate).cwiseAbs().cwiseQuotient(se)).maxCoeff();
        worst = std::max(worst, r);
        if (off.converged && r < 3.0) ++agree;
    }
    return {agree == 20, std::to_string(agree) + "/20 seeds agree, max |alg1 - offline| / se = " + fmt(worst)};
}

}  // namespace

int main(int argc, char** argv)
{
    std::vector<int> selected;
    for (int a = 1; a < argc; ++a) selected.push_back(std::atoi(argv[a]));
    MonteCarloStudy alg1_20k;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 alg1 covariance", [&] { return criterion_1(alg1_20k); }},
        {"2 convergence rate", [&] { return criterion_2(alg1_20k); }},
        {"3 alg2 covariance", criterion_3},
        {"4 jacobian structure", criterion_4},
        {"5 lyapunov loop closure", criterion_5},
        {"6 filter oracle", criterion_6},
        {"7 C matrix oracle", criterion_7},
        {"8 resetting", criterion_8},
        {"9 recursive vs offline", criterion_9},
    };
    int failed = 0, ran = 0;
    for (const auto& [name, fn] : criteria) {
        const int number = std::atoi(name.c_str());
        if (!selected.empty() && std::find(selected.begin(), selected.end(), number) == selected.end()) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failed;
        std::printf("%s criterion %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", ran - failed, ran);
    return failed == 0 ? 0 : 1;
}
