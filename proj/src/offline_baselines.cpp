#include "levyecf/offline_baselines.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace levyecf {

namespace {

struct Moments {
    double mean = 0.0, var = 0.0, excess_kurtosis = 0.0;
};

Moments sample_moments(const Eigen::Ref<const VectorXd>& y)
{
    Moments m;
    const double n = static_cast<double>(y.size());
    m.mean = y.mean();
    const VectorXd c = y.array() - m.mean;
    m.var = c.squaredNorm() / n;
    if (m.var > 0.0) m.excess_kurtosis = c.array().pow(4).sum() / n / (m.var * m.var) - 3.0;
    return m;
}

}  // namespace

VectorXd moment_initializer(const Eigen::Ref<const VectorXd>& data, const NoiseModel& model)
{
    if (data.size() < 2) throw ConfigError("moment initializer needs at least two observations");
    const Moments m = sample_moments(data);
    const double h = model.h;
    const double var = std::max(m.var, 1e-12);
    const double kurt = std::max(m.excess_kurtosis, 0.1);
    NoiseModel init = model;
    switch (model.family) {
    case NoiseFamily::Gaussian:
        init.eta << m.mean / h, std::sqrt(var / h);
        break;
    case NoiseFamily::VarianceGamma: {
        const double theta = m.mean / h;
        const double nu = kurt * h / 3.0;
        const double s2 = std::max(var / h - theta * theta * nu, 0.1 * var / h);
        init.eta << std::sqrt(s2), nu, theta;
        break;
    }
    case NoiseFamily::NormalInverseGaussian: {
        const double delta = std::sqrt(3.0 * var / kurt) / h;
        const double alpha = std::sqrt(3.0 / (kurt * var));
        init.eta << alpha, 0.0, delta, m.mean / h;
        break;
    }
    }
    // Fixed components keep the values supplied in `model`.
    VectorXd full = model.eta;
    for (Index k : init.free_indices()) full(k) = init.eta(k);
    init.eta = full;
    if (!in_family_domain(init.family, init.eta)) init.eta = model.eta;
    return init.free_values();
}

VectorXcd empirical_cf(const Eigen::Ref<const VectorXd>& data, const FreqGrid& grid)
{
    VectorXcd e = VectorXcd::Zero(grid.size());
    for (Index j = 0; j < grid.size(); ++j) {
        Complex acc = 0.0;
        for (Index n = 0; n < data.size(); ++n) acc += std::polar(1.0, grid[j] * data(n));
        e(j) = acc / static_cast<double>(data.size());
    }
    return e;
}

double ecf_objective(const VectorXcd& ecf, const NoiseModel& model, const FreqGrid& grid,
                     const MatrixXcd& weight_inverse)
{
    const VectorXcd r = ecf - cf(model, grid.u());
    return (r.adjoint() * weight_inverse * r)(0, 0).real();
}

namespace {

OfflineFit ecf_gauss_newton(const VectorXcd& ecf, const NoiseModel& model, const FreqGrid& grid,
                            const MatrixXcd& w_inv, VectorXd eta, const OfflineOptions& opts)
{
    OfflineFit fit;
    NoiseModel current = model.with_free_values(eta);
    fit.objective = ecf_objective(ecf, current, grid, w_inv);
    fit.history.push_back(fit.objective);
    for (fit.iterations = 0; fit.iterations < opts.max_iterations; ++fit.iterations) {
        const VectorXcd r = ecf - cf(current, grid.u());
        const MatrixXcd phi = cf_jacobian(current, grid.u());
        const MatrixXcd w_phi = w_inv * phi;
        const MatrixXd normal = (phi.adjoint() * w_phi).real();
        const VectorXd grad = (w_phi.adjoint() * r).real();
        const VectorXd step = normal.ldlt().solve(grad);
        if (!step.allFinite()) {
            fit.message = "singular normal equations";
            break;
        }
        double scale = 1.0;
        bool accepted = false;
        for (int k = 0; k <= opts.max_halvings; ++k, scale *= 0.5) {
            const VectorXd cand = eta + scale * step;
            NoiseModel trial = model.with_free_values(cand);
            if (!in_family_domain(trial.family, trial.eta)) continue;
            const double obj = ecf_objective(ecf, trial, grid, w_inv);
            if (obj <= fit.objective) {
                eta = cand;
                current = trial;
                fit.objective = obj;
                accepted = true;
                break;
            }
        }
        const double step_norm = scale * step.norm();
        if (accepted) fit.history.push_back(fit.objective);
        if (!accepted || step_norm < opts.step_tol * std::max(1.0, eta.norm())) {
            fit.converged = true;
            ++fit.iterations;
            break;
        }
    }
    if (!fit.converged && fit.message.empty()) fit.message = "iteration limit reached";
    fit.estimate = eta;
    return fit;
}

}  // namespace

OfflineFit offline_ecf_iid(const Eigen::Ref<const VectorXd>& data, const NoiseModel& model,
                           const FreqGrid& grid, WeightKind weight, const MatrixXcd* custom_weight,
                           const OfflineOptions& opts)
{
    require_identifiable(grid, model);
    if (data.size() < 10 * model.free_count())
        throw ConfigError("offline ECF needs at least 10 observations per free parameter");
    const VectorXcd ecf = empirical_cf(data, grid);
    const VectorXd init = moment_initializer(data, model);

    const WeightMatrix k0 = make_weight(weight, model.with_free_values(init), grid, custom_weight);
    OfflineFit fit = ecf_gauss_newton(ecf, model, grid, k0.inverse, init, opts);
    if (weight == WeightKind::CAtEta && fit.converged) {
        const WeightMatrix k1 = make_weight(weight, model.with_free_values(fit.estimate), grid);
        OfflineFit second = ecf_gauss_newton(ecf, model, grid, k1.inverse, fit.estimate, opts);
        second.iterations += fit.iterations;
        fit = std::move(second);
    }
    return fit;
}

OfflineFit offline_pe(const Eigen::Ref<const VectorXd>& data, const ArmaOrder& order,
                      const VectorXd& theta_init, double margin_delta, const OfflineOptions& opts)
{
    const Index d = order.dim();
    if (data.size() < 10 * std::max<Index>(d, 1))
        throw ConfigError("offline PE needs at least 10 observations per parameter");
    VectorXd theta = theta_init.size() == 0 ? VectorXd::Zero(d) : theta_init;
    if (theta.size() != d) throw ConfigError("theta_init has wrong length for the ARMA order");
    if (!theta.allFinite()) throw ConfigError("theta_init is not finite");
    theta = project_to_margin(order, theta, margin_delta);

    auto evaluate = [&](const VectorXd& t, VectorXd* grad, MatrixXd* normal) {
        FilterState state(order);
        double sse = 0.0;
        if (grad) grad->setZero(d);
        if (normal) normal->setZero(d, d);
        for (Index n = 0; n < data.size(); ++n) {
            const Innovation inn = innovation_step(order, t, state, data(n));
            sse += inn.eps * inn.eps;
            if (grad) *grad += inn.eps * inn.eps_theta;
            if (normal) normal->noalias() += inn.eps_theta * inn.eps_theta.transpose();
        }
        return sse / static_cast<double>(data.size());
    };

    OfflineFit fit;
    VectorXd grad;
    MatrixXd normal;
    fit.objective = evaluate(theta, &grad, &normal);
    fit.history.push_back(fit.objective);
    for (fit.iterations = 0; fit.iterations < opts.max_iterations; ++fit.iterations) {
        const VectorXd gn = -normal.ldlt().solve(grad);
        if (!gn.allFinite()) {
            fit.message = "singular normal equations";
            break;
        }
        const double gnorm = grad.norm();
        std::vector<VectorXd> directions{gn};
        if (gnorm > 0.0) directions.push_back(-grad * (std::max(gn.norm(), 1e-3) / gnorm));
        bool accepted = false;
        VectorXd moved = VectorXd::Zero(d);
        for (const VectorXd& step : directions) {
            double scale = 1.0;
            for (int k = 0; k <= opts.max_halvings && !accepted; ++k, scale *= 0.5) {
                const VectorXd cand = project_to_margin(order, theta + scale * step, margin_delta);
                if (cand == theta) continue;
                const double obj = evaluate(cand, nullptr, nullptr);
                if (std::isfinite(obj) && obj <= fit.objective) {
                    moved = cand - theta;
                    theta = cand;
                    fit.objective = obj;
                    accepted = true;
                }
            }
            if (accepted) break;
        }
        if (accepted) fit.history.push_back(fit.objective);
        if (!accepted || moved.norm() < opts.step_tol * std::max(1.0, theta.norm())) {
            fit.converged = true;
            ++fit.iterations;
            break;
        }
        evaluate(theta, &grad, &normal);
    }
    if (!fit.converged && fit.message.empty()) fit.message = "iteration limit reached";
    fit.estimate = theta;
    return fit;
}

}  // namespace levyecf
