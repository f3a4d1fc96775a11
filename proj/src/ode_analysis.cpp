#include "levyecf/ode_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace levyecf {

VectorXd ode_rhs_iid(const VectorXd& x, const NoiseModel& truth, const EstimatorSetup& setup)
{
    if (setup.algorithm != Algorithm::Iid) throw ConfigError("ode_rhs_iid needs the Iid scheme");
    const StateLayout l = setup.layout();
    if (x.size() != l.size) throw ConfigError("state has wrong dimension for the i.i.d. ODE");
    const NoiseModel model = setup.noise.with_free_values(x.segment(l.eta, l.eta_size()));
    const MatrixXcd phi_eta = cf_jacobian(model, setup.grid_e.u());
    const WeightMatrix k = make_weight(setup.weight_e, model, setup.grid_e,
                                       setup.custom_weight_e ? &*setup.custom_weight_e : nullptr);
    const VectorXcd g = cf(truth, setup.grid_e.u()) - cf(model, setup.grid_e.u());
    const MatrixXcd k_inv_phi = k.inverse * phi_eta;
    const MatrixXd r = r_e_block(x, l);

    VectorXd f(l.size);
    f.segment(l.eta, l.eta_size()) = r.ldlt().solve((k_inv_phi.adjoint() * g).real());
    Eigen::Map<MatrixXd>(f.data() + l.r_e, l.eta_size(), l.eta_size()) = weighted_gram(phi_eta, k.inverse) - r;
    return f;
}

AssociatedOde make_iid_ode(const NoiseModel& truth, const EstimatorSetup& setup)
{
    AssociatedOde ode;
    ode.dimension = setup.layout().size;
    ode.rhs = [truth, setup](const VectorXd& x) { return ode_rhs_iid(x, truth, setup); };
    ode.inside = [setup](const VectorXd& x) { return in_domain(setup, x); };
    ode.name = "iid";
    return ode;
}

SystemOde::SystemOde(EstimatorSetup setup, NoiseModel truth, VectorXd theta_true, FrozenPathOptions opts)
    : setup_(std::move(setup)), truth_(std::move(truth)), theta_true_(std::move(theta_true)), opts_(opts)
{
    if (setup_.algorithm == Algorithm::Iid) throw ConfigError("SystemOde needs a system scheme");
    setup_.check();
    if (opts_.path_length < 2 * opts_.batches || opts_.batches < 2)
        throw ConfigError("frozen path too short for batch means");
    const ArmaParams params = ArmaParams::from_theta(setup_.order, theta_true_, setup_.domain.margin_delta);
    data_ = simulate(params, sample(truth_, opts_.transient + opts_.path_length, opts_.seed).values);
}

MatrixXd SystemOde::correction_sequence(const VectorXd& x) const
{
    const CorrectionModel model(setup_);
    const auto at = model.prepare(x);
    FilterState fp(setup_.order), fs(setup_.order);
    MatrixXd rows(opts_.path_length, model.layout().size);
    for (Index t = 0; t < data_.size(); ++t) {
        VectorXd q = model.correction(at, fp, fs, data_(t));
        if (t >= opts_.transient) rows.row(t - opts_.transient) = q.transpose();
    }
    return rows;
}

RhsEstimate SystemOde::rhs(const VectorXd& x) const
{
    const CorrectionModel model(setup_);
    const auto at = model.prepare(x);
    FilterState fp(setup_.order), fs(setup_.order);
    const Index d = model.layout().size;
    const Index per_batch = opts_.path_length / opts_.batches;
    MatrixXd batch_sums = MatrixXd::Zero(d, opts_.batches);
    VectorXd total = VectorXd::Zero(d);
    for (Index t = 0; t < data_.size(); ++t) {
        const VectorXd q = model.correction(at, fp, fs, data_(t));
        if (t < opts_.transient) continue;
        total += q;
        const Index b = (t - opts_.transient) / per_batch;
        if (b < opts_.batches) batch_sums.col(b) += q;
    }
    RhsEstimate out;
    out.value = total / static_cast<double>(opts_.path_length);
    const MatrixXd means = batch_sums / static_cast<double>(per_batch);
    const VectorXd centre = means.rowwise().mean();
    const VectorXd var = (means.colwise() - centre).array().square().rowwise().sum()
        / static_cast<double>(opts_.batches - 1);
    out.std_error = (var / static_cast<double>(opts_.batches)).cwiseSqrt();
    return out;
}

VectorXd SystemOde::true_point() const
{
    const StateLayout l = setup_.layout();
    VectorXd x = VectorXd::Zero(l.size);
    const Index p = setup_.order.dim();
    const CorrectionModel model(setup_);

    FilterState f(setup_.order);
    MatrixXd rp = MatrixXd::Zero(p, p);
    MatrixXcd g = MatrixXcd::Zero(l.g_rows(), l.theta_s_size());
    for (Index t = 0; t < data_.size(); ++t) {
        const Innovation inn = innovation_step(setup_.order, theta_true_, f, data_(t));
        if (t < opts_.transient) continue;
        rp.noalias() += inn.eps_theta * inn.eps_theta.transpose();
        if (l.theta_s_size() > 0) g += model.g_target(inn.eps, inn.eps_theta);
    }
    rp /= static_cast<double>(opts_.path_length);
    g /= static_cast<double>(opts_.path_length);

    if (l.theta_p_size() > 0) {
        x.segment(l.theta_p, p) = theta_true_;
        r_p_block(x, l) = 0.5 * (rp + rp.transpose());
    }
    if (l.eta_size() > 0) {
        const NoiseModel eta_model = setup_.noise.with_free_values(truth_.free_values());
        x.segment(l.eta, l.eta_size()) = eta_model.free_values();
        const MatrixXcd phi = cf_jacobian(eta_model, setup_.grid_e.u());
        const WeightMatrix k = make_weight(setup_.weight_e, eta_model, setup_.grid_e,
                                           setup_.custom_weight_e ? &*setup_.custom_weight_e : nullptr);
        r_e_block(x, l) = weighted_gram(phi, k.inverse);
    }
    if (l.theta_s_size() > 0) {
        x.segment(l.theta_s, p) = theta_true_;
        g_block(x, l) = g;
    }
    return x;
}

AssociatedOde SystemOde::ode() const
{
    AssociatedOde ode;
    ode.dimension = setup_.layout().size;
    ode.rhs = [this](const VectorXd& x) { return rhs(x).value; };
    ode.inside = [this](const VectorXd& x) { return in_domain(setup_, x); };
    ode.name = to_string(setup_.algorithm);
    return ode;
}

RhsEstimate ode_rhs_system(const VectorXd& x, const EstimatorSetup& setup, const NoiseModel& truth,
                           const VectorXd& theta_true, const FrozenPathOptions& opts)
{
    return SystemOde(setup, truth, theta_true, opts).rhs(x);
}

OdePath integrate(const AssociatedOde& ode, const VectorXd& x_init, double t_begin, double t_end,
                  double dt)
{
    if (!(dt > 0.0) || !(t_end >= t_begin)) throw ConfigError("integrate needs dt > 0 and t_end >= t_begin");
    OdePath path;
    auto inside = [&ode](const VectorXd& x) { return x.allFinite() && (!ode.inside || ode.inside(x)); };
    if (!inside(x_init)) {
        path.escaped = true;
        path.escape_point = x_init;
        return path;
    }
    const auto steps = static_cast<long>(std::llround((t_end - t_begin) / dt));
    VectorXd x = x_init;
    path.times.push_back(t_begin);
    path.states.push_back(x);
    for (long s = 0; s < steps; ++s) {
        const VectorXd k1 = ode.rhs(x);
        const VectorXd k2 = ode.rhs(x + 0.5 * dt * k1);
        const VectorXd k3 = ode.rhs(x + 0.5 * dt * k2);
        const VectorXd k4 = ode.rhs(x + dt * k3);
        VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!inside(next)) {
            path.escaped = true;
            path.escape_point = std::move(next);
            break;
        }
        x = std::move(next);
        path.times.push_back(t_begin + static_cast<double>(s + 1) * dt);
        path.states.push_back(x);
    }
    return path;
}

JacobianResult jacobian_at(const AssociatedOde& ode, const VectorXd& x, double rel_step)
{
    const Index d = x.size();
    JacobianResult res;
    res.jacobian.resize(d, d);
    for (Index j = 0; j < d; ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x(j)));
        VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        res.jacobian.col(j) = (ode.rhs(xp) - ode.rhs(xm)) / (2.0 * h);
    }
    Eigen::EigenSolver<MatrixXd> es(res.jacobian, false);
    VectorXcd ev = es.eigenvalues();
    std::sort(ev.data(), ev.data() + ev.size(), [](const Complex& a, const Complex& b) {
        return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
    });
    res.eigenvalues = ev;
    return res;
}

BlockStructure block_structure(const MatrixXd& jacobian, const std::vector<Index>& block_sizes)
{
    BlockStructure bs;
    Index row = 0;
    for (Index size : block_sizes) {
        const MatrixXd diag = jacobian.block(row, row, size, size) + MatrixXd::Identity(size, size);
        bs.diag_error.push_back(diag.cwiseAbs().maxCoeff());
        const Index right = jacobian.cols() - row - size;
        if (right > 0)
            bs.max_upper = std::max(bs.max_upper, jacobian.block(row, row + size, size, right).cwiseAbs().maxCoeff());
        row += size;
    }
    return bs;
}

std::vector<Index> layout_blocks(const StateLayout& l)
{
    std::vector<Index> sizes;
    for (Index s : {l.theta_p_size(), l.r_p_size(), l.eta_size(), l.r_e_size(), l.theta_s_size(), l.g_size()})
        if (s > 0) sizes.push_back(s);
    return sizes;
}

Index default_hac_lag(Index length)
{
    return 2 * static_cast<Index>(std::ceil(std::cbrt(static_cast<double>(length))));
}

MatrixXd hac_covariance(const MatrixXd& samples, Index lag)
{
    const Index t = samples.rows();
    const Index d = samples.cols();
    if (t == 0) return MatrixXd::Zero(d, d);
    lag = std::clamp<Index>(lag, 0, t - 1);
    MatrixXd s = samples.transpose() * samples;
    for (Index l = 1; l <= lag; ++l) {
        const double w = 1.0 - static_cast<double>(l) / static_cast<double>(lag + 1);
        const MatrixXd gamma = samples.bottomRows(t - l).transpose() * samples.topRows(t - l);
        s += w * (gamma + gamma.transpose());
    }
    s /= static_cast<double>(t);
    s = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    const VectorXd lambda = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd p_star_iid(const VectorXd& x_star, const NoiseModel& truth, const EstimatorSetup& setup,
                    Index length, std::uint64_t seed, Index lag)
{
    if (setup.algorithm != Algorithm::Iid) throw ConfigError("p_star_iid needs the Iid scheme");
    const CorrectionModel model(setup);
    const auto at = model.prepare(x_star);
    const VectorXd y = sample(truth, length, seed).values;
    FilterState fp(setup.order), fs(setup.order);
    MatrixXd rows(length, model.layout().size);
    for (Index t = 0; t < length; ++t) rows.row(t) = model.correction(at, fp, fs, y(t)).transpose();
    return hac_covariance(rows, lag < 0 ? default_hac_lag(length) : lag);
}

MatrixXd p_star_system(const SystemOde& ode, const VectorXd& x_star, Index lag)
{
    const MatrixXd rows = ode.correction_sequence(x_star);
    return hac_covariance(rows, lag < 0 ? default_hac_lag(rows.rows()) : lag);
}

LyapunovResult lyapunov_solve(const MatrixXd& a_star, const MatrixXd& p_star)
{
    const Index n = a_star.rows();
    if (a_star.cols() != n || p_star.rows() != n || p_star.cols() != n)
        throw ConfigError("lyapunov_solve: dimension mismatch");
    const MatrixXd m = a_star + 0.5 * MatrixXd::Identity(n, n);

    Eigen::ComplexSchur<MatrixXd> schur(m);
    if (schur.info() != Eigen::Success) throw NumericalError("Schur decomposition failed");
    const MatrixXcd& t = schur.matrixT();
    const MatrixXcd& u = schur.matrixU();
    for (Index k = 0; k < n; ++k) {
        if (t(k, k).real() >= 0.0) {
            std::ostringstream os;
            os << "A* + I/2 has eigenvalue " << t(k, k).real() << (t(k, k).imag() >= 0 ? "+" : "")
               << t(k, k).imag() << "i with non-negative real part; A* has eigenvalue "
               << t(k, k).real() - 0.5 << " (rate condition alpha > 1/2 fails)";
            throw RateConditionError(os.str(), t(k, k) - 0.5);
        }
    }

    // T Y + Y T^* = -U^* P U, solved column by column from the right.
    const MatrixXcd c = -(u.adjoint() * p_star.cast<Complex>() * u);
    MatrixXcd y = MatrixXcd::Zero(n, n);
    for (Index j = n - 1; j >= 0; --j) {
        VectorXcd rhs = c.col(j);
        for (Index k = j + 1; k < n; ++k) rhs -= y.col(k) * std::conj(t(j, k));
        MatrixXcd lhs = t;
        lhs.diagonal().array() += std::conj(t(j, j));
        y.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
    }
    MatrixXd sigma = (u * y * u.adjoint()).real();
    sigma = 0.5 * (sigma + sigma.transpose());

    LyapunovResult res;
    res.a_star = a_star;
    res.p_star = p_star;
    res.residual = (m * sigma + sigma * m.transpose() + p_star).cwiseAbs().maxCoeff();
    res.sigma_xx = std::move(sigma);
    return res;
}

}  // namespace levyecf
