#include "levyecf/recursive_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace levyecf {

std::string to_string(Algorithm algorithm)
{
    switch (algorithm) {
    case Algorithm::Iid: return "alg1";
    case Algorithm::KnownNoise: return "alg2";
    case Algorithm::ThreeStage: return "alg3";
    }
    return "unknown";
}

Algorithm algorithm_from_string(const std::string& name)
{
    if (name == "alg1" || name == "iid") return Algorithm::Iid;
    if (name == "alg2" || name == "known_noise") return Algorithm::KnownNoise;
    if (name == "alg3" || name == "three_stage") return Algorithm::ThreeStage;
    throw ConfigError("unknown recursive algorithm '" + name + "'");
}

StateLayout StateLayout::make(Algorithm algorithm, Index p_theta, Index p_eta, Index m_s)
{
    StateLayout l;
    l.algorithm = algorithm;
    l.p_theta = algorithm == Algorithm::Iid ? 0 : p_theta;
    l.p_eta = p_eta;
    l.m_s = algorithm == Algorithm::Iid ? 0 : m_s;
    Index off = 0;
    l.theta_p = off;
    off += l.theta_p_size();
    l.r_p = off;
    off += l.r_p_size();
    l.eta = off;
    off += l.eta_size();
    l.r_e = off;
    off += l.r_e_size();
    l.theta_s = off;
    off += l.theta_s_size();
    l.g = off;
    off += l.g_size();
    l.size = off;
    return l;
}

std::vector<std::string> StateLayout::component_names(const std::vector<std::string>& eta_names) const
{
    std::vector<std::string> names;
    auto idx = [](Index i) { return std::to_string(i + 1); };
    for (Index i = 0; i < theta_p_size(); ++i) names.push_back("theta_p[" + idx(i) + "]");
    for (Index j = 0; j < theta_p_size(); ++j)
        for (Index i = 0; i < theta_p_size(); ++i) names.push_back("r_p[" + idx(i) + "," + idx(j) + "]");
    for (Index i = 0; i < eta_size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        names.push_back("eta[" + (k < eta_names.size() ? eta_names[k] : idx(i)) + "]");
    }
    for (Index j = 0; j < eta_size(); ++j)
        for (Index i = 0; i < eta_size(); ++i) names.push_back("r_e[" + idx(i) + "," + idx(j) + "]");
    for (Index i = 0; i < theta_s_size(); ++i) names.push_back("theta_s[" + idx(i) + "]");
    for (Index j = 0; j < theta_s_size(); ++j)
        for (Index i = 0; i < g_rows(); ++i) {
            names.push_back("g[" + idx(i) + "," + idx(j) + "].re");
            names.push_back("g[" + idx(i) + "," + idx(j) + "].im");
        }
    return names;
}

Eigen::Map<MatrixXd> r_p_block(VectorXd& x, const StateLayout& l)
{
    return {x.data() + l.r_p, l.theta_p_size(), l.theta_p_size()};
}
Eigen::Map<const MatrixXd> r_p_block(const VectorXd& x, const StateLayout& l)
{
    return {x.data() + l.r_p, l.theta_p_size(), l.theta_p_size()};
}
Eigen::Map<MatrixXd> r_e_block(VectorXd& x, const StateLayout& l)
{
    return {x.data() + l.r_e, l.eta_size(), l.eta_size()};
}
Eigen::Map<const MatrixXd> r_e_block(const VectorXd& x, const StateLayout& l)
{
    return {x.data() + l.r_e, l.eta_size(), l.eta_size()};
}
Eigen::Map<MatrixXcd> g_block(VectorXd& x, const StateLayout& l)
{
    return {reinterpret_cast<Complex*>(x.data() + l.g), l.g_rows(), l.theta_s_size()};
}
Eigen::Map<const MatrixXcd> g_block(const VectorXd& x, const StateLayout& l)
{
    return {reinterpret_cast<const Complex*>(x.data() + l.g), l.g_rows(), l.theta_s_size()};
}

std::pair<VectorXd, VectorXd> default_eta_box(const NoiseModel& model)
{
    const Index full = parameter_count(model.family);
    VectorXd lo(full), hi(full);
    switch (model.family) {
    case NoiseFamily::Gaussian:
        lo << -1e3, 1e-6;
        hi << 1e3, 1e3;
        break;
    case NoiseFamily::VarianceGamma:
        lo << 1e-6, 1e-6, -1e3;
        hi << 1e3, 1e3, 1e3;
        break;
    case NoiseFamily::NormalInverseGaussian:
        lo << 1e-6, -1e3, 1e-6, -1e3;
        hi << 1e3, 1e3, 1e3, 1e3;
        break;
    }
    const auto idx = model.free_indices();
    VectorXd flo(static_cast<Index>(idx.size())), fhi(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        flo(static_cast<Index>(k)) = lo(idx[k]);
        fhi(static_cast<Index>(k)) = hi(idx[k]);
    }
    return {flo, fhi};
}

StateLayout EstimatorSetup::layout() const
{
    return StateLayout::make(algorithm, order.dim(), noise.free_count(), grid_s.size());
}

void EstimatorSetup::check() const
{
    validate(noise);
    const Index p_theta = order.dim();
    if (algorithm != Algorithm::Iid) {
        if (theta0.size() != p_theta) throw ConfigError("theta0 length does not match the ARMA order");
        if (p_theta > 0 && grid_s.size() == 0) throw ConfigError("system score needs a frequency grid");
        if (algorithm == Algorithm::KnownNoise && p_theta == 0)
            throw ConfigError("known-noise scheme needs at least one system parameter");
        if (rp_weight.size() > 0 && (rp_weight.rows() != p_theta || rp_weight.cols() != p_theta))
            throw ConfigError("rp_weight must be p_theta x p_theta");
    }
    if (algorithm != Algorithm::KnownNoise) {
        if (grid_e.size() == 0) throw ConfigError("noise score needs a frequency grid");
        try {
            require_identifiable(grid_e, noise);
        } catch (const IdentifiabilityError& e) {
            throw ConfigError(e.what());
        }
        if (eta0.size() != 0 && eta0.size() != noise.free_count())
            throw ConfigError("eta0 length does not match the free noise parameters");
        if (r_e0 && (r_e0->rows() != noise.free_count() || r_e0->cols() != noise.free_count()))
            throw ConfigError("r_e0 has wrong dimensions");
    }
    if (algorithm == Algorithm::ThreeStage && r_p0 && (r_p0->rows() != p_theta || r_p0->cols() != p_theta))
        throw ConfigError("r_p0 has wrong dimensions");
    const Index pe = noise.free_count();
    if ((domain.eta_lower.size() != 0 && domain.eta_lower.size() != pe)
        || (domain.eta_upper.size() != 0 && domain.eta_upper.size() != pe))
        throw ConfigError("eta box bounds must match the free noise parameters");
}

namespace {

bool spd_in_range(const Eigen::Map<const MatrixXd>& r, double floor, double ceiling)
{
    if (r.size() == 0) return true;
    if (!r.allFinite()) return false;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (r + r.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > floor && es.eigenvalues().maxCoeff() <= ceiling;
}

// Inverse of a symmetric matrix that should be positive definite; falls back to
// a ridge of 1e-8 trace / p, and to zero when the matrix carries no information.
MatrixXd regularized_spd_inverse(const MatrixXd& r, long* events)
{
    const Index p = r.rows();
    if (p == 0) return MatrixXd(0, 0);
    MatrixXd s = 0.5 * (r + r.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    VectorXd lambda = es.eigenvalues();
    const double lmax = lambda.cwiseAbs().maxCoeff();
    if (lmax > 0.0 && lambda.minCoeff() > 1e-12 * lmax)
        return es.eigenvectors() * lambda.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    if (events != nullptr) ++*events;
    const double ridge = 1e-8 * s.trace() / static_cast<double>(p);
    if (!(ridge > 0.0) || !std::isfinite(ridge)) return MatrixXd::Zero(p, p);
    lambda.array() += ridge;
    if (lambda.minCoeff() <= 0.0) return MatrixXd::Zero(p, p);
    return es.eigenvectors() * lambda.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

bool in_domain(const EstimatorSetup& setup, const VectorXd& x)
{
    const StateLayout l = setup.layout();
    if (x.size() != l.size || !x.allFinite()) return false;
    const TruncationDomain& d = setup.domain;

    if (l.theta_p_size() > 0
        && stability_margin(setup.order, x.segment(l.theta_p, l.theta_p_size())) < d.margin_delta)
        return false;
    if (l.theta_s_size() > 0
        && stability_margin(setup.order, x.segment(l.theta_s, l.theta_s_size())) < d.margin_delta)
        return false;
    if (!spd_in_range(r_p_block(x, l), d.pd_floor, d.r_max)) return false;
    if (!spd_in_range(r_e_block(x, l), d.pd_floor, d.r_max)) return false;

    if (l.eta_size() > 0) {
        const auto eta = x.segment(l.eta, l.eta_size());
        auto [lo, hi] = default_eta_box(setup.noise);
        if (d.eta_lower.size() > 0) lo = d.eta_lower;
        if (d.eta_upper.size() > 0) hi = d.eta_upper;
        if ((eta.array() < lo.array()).any() || (eta.array() > hi.array()).any()) return false;
        if (!in_family_domain(setup.noise.family, setup.noise.with_free_values(eta).eta)) return false;
    }
    if (l.g_size() > 0 && g_block(x, l).cwiseAbs().maxCoeff() > d.g_max) return false;
    return true;
}

CorrectionModel::CorrectionModel(EstimatorSetup setup) : setup_(std::move(setup))
{
    setup_.check();
    layout_ = setup_.layout();
    if (setup_.algorithm == Algorithm::KnownNoise) {
        const Index p = setup_.order.dim();
        fixed_phi_s_ = cf(setup_.noise, setup_.grid_s.u());
        if (setup_.weight_s == WeightKind::CAtEta) {
            const WeightMatrix k = make_weight(WeightKind::CAtEta, setup_.noise, setup_.grid_s);
            fixed_c_inv_s_ = k.inverse;
            fixed_regularized_ = k.regularized;
            if (setup_.rp_weight.size() > 0) {
                Eigen::LLT<MatrixXd> llt(0.5 * (setup_.rp_weight + setup_.rp_weight.transpose()));
                if (llt.info() != Eigen::Success) throw ConfigError("rp_weight is not positive definite");
                fixed_rp_inv_ = llt.solve(MatrixXd::Identity(p, p));
            } else {
                fixed_rp_inv_ = MatrixXd::Identity(p, p);
            }
        } else {
            fixed_c_inv_s_ = MatrixXcd::Identity(setup_.grid_s.size(), setup_.grid_s.size());
            fixed_rp_inv_ = MatrixXd::Identity(p, p);
        }
    }
}

MatrixXcd CorrectionModel::g_target(double eps, const VectorXd& eps_theta) const
{
    const Index p = eps_theta.size();
    const Index m = setup_.grid_s.size();
    const MatrixXd outer = eps_theta * eps_theta.transpose();
    MatrixXcd out(m * p, p);
    for (Index j = 0; j < m; ++j) {
        const double u = setup_.grid_s[j];
        const Complex coef = I_unit * u * std::polar(1.0, u * eps);
        out.middleRows(j * p, p) = coef * outer.cast<Complex>();
    }
    return out;
}

CorrectionModel::Prepared CorrectionModel::prepare(const VectorXd& x, long* ridge_events) const
{
    const StateLayout& l = layout_;
    Prepared at;
    at.x = x;
    NoiseModel noise_hat = setup_.noise;

    if (l.eta_size() > 0) {
        noise_hat = setup_.noise.with_free_values(x.segment(l.eta, l.eta_size()));
        at.phi_e = cf(noise_hat, setup_.grid_e.u());
        at.phi_jac_e = cf_jacobian(noise_hat, setup_.grid_e.u());
        const WeightMatrix k = make_weight(setup_.weight_e, noise_hat, setup_.grid_e,
                                           setup_.custom_weight_e ? &*setup_.custom_weight_e : nullptr);
        at.k_inv_phi_e = k.inverse * at.phi_jac_e;
        at.r_e_target = weighted_gram(at.phi_jac_e, k.inverse);
        at.r_e_inv = regularized_spd_inverse(r_e_block(x, l), ridge_events);
    }
    if (l.theta_p_size() > 0) at.r_p_inv = regularized_spd_inverse(r_p_block(x, l), ridge_events);

    if (l.theta_s_size() > 0) {
        const Index p = l.theta_s_size();
        const Index m = setup_.grid_s.size();
        MatrixXcd c_inv;
        MatrixXd rp_inv;
        if (setup_.algorithm == Algorithm::KnownNoise) {
            at.phi_s = fixed_phi_s_;
            c_inv = fixed_c_inv_s_;
            rp_inv = fixed_rp_inv_;
        } else {
            at.phi_s = cf(noise_hat, setup_.grid_s.u());
            if (setup_.weight_s == WeightKind::CAtEta) {
                c_inv = make_weight(WeightKind::CAtEta, noise_hat, setup_.grid_s).inverse;
                rp_inv = at.r_p_inv;
            } else {
                c_inv = MatrixXcd::Identity(m, m);
                rp_inv = MatrixXd::Identity(p, p);
            }
        }
        at.g = g_block(x, l);
        MatrixXcd k_inv_g(m * p, p);
        for (Index c = 0; c < p; ++c) k_inv_g.col(c) = kron_apply(c_inv, rp_inv, at.g.col(c));
        at.b_s = k_inv_g.adjoint();
        const MatrixXd r_s = (at.b_s * at.g).real();
        at.r_s_inv = regularized_spd_inverse(r_s, ridge_events);
    }
    return at;
}

VectorXd CorrectionModel::correction(const Prepared& at, FilterState& filter_p, FilterState& filter_s,
                                     double datum) const
{
    const StateLayout& l = layout_;
    const VectorXd& x = at.x;
    VectorXd q = VectorXd::Zero(l.size);

    double noise_input = datum;
    if (l.algorithm == Algorithm::ThreeStage) {
        const Innovation inn = innovation_step(setup_.order, x.segment(l.theta_p, l.theta_p_size()),
                                               filter_p, datum);
        noise_input = inn.eps;
        if (l.theta_p_size() > 0) {
            q.segment(l.theta_p, l.theta_p_size()) = -at.r_p_inv * (inn.eps_theta * inn.eps);
            Eigen::Map<MatrixXd>(q.data() + l.r_p, l.theta_p_size(), l.theta_p_size())
                = inn.eps_theta * inn.eps_theta.transpose() - r_p_block(x, l);
        }
    }

    if (l.eta_size() > 0) {
        const VectorXcd h = noise_score(noise_input, at.phi_e, setup_.grid_e);
        const VectorXd score = (at.k_inv_phi_e.adjoint() * h).real();
        q.segment(l.eta, l.eta_size()) = at.r_e_inv * score;
        Eigen::Map<MatrixXd>(q.data() + l.r_e, l.eta_size(), l.eta_size())
            = at.r_e_target - r_e_block(x, l);
    }

    if (l.theta_s_size() > 0) {
        const Index p = l.theta_s_size();
        const Index m = setup_.grid_s.size();
        const Innovation inn = innovation_step(setup_.order, x.segment(l.theta_s, p), filter_s, datum);
        VectorXcd h_s(m * p);
        for (Index j = 0; j < m; ++j) {
            const Complex hj = std::polar(1.0, setup_.grid_s[j] * inn.eps) - at.phi_s(j);
            h_s.segment(j * p, p) = hj * inn.eps_theta.cast<Complex>();
        }
        const VectorXd score = (at.b_s * h_s).real();
        q.segment(l.theta_s, p) = -at.r_s_inv * score;
        Eigen::Map<MatrixXcd>(reinterpret_cast<Complex*>(q.data() + l.g), m * p, p)
            = g_target(inn.eps, inn.eps_theta) - at.g;
    }
    return q;
}

EstimatorState initial_state(const EstimatorSetup& setup, const Eigen::Ref<const VectorXd>& data)
{
    setup.check();
    EstimatorState st;
    st.layout = setup.layout();
    const StateLayout& l = st.layout;
    st.x = VectorXd::Zero(l.size);
    st.filter_p = FilterState(setup.order);
    st.filter_s = FilterState(setup.order);

    if (l.theta_p_size() > 0) {
        st.x.segment(l.theta_p, l.theta_p_size()) = setup.theta0;
        r_p_block(st.x, l) = setup.r_p0 ? *setup.r_p0 : MatrixXd::Identity(l.p_theta, l.p_theta);
    }
    if (l.eta_size() > 0) {
        const VectorXd eta0 = setup.eta0.size() > 0 ? setup.eta0 : setup.noise.free_values();
        st.x.segment(l.eta, l.eta_size()) = eta0;
        if (setup.r_e0) {
            r_e_block(st.x, l) = *setup.r_e0;
        } else {
            const NoiseModel m0 = setup.noise.with_free_values(eta0);
            if (!in_family_domain(m0.family, m0.eta)) throw ConfigError("eta0 outside the family domain");
            const MatrixXcd phi = cf_jacobian(m0, setup.grid_e.u());
            const WeightMatrix k = make_weight(setup.weight_e, m0, setup.grid_e,
                                               setup.custom_weight_e ? &*setup.custom_weight_e : nullptr);
            r_e_block(st.x, l) = weighted_gram(phi, k.inverse);
        }
    }
    if (l.theta_s_size() > 0) {
        st.x.segment(l.theta_s, l.theta_s_size()) = setup.theta0;
        if (setup.g_init == GInit::Warmup && data.size() > 0) {
            if (stability_margin(setup.order, setup.theta0) < setup.domain.margin_delta)
                throw ConfigError("theta0 outside the truncation domain");
            CorrectionModel model(setup);
            FilterState f(setup.order);
            const Index n = std::min<Index>(setup.warmup_length, data.size());
            MatrixXcd acc = MatrixXcd::Zero(l.g_rows(), l.theta_s_size());
            for (Index t = 0; t < n; ++t) {
                const Innovation inn = innovation_step(setup.order, setup.theta0, f, data(t));
                acc += model.g_target(inn.eps, inn.eps_theta);
            }
            if (n > 0) g_block(st.x, l) = acc / static_cast<double>(n);
        }
    }
    if (!in_domain(setup, st.x)) throw ConfigError("initial estimate is not inside the truncation domain");
    st.x0 = st.x;
    return st;
}

StepOutcome dfl_step(EstimatorState& state, const VectorXd& correction,
                     const std::function<bool(const VectorXd&)>& inside)
{
    StepOutcome out;
    const double gain = 1.0 / static_cast<double>(state.n + 1);
    VectorXd candidate = state.x + gain * correction;
    ++state.n;
    if (candidate.allFinite() && inside(candidate)) {
        state.x = std::move(candidate);
    } else {
        out.reset = true;
        out.escaped = std::move(candidate);
        state.x = state.x0;
        ++state.reset_count;
    }
    return out;
}

StepOutcome estimator_step(EstimatorState& state, double datum, const CorrectionModel& model)
{
    const auto at = model.prepare(state.x, &state.ridge_events);
    const VectorXd q = model.correction(at, state.filter_p, state.filter_s, datum);
    return dfl_step(state, q, [&model](const VectorXd& x) { return in_domain(model.setup(), x); });
}

StepOutcome alg1_step(EstimatorState& state, double y, const CorrectionModel& model)
{
    if (model.layout().algorithm != Algorithm::Iid) throw ConfigError("alg1_step needs the Iid scheme");
    return estimator_step(state, y, model);
}

StepOutcome alg2_step(EstimatorState& state, double dy, const CorrectionModel& model)
{
    if (model.layout().algorithm != Algorithm::KnownNoise)
        throw ConfigError("alg2_step needs the KnownNoise scheme");
    return estimator_step(state, dy, model);
}

StepOutcome alg3_step(EstimatorState& state, double dy, const CorrectionModel& model)
{
    if (model.layout().algorithm != Algorithm::ThreeStage)
        throw ConfigError("alg3_step needs the ThreeStage scheme");
    return estimator_step(state, dy, model);
}

Trajectory run(const EstimatorSetup& setup, const Eigen::Ref<const VectorXd>& data)
{
    Trajectory traj;
    EstimatorState st = initial_state(setup, data);
    const CorrectionModel model(setup);
    traj.layout = st.layout;
    std::vector<std::string> eta_names;
    {
        const auto all = parameter_names(setup.noise.family);
        for (Index j : setup.noise.free_indices()) eta_names.push_back(all[static_cast<std::size_t>(j)]);
    }
    traj.names = st.layout.component_names(eta_names);
    traj.records.reserve(static_cast<std::size_t>(data.size()));
    for (Index t = 0; t < data.size(); ++t) {
        StepOutcome o = estimator_step(st, data(t), model);
        traj.records.push_back(TrajectoryRecord{st.n, st.x, o.reset, std::move(o.escaped)});
    }
    traj.final_state = std::move(st);
    return traj;
}

EstimatorState run_final(const EstimatorSetup& setup, const Eigen::Ref<const VectorXd>& data)
{
    EstimatorState st = initial_state(setup, data);
    const CorrectionModel model(setup);
    for (Index t = 0; t < data.size(); ++t) estimator_step(st, data(t), model);
    return st;
}

}  // namespace levyecf
