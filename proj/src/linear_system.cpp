#include "levyecf/linear_system.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace levyecf {

double max_root_modulus(const Eigen::Ref<const VectorXd>& coeffs)
{
    const Index d = coeffs.size();
    if (d == 0) return 0.0;
    if (!coeffs.allFinite()) return std::numeric_limits<double>::infinity();
    if (d == 1) return std::abs(coeffs(0));
    if (d == 2) {
        const double b = coeffs(0), c = coeffs(1);
        const double disc = b * b - 4.0 * c;
        if (disc < 0.0) return std::sqrt(std::abs(c));
        const double s = std::sqrt(disc);
        return std::max(std::abs(-b + s), std::abs(-b - s)) / 2.0;
    }
    MatrixXd companion = MatrixXd::Zero(d, d);
    companion.row(0) = -coeffs.transpose();
    companion.bottomLeftCorner(d - 1, d - 1).setIdentity();
    Eigen::EigenSolver<MatrixXd> es(companion, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double stability_margin(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta)
{
    if (theta.size() != order.dim()) throw DomainError("theta has wrong length for the ARMA order");
    const double ra = max_root_modulus(theta.head(order.p));
    const double rc = max_root_modulus(theta.tail(order.q));
    return 1.0 - std::max(ra, rc);
}

VectorXd project_to_margin(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                           double delta)
{
    VectorXd out = theta;
    const double target = 1.0 - delta;
    auto shrink = [target](Eigen::Ref<VectorXd> coeffs) {
        const double r = max_root_modulus(coeffs);
        if (r <= target || r == 0.0) return;
        // roots of z^d + sum c_i z^{d-i} scale by s when c_i -> c_i s^i
        const double s = target / r;
        double f = 1.0;
        for (Index i = 0; i < coeffs.size(); ++i) {
            f *= s;
            coeffs(i) *= f;
        }
    };
    shrink(out.head(order.p));
    shrink(out.tail(order.q));
    return out;
}

ArmaParams::ArmaParams(VectorXd ar, VectorXd ma, double margin_delta)
    : ar_(std::move(ar)), ma_(std::move(ma)), margin_delta_(margin_delta)
{
    if (!(margin_delta_ > 0.0 && margin_delta_ < 1.0))
        throw DomainError("margin_delta must lie in (0, 1)");
    const double margin = stability_margin(*this);
    if (!(margin >= margin_delta_))
        throw DomainError("ARMA parameter violates the stability margin (margin "
                          + std::to_string(margin) + " < " + std::to_string(margin_delta_) + ")");
}

ArmaParams ArmaParams::from_theta(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                                  double margin_delta)
{
    if (theta.size() != order.dim()) throw DomainError("theta has wrong length for the ARMA order");
    return ArmaParams(theta.head(order.p), theta.tail(order.q), margin_delta);
}

VectorXd ArmaParams::theta() const
{
    VectorXd t(ar_.size() + ma_.size());
    t << ar_, ma_;
    return t;
}

double stability_margin(const ArmaParams& params)
{
    return 1.0 - std::max(max_root_modulus(params.ar()), max_root_modulus(params.ma()));
}

FilterState::FilterState(const ArmaOrder& order)
    : y_past(VectorXd::Zero(order.p)),
      eps_past(VectorXd::Zero(order.q)),
      eps_theta_past(MatrixXd::Zero(order.q, order.dim()))
{
}

Innovation innovation_step(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                           FilterState& state, double y)
{
    const Index p = order.p, q = order.q, d = order.dim();
    const auto a = theta.head(p);
    const auto c = theta.tail(q);

    Innovation out;
    out.eps = y + a.dot(state.y_past) - c.dot(state.eps_past);
    out.eps_theta.resize(d);
    if (q > 0) out.eps_theta.noalias() = -(c.transpose() * state.eps_theta_past).transpose();
    else out.eps_theta.setZero();
    out.eps_theta.head(p) += state.y_past;
    out.eps_theta.tail(q) -= state.eps_past;

    if (p > 0) {
        for (Index i = p - 1; i > 0; --i) state.y_past(i) = state.y_past(i - 1);
        state.y_past(0) = y;
    }
    if (q > 0) {
        for (Index j = q - 1; j > 0; --j) {
            state.eps_past(j) = state.eps_past(j - 1);
            state.eps_theta_past.row(j) = state.eps_theta_past.row(j - 1);
        }
        state.eps_past(0) = out.eps;
        state.eps_theta_past.row(0) = out.eps_theta.transpose();
    }
    ++state.n;
    return out;
}

Innovation innovation_step(const ArmaParams& params, FilterState& state, double y)
{
    return innovation_step(params.order(), params.theta(), state, y);
}

VectorXd simulate(const ArmaParams& params, const Eigen::Ref<const VectorXd>& noise)
{
    const Index n = noise.size();
    const Index p = params.ar().size(), q = params.ma().size();
    VectorXd y(n);
    for (Index t = 0; t < n; ++t) {
        double v = noise(t);
        for (Index i = 1; i <= p && i <= t; ++i) v -= params.ar()(i - 1) * y(t - i);
        for (Index j = 1; j <= q && j <= t; ++j) v += params.ma()(j - 1) * noise(t - j);
        y(t) = v;
    }
    return y;
}

VectorXd simulate(const ArmaParams& params, const IncrementSample& noise)
{
    return simulate(params, noise.values);
}

VectorXd innovations(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                     const Eigen::Ref<const VectorXd>& y)
{
    FilterState state(order);
    VectorXd eps(y.size());
    for (Index t = 0; t < y.size(); ++t) eps(t) = innovation_step(order, theta, state, y(t)).eps;
    return eps;
}

Index default_transient(const ArmaOrder& order)
{
    return 10 * std::max(order.p, order.q);
}

MatrixXd r_p_estimate(const ArmaParams& params, const NoiseModel& model, Index n,
                      std::uint64_t seed)
{
    const ArmaOrder order = params.order();
    const Index d = order.dim();
    if (d == 0) return MatrixXd(0, 0);
    if (n < 1) throw DomainError("r_p_estimate needs n >= 1");
    const Index transient = default_transient(order);
    const VectorXd y = simulate(params, sample(model, n + transient, seed).values);
    const VectorXd theta = params.theta();
    FilterState state(order);
    MatrixXd acc = MatrixXd::Zero(d, d);
    for (Index t = 0; t < y.size(); ++t) {
        const Innovation inn = innovation_step(order, theta, state, y(t));
        if (t >= transient) acc.noalias() += inn.eps_theta * inn.eps_theta.transpose();
    }
    acc /= static_cast<double>(n);
    return 0.5 * (acc + acc.transpose());
}

}  // namespace levyecf
