#pragma once

#include <cstdint>

#include "levyecf/noise_models.hpp"

namespace levyecf {

/// Orders of the monic ARMA(p, q) model
///   y_n + a_1 y_{n-1} + ... + a_p y_{n-p} = L_n + c_1 L_{n-1} + ... + c_q L_{n-q}.
/// The parameter vector theta stacks (a_1..a_p, c_1..c_q).
struct ArmaOrder {
    Index p = 0;
    Index q = 0;
    Index dim() const { return p + q; }
    friend bool operator==(const ArmaOrder&, const ArmaOrder&) = default;
};

/// Largest root modulus of z^d + c_1 z^{d-1} + ... + c_d (0 for d = 0).
double max_root_modulus(const Eigen::Ref<const VectorXd>& coeffs);

/// 1 - max root modulus over the AR and MA polynomials of theta.
double stability_margin(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta);

/// Scales each polynomial so that its roots have modulus at most 1 - delta.
VectorXd project_to_margin(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                           double delta);

/// A stable, inversely stable ARMA parameter. Construction rejects theta with
/// stability_margin < margin_delta.
class ArmaParams {
public:
    ArmaParams() = default;
    ArmaParams(VectorXd ar, VectorXd ma, double margin_delta = 0.05);
    static ArmaParams from_theta(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                                 double margin_delta = 0.05);

    const VectorXd& ar() const { return ar_; }
    const VectorXd& ma() const { return ma_; }
    double margin_delta() const { return margin_delta_; }
    ArmaOrder order() const { return {ar_.size(), ma_.size()}; }
    VectorXd theta() const;

private:
    VectorXd ar_;
    VectorXd ma_;
    double margin_delta_ = 0.05;
};

double stability_margin(const ArmaParams& params);

/// Zero-initialized histories of the inverse filter and its theta-sensitivity.
struct FilterState {
    VectorXd y_past;          // y_{n-1}, ..., y_{n-p}
    VectorXd eps_past;        // eps_{n-1}, ..., eps_{n-q}
    MatrixXd eps_theta_past;  // row j: d eps_{n-1-j} / d theta
    long n = 0;

    FilterState() = default;
    explicit FilterState(const ArmaOrder& order);
};

struct Innovation {
    double eps = 0.0;
    VectorXd eps_theta;  // d eps_n / d theta
};

/// One step of eps = A^{-1}(theta) y and eps_theta = d eps / d theta; advances state.
Innovation innovation_step(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                           FilterState& state, double y);
Innovation innovation_step(const ArmaParams& params, FilterState& state, double y);

/// y = A(theta) L with zero pre-sample values.
VectorXd simulate(const ArmaParams& params, const Eigen::Ref<const VectorXd>& noise);
VectorXd simulate(const ArmaParams& params, const IncrementSample& noise);

/// Innovation filter over a whole sequence, zero-initialized.
VectorXd innovations(const ArmaOrder& order, const Eigen::Ref<const VectorXd>& theta,
                     const Eigen::Ref<const VectorXd>& y);

/// Number of leading steps treated as filter transient: 10 max(p, q).
Index default_transient(const ArmaOrder& order);

/// Monte Carlo E[eps_theta eps_theta^T] at theta over a fresh path of length n
/// (after discarding default_transient steps).
MatrixXd r_p_estimate(const ArmaParams& params, const NoiseModel& model, Index n,
                      std::uint64_t seed);

}  // namespace levyecf
