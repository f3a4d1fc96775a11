#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "levyecf/recursive_estimators.hpp"

namespace levyecf {

/// Right-hand side of the associated ODE  dy/dt = F(y)  of a recursive scheme.
/// The time-homogeneous form is used; dy/dt = F(y)/t has the same paths up to
/// a change of time scale.
struct AssociatedOde {
    Index dimension = 0;
    std::function<VectorXd(const VectorXd&)> rhs;
    // Membership in the region D'_0 where integration may proceed; empty = everywhere.
    std::function<bool(const VectorXd&)> inside;
    std::string name;
};

/// Closed-form F for the i.i.d. scheme on x = (eta, R_E) (StateLayout of Algorithm::Iid):
///   eta' = R^{-1} Re(Phi^* K^{-1} g(eta)),  g = cf(eta*) - cf(eta)
///   R'   = Re(Phi^* K^{-1} Phi) - R
/// `setup` supplies the family, grid, weight kind and domain; `truth` the data law.
VectorXd ode_rhs_iid(const VectorXd& x, const NoiseModel& truth, const EstimatorSetup& setup);
AssociatedOde make_iid_ode(const NoiseModel& truth, const EstimatorSetup& setup);

/// Settings of the frozen-parameter time averages.
struct FrozenPathOptions {
    Index path_length = 100000;
    Index transient = 200;
    std::uint64_t seed = 12345;
    Index batches = 20;  // batch-means standard errors
};

struct RhsEstimate {
    VectorXd value;
    VectorXd std_error;
};

/// Monte Carlo F for the system schemes (KnownNoise or ThreeStage). One data path
/// is simulated from (truth, theta_true) and reused for every evaluation point, so
/// differences across points use common random numbers.
class SystemOde {
public:
    SystemOde(EstimatorSetup setup, NoiseModel truth, VectorXd theta_true, FrozenPathOptions opts = {});

    /// Time average of the frozen-parameter correction Q(xi_n(x), x).
    RhsEstimate rhs(const VectorXd& x) const;

    /// Per-step frozen corrections at x, one row per retained step.
    MatrixXd correction_sequence(const VectorXd& x) const;

    /// Stacked true point: theta*, R_P(theta*), eta*, R_E*, theta*, G(theta*).
    /// R_P and G are time averages over the same path.
    VectorXd true_point() const;

    AssociatedOde ode() const;
    const EstimatorSetup& setup() const { return setup_; }
    const VectorXd& data() const { return data_; }

private:
    EstimatorSetup setup_;
    NoiseModel truth_;
    VectorXd theta_true_;
    FrozenPathOptions opts_;
    VectorXd data_;
};

/// Convenience wrapper over SystemOde::rhs.
RhsEstimate ode_rhs_system(const VectorXd& x, const EstimatorSetup& setup, const NoiseModel& truth,
                           const VectorXd& theta_true, const FrozenPathOptions& opts);

struct OdePath {
    std::vector<double> times;
    std::vector<VectorXd> states;
    bool escaped = false;
    VectorXd escape_point;
};

/// Classical fixed-step RK4 from t_begin to t_end. Stops at the first state outside
/// `ode.inside` and reports it.
OdePath integrate(const AssociatedOde& ode, const VectorXd& x_init, double t_begin, double t_end,
                  double dt);

struct JacobianResult {
    MatrixXd jacobian;
    VectorXcd eigenvalues;  // sorted by real part, ascending
};

/// Central-difference Jacobian with step rel_step * max(1, |x_j|).
JacobianResult jacobian_at(const AssociatedOde& ode, const VectorXd& x, double rel_step = 1e-5);

/// Block-structure summary of a Jacobian partitioned by `block_sizes`.
struct BlockStructure {
    double max_upper = 0.0;           // largest |entry| strictly above the block diagonal
    std::vector<double> diag_error;   // per block: max |J_kk + I|
};
BlockStructure block_structure(const MatrixXd& jacobian, const std::vector<Index>& block_sizes);

/// Block sizes of a StateLayout in storage order (empty blocks omitted).
std::vector<Index> layout_blocks(const StateLayout& layout);

/// Bartlett-weighted long-run covariance sum_{|l|<=lag} w_l E[H_l H_0^T] of the rows
/// of `samples` (not demeaned), projected onto the PSD cone.
MatrixXd hac_covariance(const MatrixXd& samples, Index lag);

/// Default lag 2 ceil(T^{1/3}).
Index default_hac_lag(Index length);

/// P* for the i.i.d. scheme at x*: long-run covariance of the corrections over
/// `length` fresh draws from `truth`.
MatrixXd p_star_iid(const VectorXd& x_star, const NoiseModel& truth, const EstimatorSetup& setup,
                    Index length, std::uint64_t seed, Index lag = -1);

/// P* for a system scheme at x* along the SystemOde path.
MatrixXd p_star_system(const SystemOde& ode, const VectorXd& x_star, Index lag = -1);

/// Thrown when A* + I/2 has an eigenvalue with non-negative real part.
class RateConditionError : public std::runtime_error {
public:
    RateConditionError(const std::string& what, Complex eigenvalue)
        : std::runtime_error(what), eigenvalue_(eigenvalue) {}
    Complex eigenvalue() const { return eigenvalue_; }

private:
    Complex eigenvalue_;
};

struct LyapunovResult {
    MatrixXd a_star;
    MatrixXd p_star;
    MatrixXd sigma_xx;
    double residual = 0.0;  // max-abs residual of the equation
};

/// Solves (A + I/2) S + S (A + I/2)^T + P = 0 by complex Schur (Bartels-Stewart).
LyapunovResult lyapunov_solve(const MatrixXd& a_star, const MatrixXd& p_star);

}  // namespace levyecf
