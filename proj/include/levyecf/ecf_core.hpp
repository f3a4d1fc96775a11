#pragma once

#include <string>

#include "levyecf/noise_models.hpp"

namespace levyecf {

/// Fixed real frequencies at which the empirical characteristic function is matched.
class FreqGrid {
public:
    FreqGrid() = default;
    /// Entries must be finite, nonzero and pairwise distinct.
    explicit FreqGrid(VectorXd u);

    /// m equispaced points u_max/m, 2 u_max/m, ..., u_max.
    static FreqGrid equispaced(Index m, double u_max);

    /// Default grid for a data set: 10 points in (0, 2 / stddev(data)].
    static FreqGrid for_data(const Eigen::Ref<const VectorXd>& data, Index m = 10);

    Index size() const { return u_.size(); }
    const VectorXd& u() const { return u_; }
    double operator[](Index j) const { return u_(j); }

private:
    VectorXd u_;
};

/// Throws IdentifiabilityError when the grid is too small for the free parameters.
void require_identifiable(const FreqGrid& grid, const NoiseModel& model);

enum class WeightKind { Identity, CAtEta, Custom };

std::string to_string(WeightKind kind);
WeightKind weight_kind_from_string(const std::string& name);

/// Hermitian positive definite weighting matrix K together with K^{-1}.
struct WeightMatrix {
    WeightKind kind = WeightKind::Identity;
    MatrixXcd value;
    MatrixXcd inverse;
    bool regularized = false;  // a ridge was added to reach positive definiteness
};

/// Wraps a Hermitian matrix; applies the ridge rule of `regularize_hermitian`.
WeightMatrix make_weight(WeightKind kind, const MatrixXcd& value);

/// Identity, C at `model`, or the supplied custom matrix.
WeightMatrix make_weight(WeightKind kind, const NoiseModel& model, const FreqGrid& grid,
                         const MatrixXcd* custom = nullptr);

/// Noise score: h_j = exp(i u_j y) - cf(u_j).
VectorXcd noise_score(double y, const NoiseModel& model, const FreqGrid& grid);
VectorXcd noise_score(double y, const VectorXcd& phi, const FreqGrid& grid);

/// Closed-form covariance of (exp(i u_k Y))_k, C_kl = cf(u_k - u_l) - cf(u_k) cf(-u_l),
/// Hermitian-symmetrized but not regularized.
MatrixXcd c_matrix_raw(const NoiseModel& model, const FreqGrid& grid);

/// Adds ridge 1e-10 * trace(C)/M * I when the smallest eigenvalue is below that
/// ridge. Throws NumericalError if the result is still not positive definite
/// (min eigenvalue <= 1e-12 * max eigenvalue).
MatrixXcd regularize_hermitian(const MatrixXcd& c, bool* regularized = nullptr);

/// c_matrix_raw followed by regularize_hermitian.
MatrixXcd c_matrix(const NoiseModel& model, const FreqGrid& grid, bool* regularized = nullptr);

/// Pseudo-covariance E[h h^T], G_kl = cf(u_k + u_l) - cf(u_k) cf(u_l).
MatrixXcd pseudo_c_matrix(const NoiseModel& model, const FreqGrid& grid);

/// Symmetrized Re(Phi^* (K^{-1} Phi)).
MatrixXd weighted_gram(const MatrixXcd& phi, const MatrixXcd& weight_inverse);

/// (Re(Phi^* C^{-1} Phi))^{-1} with Phi = cf_jacobian at the model.
MatrixXd sigma_eta(const NoiseModel& model, const FreqGrid& grid);

/// Scalar s = Re(psi^* C^{-1} psi), psi_j = i u_j cf(u_j).
double location_information(const NoiseModel& model, const FreqGrid& grid);

/// s^{-1} r_p^{-1}.
MatrixXd sigma_theta(const NoiseModel& model, const FreqGrid& grid, const MatrixXd& r_p);

/// Exact asymptotic covariance of the real-part noise recursion for a general
/// weight: R^{-1} P R^{-1} with R = Re(Phi^* K^{-1} Phi) and P the covariance of
/// Re(Phi^* K^{-1} h), which involves both C and the pseudo-covariance.
MatrixXd eta_sandwich_covariance(const NoiseModel& model, const FreqGrid& grid,
                                 const MatrixXcd& weight_inverse);

/// Kronecker product c (x) r_p; both factors must be positive definite.
MatrixXcd kron_weight(const MatrixXcd& c, const MatrixXd& r_p);

/// Applies (A (x) B)^{-1} = A^{-1} (x) B^{-1} to a stacked vector v whose block j
/// (length B.rows()) pairs with row j of A. Takes the factor inverses.
VectorXcd kron_apply(const MatrixXcd& a_inverse, const MatrixXd& b_inverse, const VectorXcd& v);

}  // namespace levyecf
