#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "levyecf/types.hpp"

namespace levyecf {

/// Lévy increment families with closed-form characteristic functions.
///
/// Parameter conventions (all per unit time; one increment spans `h`):
///   Gaussian               eta = (mu, sigma),             sigma > 0
///   VarianceGamma          eta = (sigma, nu, theta_vg),   sigma > 0, nu > 0, no drift term
///   NormalInverseGaussian  eta = (alpha, beta, delta, mu), alpha > |beta|, delta > 0
///
/// Only the Gaussian family has (increment)^2 with finite exponential moments,
/// which the convergence-rate guarantees of the recursive estimators assume.
/// VG and NIG are offered for practical use without that guarantee.
enum class NoiseFamily { Gaussian, VarianceGamma, NormalInverseGaussian };

std::string to_string(NoiseFamily family);
NoiseFamily noise_family_from_string(const std::string& name);

/// Number of entries in the full parameter vector of `family`.
Index parameter_count(NoiseFamily family);

/// Human readable parameter names, e.g. {"mu", "sigma"}.
std::vector<std::string> parameter_names(NoiseFamily family);

struct NoiseModel {
    NoiseFamily family = NoiseFamily::Gaussian;
    VectorXd eta;   // full parameter vector
    double h = 1.0; // sampling interval
    // Indices of eta that are estimated; empty means all of them.
    std::vector<Index> free;

    Index free_count() const;
    std::vector<Index> free_indices() const;

    /// Free components of eta, in `free_indices()` order.
    VectorXd free_values() const;

    /// Copy with the free components replaced by `values`.
    NoiseModel with_free_values(const Eigen::Ref<const VectorXd>& values) const;
};

NoiseModel make_gaussian(double mu, double sigma, double h = 1.0);
NoiseModel make_variance_gamma(double sigma, double nu, double theta, double h = 1.0);
NoiseModel make_nig(double alpha, double beta, double delta, double mu, double h = 1.0);

/// True when eta lies in the open parameter domain of the family.
bool in_family_domain(NoiseFamily family, const Eigen::Ref<const VectorXd>& eta);

/// Throws DomainError when the model violates its family invariants.
void validate(const NoiseModel& model);

/// Cumulant (log characteristic function) of one h-increment.
Complex log_cf(const NoiseModel& model, double u);

/// Characteristic function of one h-increment, exp(log_cf).
Complex cf(const NoiseModel& model, double u);

/// cf evaluated at every entry of `u`.
VectorXcd cf(const NoiseModel& model, const Eigen::Ref<const VectorXd>& u);

/// d cf(u, eta) / d eta over all parameters of the family.
VectorXcd cf_grad_full(const NoiseModel& model, double u);

/// d cf(u, eta) / d eta restricted to the free parameters.
VectorXcd cf_grad(const NoiseModel& model, double u);

/// M x p_free matrix whose row j is cf_grad(model, u_j).
MatrixXcd cf_jacobian(const NoiseModel& model, const Eigen::Ref<const VectorXd>& u);

struct IncrementSample {
    VectorXd values;
    std::uint64_t seed = 0;
    NoiseModel model;
};

/// Draws n i.i.d. increments. VG uses gamma-subordinated Brownian motion, NIG an
/// inverse-Gaussian subordinator (Michael-Schucany-Haas). Deterministic in seed.
IncrementSample sample(const NoiseModel& model, Index n, std::uint64_t seed);

}  // namespace levyecf
