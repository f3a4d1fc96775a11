#pragma once

#include <string>
#include <vector>

#include "levyecf/ecf_core.hpp"
#include "levyecf/linear_system.hpp"

namespace levyecf {

struct OfflineFit {
    VectorXd estimate;
    double objective = 0.0;
    long iterations = 0;
    bool converged = false;
    std::vector<double> history;  // objective after each accepted iteration
    std::string message;
};

struct OfflineOptions {
    double step_tol = 1e-8;
    long max_iterations = 200;
    int max_halvings = 40;
};

/// Moment-based starting point for the free parameters of `model`'s family.
VectorXd moment_initializer(const Eigen::Ref<const VectorXd>& data, const NoiseModel& model);

/// Re(hbar^* K^{-1} hbar), hbar = mean_n exp(i u y_n) - cf(u, eta), for the free
/// parameters `eta_free` of `model`.
double ecf_objective(const VectorXcd& ecf, const NoiseModel& model, const FreqGrid& grid,
                     const MatrixXcd& weight_inverse);

/// Empirical characteristic function of `data` on the grid.
VectorXcd empirical_cf(const Eigen::Ref<const VectorXd>& data, const FreqGrid& grid);

/// Gauss-Newton ECF fit of the free parameters of `model`. Non-free components
/// stay at their values in `model`. With WeightKind::CAtEta, K is C at the moment
/// initializer for a first fit and C at that fit for the final one.
OfflineFit offline_ecf_iid(const Eigen::Ref<const VectorXd>& data, const NoiseModel& model,
                           const FreqGrid& grid, WeightKind weight = WeightKind::CAtEta,
                           const MatrixXcd* custom_weight = nullptr, const OfflineOptions& opts = {});

/// Gauss-Newton prediction-error fit minimizing mean eps_n(theta)^2. The start
/// (zeros by default) and every iterate are projected onto the stability margin.
OfflineFit offline_pe(const Eigen::Ref<const VectorXd>& data, const ArmaOrder& order,
                      const VectorXd& theta_init = VectorXd(), double margin_delta = 0.05,
                      const OfflineOptions& opts = {});

}  // namespace levyecf
