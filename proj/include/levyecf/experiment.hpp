#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "levyecf/offline_baselines.hpp"
#include "levyecf/ode_analysis.hpp"
#include "levyecf/recursive_estimators.hpp"

namespace levyecf {

using Json = nlohmann::ordered_json;

/// Experiment definition read from a flat JSON object. Keys are listed in the
/// README; unknown keys are rejected.
struct ExperimentConfig {
    // data law
    NoiseModel truth;
    VectorXd ar, ma;  // empty: i.i.d. increments
    // estimator
    std::string algorithm = "alg1";  // alg1 | alg2 | alg3 | offline
    VectorXd grid_u;                 // explicit grid; else equispaced
    Index grid_points = 10;
    double grid_u_max = 2.0;        // default 2 / stddev of the increment law
    Index grid_s_points = 10;
    double grid_s_u_max = 2.0;
    WeightKind weight = WeightKind::CAtEta;
    bool rp_weight_estimate = true;  // alg2: R_P factor from r_p_estimate at truth
    Index rp_estimate_length = 100000;
    TruncationDomain domain;
    VectorXd eta0, theta0;
    GInit g_init = GInit::Zero;
    Index warmup_length = 200;
    // sizes and seeds
    Index n = 1000;
    Index replications = 10;
    std::uint64_t seed = 1;
    bool same_seed = false;
    bool rate_check = false;
    unsigned threads = 0;  // 0: hardware concurrency
    Index trajectory_stride = 1;
    // ode-check
    Index ode_path_length = 20000;
    Index ode_transient = 200;
    std::uint64_t ode_seed = 12345;
    Index p_star_length = 20000;
    double ode_t_end = 10.0;
    double ode_dt = 0.05;
    double ode_noise_tol = 0.05;

    Json raw;  // echo of the parsed object

    static ExperimentConfig from_json(const Json& j);
    static ExperimentConfig from_file(const std::string& path);

    bool is_system() const { return ar.size() + ma.size() > 0; }
    ArmaOrder order() const { return {ar.size(), ma.size()}; }
    VectorXd theta_true() const;
    FreqGrid grid_e() const;
    FreqGrid grid_s() const;
    Algorithm recursive_algorithm() const;
    /// Estimator setup for the configured recursive algorithm.
    EstimatorSetup estimator_setup() const;
    /// Increments (i.i.d.) or system output of length n for the given seed.
    VectorXd simulate_data(Index length, std::uint64_t seed) const;
};

/// 17 significant digits, shortest exact form for integers.
std::string format_double(double v);

/// One-column CSV with header "dy".
void write_data_csv(const std::string& path, const Eigen::Ref<const VectorXd>& data);
/// Reads a one-column CSV with a header row. Throws ParseError naming the line.
VectorXd read_data_csv(const std::string& path);
VectorXd parse_data_csv(std::istream& in);

/// Estimated quantities of a run, in report order.
struct EstimateVector {
    std::vector<std::string> names;
    VectorXd values;
};

/// Names and true values of the components compared in Monte Carlo reports.
EstimateVector truth_vector(const ExperimentConfig& cfg);
/// Theoretical asymptotic covariance of those components (block diagonal).
MatrixXd theoretical_sigma(const ExperimentConfig& cfg);
/// The R_P factor used for the alg2 weight and the theta covariance.
MatrixXd config_r_p(const ExperimentConfig& cfg);

struct RunResult {
    EstimateVector estimate;
    long reset_count = 0;
    long ridge_events = 0;
    bool ok = true;
    std::string error;
    std::optional<OfflineFit> offline;
    std::optional<EstimatorState> state;
};

/// Runs the configured algorithm on `data`.
RunResult run_estimator(const ExperimentConfig& cfg, const Eigen::Ref<const VectorXd>& data,
                        std::optional<Trajectory>* trajectory = nullptr);

struct MonteCarloStudy {
    Index n = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<RunResult> runs;
    VectorXd rmse;
    MatrixXd n_cov;  // N times the sample covariance of the final errors
    long failures = 0;
    long runs_with_resets = 0;
    long total_resets = 0;
    long max_resets = 0;
};

struct MonteCarloReport {
    std::vector<std::string> names;
    VectorXd truth;
    MatrixXd sigma;
    VectorXd ratio;  // diag(n_cov) / diag(sigma)
    MonteCarloStudy study;
    std::optional<MonteCarloStudy> study_4n;
    VectorXd rmse_ratio;  // rmse(N) / rmse(4N)
    Json to_json() const;
};

/// Independent replications run concurrently; aggregation in replication order.
MonteCarloStudy monte_carlo_study(const ExperimentConfig& cfg, Index n);
MonteCarloReport run_montecarlo(const ExperimentConfig& cfg);

/// Diagnostics of the associated ODE at the configured truth.
struct OdeCheck {
    std::vector<std::string> names;
    VectorXd x_star;
    VectorXd rhs_at_truth;
    VectorXd rhs_std_error;  // zero for closed-form right-hand sides
    JacobianResult jacobian;
    BlockStructure blocks;
    std::optional<LyapunovResult> lyapunov;
    std::string lyapunov_error;
    OdePath path;
    bool noise_dominated = false;
    Index suggested_path_length = 0;
    Json to_json() const;
};
OdeCheck run_ode_check(const ExperimentConfig& cfg);

/// Subcommand drivers; write their files into out_dir and return the summary.
Json cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir);
Json cmd_estimate(const ExperimentConfig& cfg, const std::string& data_path, const std::string& out_dir);
Json cmd_montecarlo(const ExperimentConfig& cfg, const std::string& out_dir);
Json cmd_ode_check(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace levyecf
