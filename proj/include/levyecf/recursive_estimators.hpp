#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "levyecf/ecf_core.hpp"
#include "levyecf/linear_system.hpp"

namespace levyecf {

/// The three recursive ECF schemes.
///   Iid         noise parameters from i.i.d. increments            x = (eta, R_E)
///   KnownNoise  system parameters with the noise law known          x = (theta_S, G)
///   ThreeStage  prediction error, noise ECF and system ECF jointly  x = (theta_P, R_P, eta, R_E, theta_S, G)
enum class Algorithm { Iid, KnownNoise, ThreeStage };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

/// Offsets of the blocks of the stacked real state vector x. Square blocks are
/// stored column-major; the complex (M p_theta) x p_theta matrix G is stored as
/// interleaved (re, im) pairs in column-major order. Absent blocks have size 0.
struct StateLayout {
    Algorithm algorithm = Algorithm::Iid;
    Index p_theta = 0;
    Index p_eta = 0;
    Index m_s = 0;  // frequencies of the system score

    Index theta_p = 0, r_p = 0, eta = 0, r_e = 0, theta_s = 0, g = 0, size = 0;

    static StateLayout make(Algorithm algorithm, Index p_theta, Index p_eta, Index m_s);

    Index theta_p_size() const { return algorithm == Algorithm::ThreeStage ? p_theta : 0; }
    Index r_p_size() const { return theta_p_size() * theta_p_size(); }
    Index eta_size() const { return algorithm == Algorithm::KnownNoise ? 0 : p_eta; }
    Index r_e_size() const { return eta_size() * eta_size(); }
    Index theta_s_size() const { return algorithm == Algorithm::Iid ? 0 : p_theta; }
    Index g_rows() const { return m_s * theta_s_size(); }
    Index g_size() const { return 2 * g_rows() * theta_s_size(); }

    /// Column names, e.g. "theta_p[1]", "r_p[1,2]", "eta[sigma]", "g[3,1].im".
    std::vector<std::string> component_names(const std::vector<std::string>& eta_names) const;
};

/// Views into a stacked state vector.
Eigen::Map<MatrixXd> r_p_block(VectorXd& x, const StateLayout& l);
Eigen::Map<const MatrixXd> r_p_block(const VectorXd& x, const StateLayout& l);
Eigen::Map<MatrixXd> r_e_block(VectorXd& x, const StateLayout& l);
Eigen::Map<const MatrixXd> r_e_block(const VectorXd& x, const StateLayout& l);
Eigen::Map<MatrixXcd> g_block(VectorXd& x, const StateLayout& l);
Eigen::Map<const MatrixXcd> g_block(const VectorXd& x, const StateLayout& l);

/// Compact set D_0 in which the stacked estimate is confined.
struct TruncationDomain {
    VectorXd eta_lower;        // per free noise parameter; empty = family default
    VectorXd eta_upper;
    double margin_delta = 0.05;  // theta blocks need stability_margin >= margin_delta
    double pd_floor = 1e-10;     // R blocks need min eigenvalue > pd_floor
    double r_max = 1e8;          // and max eigenvalue <= r_max
    double g_max = 1e8;          // |G_ij| <= g_max
};

/// Default box for the free parameters of a family.
std::pair<VectorXd, VectorXd> default_eta_box(const NoiseModel& model);

enum class GInit { Zero, Warmup };

/// Everything an estimator run needs apart from the data.
struct EstimatorSetup {
    Algorithm algorithm = Algorithm::Iid;
    // Family, h and free mask. For KnownNoise, eta is the known true value; for the
    // other schemes the non-free components are held at these values.
    NoiseModel noise;
    ArmaOrder order;
    FreqGrid grid_e;  // noise score frequencies (Iid, ThreeStage)
    FreqGrid grid_s;  // system score frequencies (KnownNoise, ThreeStage)
    WeightKind weight_e = WeightKind::CAtEta;
    WeightKind weight_s = WeightKind::CAtEta;
    std::optional<MatrixXcd> custom_weight_e;
    // KnownNoise: R_P factor of K_S = C(eta) (x) R_P. Empty means identity.
    MatrixXd rp_weight;
    TruncationDomain domain;

    VectorXd eta0;    // free noise parameters; empty = noise.free_values()
    VectorXd theta0;  // ARMA parameters
    std::optional<MatrixXd> r_e0;  // default Re(Phi^* K^{-1} Phi) at eta0
    std::optional<MatrixXd> r_p0;  // default identity
    GInit g_init = GInit::Zero;
    Index warmup_length = 200;

    StateLayout layout() const;
    /// Throws ConfigError on inconsistent dimensions.
    void check() const;
};

struct EstimatorState {
    StateLayout layout;
    VectorXd x;
    VectorXd x0;
    long n = 0;
    long reset_count = 0;
    long ridge_events = 0;  // regularized inversions of R blocks or K
    FilterState filter_p;
    FilterState filter_s;

    auto theta_p() const { return x.segment(layout.theta_p, layout.theta_p_size()); }
    auto eta() const { return x.segment(layout.eta, layout.eta_size()); }
    auto theta_s() const { return x.segment(layout.theta_s, layout.theta_s_size()); }
    Eigen::Map<const MatrixXd> r_p() const { return r_p_block(x, layout); }
    Eigen::Map<const MatrixXd> r_e() const { return r_e_block(x, layout); }
    Eigen::Map<const MatrixXcd> g() const { return g_block(x, layout); }
};

/// Membership of a stacked point in D_0 (including family validity of eta).
bool in_domain(const EstimatorSetup& setup, const VectorXd& x);

/// Initial state x0. With GInit::Warmup the first warmup_length entries of
/// `data` are used to average the G-correction at theta0. Throws ConfigError
/// when x0 is not interior to D_0.
EstimatorState initial_state(const EstimatorSetup& setup, const Eigen::Ref<const VectorXd>& data = VectorXd());

struct StepOutcome {
    bool reset = false;
    VectorXd escaped;  // the rejected candidate when reset
};

/// x_{n+1-} = x_n + correction / (n + 1); kept if inside D_0, else x = x0.
StepOutcome dfl_step(EstimatorState& state, const VectorXd& correction,
                     const std::function<bool(const VectorXd&)>& inside);

/// Evaluates the correction term Q(xi, x) of a scheme for a fixed setup.
/// Quantities depending only on x are computed once in `prepare`.
class CorrectionModel {
public:
    explicit CorrectionModel(EstimatorSetup setup);

    struct Prepared {
        VectorXd x;
        // noise block
        VectorXcd phi_e;
        MatrixXcd k_inv_phi_e;  // K_E^{-1} Phi
        MatrixXcd phi_jac_e;
        MatrixXd r_e_target;    // Re(Phi^* K_E^{-1} Phi)
        MatrixXd r_e_inv;
        // prediction error block
        MatrixXd r_p_inv;
        // system block
        VectorXcd phi_s;
        MatrixXcd b_s;          // (K_S^{-1} G)^*
        MatrixXd r_s_inv;
        MatrixXcd g;
    };

    Prepared prepare(const VectorXd& x, long* ridge_events = nullptr) const;

    /// Q(xi_{n+1}, x); advances the filters by one datum.
    VectorXd correction(const Prepared& at, FilterState& filter_p, FilterState& filter_s,
                        double datum) const;

    /// G-correction target i u_j e^{i u_j eps} eps_theta eps_theta^T stacked over j.
    MatrixXcd g_target(double eps, const VectorXd& eps_theta) const;

    const EstimatorSetup& setup() const { return setup_; }
    const StateLayout& layout() const { return layout_; }

private:
    EstimatorSetup setup_;
    StateLayout layout_;
    MatrixXcd fixed_c_inv_s_;   // KnownNoise: C(eta*)^{-1} on grid_s
    MatrixXd fixed_rp_inv_;     // KnownNoise: rp_weight^{-1}
    VectorXcd fixed_phi_s_;
    bool fixed_regularized_ = false;
};

/// One datum of each scheme: correction at the current estimate, then dfl_step.
StepOutcome alg1_step(EstimatorState& state, double y, const CorrectionModel& model);
StepOutcome alg2_step(EstimatorState& state, double dy, const CorrectionModel& model);
StepOutcome alg3_step(EstimatorState& state, double dy, const CorrectionModel& model);
StepOutcome estimator_step(EstimatorState& state, double datum, const CorrectionModel& model);

struct TrajectoryRecord {
    long n = 0;
    VectorXd x;
    bool reset = false;
    VectorXd escaped;
};

struct Trajectory {
    StateLayout layout;
    std::vector<std::string> names;
    std::vector<TrajectoryRecord> records;
    EstimatorState final_state;
};

/// Drives the scheme over `data`, recording one entry per datum.
Trajectory run(const EstimatorSetup& setup, const Eigen::Ref<const VectorXd>& data);

/// Same recursion without per-step records; returns the final state.
EstimatorState run_final(const EstimatorSetup& setup, const Eigen::Ref<const VectorXd>& data);

}  // namespace levyecf
