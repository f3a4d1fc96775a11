#include "levyecf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace levyecf {

namespace {

const std::set<std::string> kKeys = {
    "description", "family", "eta", "h", "free", "ar", "ma", "algorithm", "grid", "grid_points",
    "grid_u_max", "grid_s_points", "grid_s_u_max", "weight", "rp_weight", "rp_estimate_length",
    "margin_delta", "pd_floor", "r_max", "g_max", "eta_lower", "eta_upper", "eta0", "theta0",
    "g_init", "warmup_length", "n", "replications", "seed", "same_seed", "rate_check", "threads",
    "trajectory_stride", "ode_path_length", "ode_transient", "ode_seed", "p_star_length",
    "ode_t_end", "ode_dt", "ode_noise_tol"};

VectorXd to_vector(const Json& j, const std::string& key)
{
    if (!j.is_array()) throw ConfigError("key '" + key + "' must be an array of numbers");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number()) throw ConfigError("key '" + key + "' must be an array of numbers");
        v(static_cast<Index>(k)) = j[k].get<double>();
    }
    return v;
}

template <class T>
T number(const Json& j, const std::string& key)
{
    if (!j.is_number()) throw ConfigError("key '" + key + "' must be a number");
    if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) throw ConfigError("key '" + key + "' must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (j.is_number_integer() && j.get<long long>() < 0)
                throw ConfigError("key '" + key + "' must be non-negative");
        }
    }
    return j.get<T>();
}

bool boolean(const Json& j, const std::string& key)
{
    if (!j.is_boolean()) throw ConfigError("key '" + key + "' must be true or false");
    return j.get<bool>();
}

std::string text(const Json& j, const std::string& key)
{
    if (!j.is_string()) throw ConfigError("key '" + key + "' must be a string");
    return j.get<std::string>();
}

Json vec_json(const Eigen::Ref<const VectorXd>& v)
{
    Json a = Json::array();
    for (Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

Json mat_json(const MatrixXd& m)
{
    Json a = Json::array();
    for (Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
    return a;
}

Json named(const std::vector<std::string>& names, const Eigen::Ref<const VectorXd>& v)
{
    Json o = Json::object();
    for (std::size_t k = 0; k < names.size(); ++k) o[names[k]] = v(static_cast<Index>(k));
    return o;
}

std::vector<std::string> free_names(const NoiseModel& model)
{
    const auto all = parameter_names(model.family);
    std::vector<std::string> out;
    for (Index k : model.free_indices()) out.push_back(all[static_cast<std::size_t>(k)]);
    return out;
}

std::vector<std::string> indexed(const std::string& stem, Index count)
{
    std::vector<std::string> out;
    for (Index k = 0; k < count; ++k) out.push_back(stem + "[" + std::to_string(k + 1) + "]");
    return out;
}

double increment_variance(const NoiseModel& m)
{
    const VectorXd& e = m.eta;
    switch (m.family) {
    case NoiseFamily::Gaussian: return e(1) * e(1) * m.h;
    case NoiseFamily::VarianceGamma: return m.h * (e(0) * e(0) + e(2) * e(2) * e(1));
    case NoiseFamily::NormalInverseGaussian: {
        const double g = std::sqrt(e(0) * e(0) - e(1) * e(1));
        return m.h * e(2) * e(0) * e(0) / (g * g * g);
    }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

std::filesystem::path ensure_dir(const std::string& dir)
{
    std::filesystem::path p(dir.empty() ? "." : dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + p.string() + "': " + ec.message());
    return p;
}

void write_text(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string csv_row(const std::vector<std::string>& cells)
{
    std::string line;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) line += ',';
        const std::string& c = cells[k];
        if (c.find_first_of(",\"\n") != std::string::npos) {
            line += '"';
            for (char ch : c) line += ch == '"' ? std::string("\"\"") : std::string(1, ch);
            line += '"';
        } else {
            line += c;
        }
    }
    return line + "\n";
}

}  // namespace

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ExperimentConfig ExperimentConfig::from_json(const Json& j)
{
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    for (const auto& item : j.items())
        if (!kKeys.count(item.key())) throw ConfigError("unknown configuration key '" + item.key() + "'");

    ExperimentConfig c;
    c.raw = j;
    if (!j.contains("family") || !j.contains("eta")) throw ConfigError("configuration needs 'family' and 'eta'");
    c.truth.family = noise_family_from_string(text(j["family"], "family"));
    c.truth.eta = to_vector(j["eta"], "eta");
    if (j.contains("h")) c.truth.h = number<double>(j["h"], "h");
    if (c.truth.eta.size() != parameter_count(c.truth.family))
        throw ConfigError("'eta' has " + std::to_string(c.truth.eta.size()) + " entries, family '"
                          + to_string(c.truth.family) + "' needs " + std::to_string(parameter_count(c.truth.family)));
    if (j.contains("free")) {
        const auto names = parameter_names(c.truth.family);
        for (const auto& f : j["free"]) {
            if (f.is_string()) {
                auto it = std::find(names.begin(), names.end(), f.get<std::string>());
                if (it == names.end()) throw ConfigError("unknown parameter '" + f.get<std::string>() + "' in 'free'");
                c.truth.free.push_back(it - names.begin());
            } else {
                c.truth.free.push_back(number<Index>(f, "free"));
            }
        }
        std::sort(c.truth.free.begin(), c.truth.free.end());
        if (std::adjacent_find(c.truth.free.begin(), c.truth.free.end()) != c.truth.free.end())
            throw ConfigError("'free' lists a parameter twice");
        if (!c.truth.free.empty() && (c.truth.free.front() < 0 || c.truth.free.back() >= c.truth.eta.size()))
            throw ConfigError("'free' index out of range");
    }
    try {
        validate(c.truth);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("true noise parameter: ") + e.what());
    }

    if (j.contains("ar")) c.ar = to_vector(j["ar"], "ar");
    if (j.contains("ma")) c.ma = to_vector(j["ma"], "ma");
    if (j.contains("algorithm")) c.algorithm = text(j["algorithm"], "algorithm");
    if (j.contains("grid")) c.grid_u = to_vector(j["grid"], "grid");
    if (j.contains("grid_points")) c.grid_points = number<Index>(j["grid_points"], "grid_points");
    const double u_default = 2.0 / std::sqrt(increment_variance(c.truth));
    c.grid_u_max = j.contains("grid_u_max") ? number<double>(j["grid_u_max"], "grid_u_max") : u_default;
    if (j.contains("grid_s_points")) c.grid_s_points = number<Index>(j["grid_s_points"], "grid_s_points");
    c.grid_s_u_max = j.contains("grid_s_u_max") ? number<double>(j["grid_s_u_max"], "grid_s_u_max") : u_default;
    if (j.contains("weight")) c.weight = weight_kind_from_string(text(j["weight"], "weight"));
    if (c.weight == WeightKind::Custom) throw ConfigError("custom weights are not available from a config file");
    if (j.contains("rp_weight")) {
        const std::string r = text(j["rp_weight"], "rp_weight");
        if (r != "estimate" && r != "identity") throw ConfigError("'rp_weight' must be 'estimate' or 'identity'");
        c.rp_weight_estimate = r == "estimate";
    }
    if (j.contains("rp_estimate_length")) c.rp_estimate_length = number<Index>(j["rp_estimate_length"], "rp_estimate_length");
    if (j.contains("margin_delta")) c.domain.margin_delta = number<double>(j["margin_delta"], "margin_delta");
    if (j.contains("pd_floor")) c.domain.pd_floor = number<double>(j["pd_floor"], "pd_floor");
    if (j.contains("r_max")) c.domain.r_max = number<double>(j["r_max"], "r_max");
    if (j.contains("g_max")) c.domain.g_max = number<double>(j["g_max"], "g_max");
    if (j.contains("eta_lower")) c.domain.eta_lower = to_vector(j["eta_lower"], "eta_lower");
    if (j.contains("eta_upper")) c.domain.eta_upper = to_vector(j["eta_upper"], "eta_upper");
    if (j.contains("eta0")) c.eta0 = to_vector(j["eta0"], "eta0");
    if (j.contains("theta0")) c.theta0 = to_vector(j["theta0"], "theta0");
    if (j.contains("g_init")) {
        const std::string g = text(j["g_init"], "g_init");
        if (g == "zero") c.g_init = GInit::Zero;
        else if (g == "warmup") c.g_init = GInit::Warmup;
        else throw ConfigError("'g_init' must be 'zero' or 'warmup'");
    }
    if (j.contains("warmup_length")) c.warmup_length = number<Index>(j["warmup_length"], "warmup_length");
    if (j.contains("n")) c.n = number<Index>(j["n"], "n");
    if (j.contains("replications")) c.replications = number<Index>(j["replications"], "replications");
    if (j.contains("seed")) c.seed = number<std::uint64_t>(j["seed"], "seed");
    if (j.contains("same_seed")) c.same_seed = boolean(j["same_seed"], "same_seed");
    if (j.contains("rate_check")) c.rate_check = boolean(j["rate_check"], "rate_check");
    if (j.contains("threads")) c.threads = number<unsigned>(j["threads"], "threads");
    if (j.contains("trajectory_stride")) c.trajectory_stride = number<Index>(j["trajectory_stride"], "trajectory_stride");
    if (j.contains("ode_path_length")) c.ode_path_length = number<Index>(j["ode_path_length"], "ode_path_length");
    if (j.contains("ode_transient")) c.ode_transient = number<Index>(j["ode_transient"], "ode_transient");
    if (j.contains("ode_seed")) c.ode_seed = number<std::uint64_t>(j["ode_seed"], "ode_seed");
    if (j.contains("p_star_length")) c.p_star_length = number<Index>(j["p_star_length"], "p_star_length");
    if (j.contains("ode_t_end")) c.ode_t_end = number<double>(j["ode_t_end"], "ode_t_end");
    if (j.contains("ode_dt")) c.ode_dt = number<double>(j["ode_dt"], "ode_dt");
    if (j.contains("ode_noise_tol")) c.ode_noise_tol = number<double>(j["ode_noise_tol"], "ode_noise_tol");

    if (c.n < 0) throw ConfigError("'n' must be non-negative");
    if (c.trajectory_stride < 1) throw ConfigError("'trajectory_stride' must be at least 1");
    if (c.is_system()) {
        try {
            ArmaParams(c.ar, c.ma, c.domain.margin_delta);
        } catch (const DomainError& e) {
            throw ConfigError(std::string("true system parameter: ") + e.what());
        }
    }
    const std::set<std::string> algorithms = {"alg1", "alg2", "alg3", "offline"};
    if (!algorithms.count(c.algorithm))
        throw ConfigError("'algorithm' must be one of alg1, alg2, alg3, offline");
    if (c.algorithm == "alg1" && c.is_system())
        throw ConfigError("alg1 estimates i.i.d. noise; remove 'ar'/'ma' or choose alg2/alg3");
    if ((c.algorithm == "alg2" || c.algorithm == "alg3") && !c.is_system())
        throw ConfigError(c.algorithm + " needs a system ('ar' and/or 'ma')");
    if (c.theta0.size() > 0 && c.theta0.size() != c.order().dim())
        throw ConfigError("'theta0' length does not match the ARMA order");
    if (c.eta0.size() > 0 && c.eta0.size() != c.truth.free_count())
        throw ConfigError("'eta0' length does not match the free noise parameters");
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("configuration '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

VectorXd ExperimentConfig::theta_true() const
{
    VectorXd t(ar.size() + ma.size());
    t << ar, ma;
    return t;
}

FreqGrid ExperimentConfig::grid_e() const
{
    return grid_u.size() > 0 ? FreqGrid(grid_u) : FreqGrid::equispaced(grid_points, grid_u_max);
}

FreqGrid ExperimentConfig::grid_s() const
{
    return FreqGrid::equispaced(grid_s_points, grid_s_u_max);
}

Algorithm ExperimentConfig::recursive_algorithm() const
{
    if (algorithm == "offline") throw ConfigError("the offline baseline is not a recursive algorithm");
    return algorithm_from_string(algorithm);
}

MatrixXd config_r_p(const ExperimentConfig& cfg)
{
    if (!cfg.is_system()) throw ConfigError("R_P needs a system");
    const ArmaParams params(cfg.ar, cfg.ma, cfg.domain.margin_delta);
    return r_p_estimate(params, cfg.truth, cfg.rp_estimate_length, cfg.ode_seed);
}

EstimatorSetup ExperimentConfig::estimator_setup() const
{
    EstimatorSetup s;
    s.algorithm = recursive_algorithm();
    s.noise = truth;
    s.order = order();
    s.grid_e = grid_e();
    if (is_system()) s.grid_s = grid_s();
    s.weight_e = weight;
    s.weight_s = weight;
    s.domain = domain;
    s.eta0 = eta0.size() > 0 ? eta0 : truth.free_values();
    s.theta0 = theta0.size() > 0 ? theta0 : VectorXd::Zero(order().dim());
    if (s.algorithm == Algorithm::KnownNoise && rp_weight_estimate) s.rp_weight = config_r_p(*this);
    s.g_init = g_init;
    s.warmup_length = warmup_length;
    s.check();
    return s;
}

VectorXd ExperimentConfig::simulate_data(Index length, std::uint64_t data_seed) const
{
    const IncrementSample noise = sample(truth, length, data_seed);
    if (!is_system()) return noise.values;
    return simulate(ArmaParams(ar, ma, domain.margin_delta), noise.values);
}

void write_data_csv(const std::string& path, const Eigen::Ref<const VectorXd>& data)
{
    std::string s = "dy\n";
    for (Index k = 0; k < data.size(); ++k) s += format_double(data(k)) + "\n";
    write_text(path, s);
}

VectorXd parse_data_csv(std::istream& in)
{
    std::string line;
    long line_no = 0;
    std::vector<double> values;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t");
        const std::string cell = line.substr(first, last - first + 1);
        if (!header) {
            header = true;
            if (cell.find(',') != std::string::npos) throw ParseError("expected a single column header", line_no);
            continue;
        }
        if (cell.find(',') != std::string::npos) throw ParseError("expected one column, found several", line_no);
        double v = 0.0;
        const char* b = cell.data();
        const char* e = cell.data() + cell.size();
        if (*b == '+') ++b;
        const auto res = std::from_chars(b, e, v);
        if (res.ec != std::errc() || res.ptr != e)
            throw ParseError("malformed number '" + cell + "'", line_no);
        if (!std::isfinite(v)) throw ParseError("non-finite value '" + cell + "'", line_no);
        values.push_back(v);
    }
    if (!header) throw ParseError("missing header row", std::max(line_no, 1L));
    return Eigen::Map<VectorXd>(values.data(), static_cast<Index>(values.size()));
}

VectorXd read_data_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open data file '" + path + "'");
    return parse_data_csv(in);
}

EstimateVector truth_vector(const ExperimentConfig& cfg)
{
    EstimateVector t;
    const Index d = cfg.order().dim();
    auto add = [&t](const std::vector<std::string>& names, const VectorXd& v) {
        t.names.insert(t.names.end(), names.begin(), names.end());
        VectorXd joined(t.values.size() + v.size());
        joined << t.values, v;
        t.values = joined;
    };
    const std::string& a = cfg.algorithm;
    if (a == "alg1" || (a == "offline" && !cfg.is_system())) {
        std::vector<std::string> names;
        for (const auto& n : free_names(cfg.truth)) names.push_back("eta[" + n + "]");
        add(names, cfg.truth.free_values());
    } else if (a == "offline") {
        add(indexed("theta", d), cfg.theta_true());
    } else if (a == "alg2") {
        add(indexed("theta_s", d), cfg.theta_true());
    } else {
        add(indexed("theta_p", d), cfg.theta_true());
        std::vector<std::string> names;
        for (const auto& n : free_names(cfg.truth)) names.push_back("eta[" + n + "]");
        add(names, cfg.truth.free_values());
        add(indexed("theta_s", d), cfg.theta_true());
    }
    return t;
}

MatrixXd theoretical_sigma(const ExperimentConfig& cfg)
{
    const EstimateVector t = truth_vector(cfg);
    const Index total = t.values.size();
    MatrixXd s = MatrixXd::Constant(total, total, std::numeric_limits<double>::quiet_NaN());
    const Index p_eta = cfg.truth.free_count();
    const Index d = cfg.order().dim();
    auto eta_block = [&]() -> MatrixXd {
        const FreqGrid g = cfg.grid_e();
        if (cfg.weight == WeightKind::CAtEta) return sigma_eta(cfg.truth, g);
        return eta_sandwich_covariance(cfg.truth, g, MatrixXcd::Identity(g.size(), g.size()));
    };
    auto place = [&s](Index at, const MatrixXd& block) {
        s.block(at, 0, block.rows(), s.cols()).setZero();
        s.block(0, at, s.rows(), block.cols()).setZero();
        s.block(at, at, block.rows(), block.cols()) = block;
    };
    const std::string& a = cfg.algorithm;
    if (a == "alg1" || (a == "offline" && !cfg.is_system())) {
        place(0, eta_block());
        return s;
    }
    const MatrixXd rp = config_r_p(cfg);
    const MatrixXd pe = increment_variance(cfg.truth) * rp.inverse();
    if (a == "offline") {
        place(0, pe);
        return s;
    }
    MatrixXd ecf_theta = MatrixXd::Constant(d, d, std::numeric_limits<double>::quiet_NaN());
    if (cfg.weight == WeightKind::CAtEta) ecf_theta = sigma_theta(cfg.truth, cfg.grid_s(), rp);
    if (a == "alg2") {
        place(0, ecf_theta);
        return s;
    }
    place(0, pe);
    place(d, eta_block());
    place(d + p_eta, ecf_theta);
    return s;
}

RunResult run_estimator(const ExperimentConfig& cfg, const Eigen::Ref<const VectorXd>& data,
                        std::optional<Trajectory>* trajectory)
{
    RunResult r;
    r.estimate = truth_vector(cfg);
    try {
        if (cfg.algorithm == "offline") {
            OfflineFit fit = cfg.is_system()
                ? offline_pe(data, cfg.order(), cfg.theta0, cfg.domain.margin_delta)
                : offline_ecf_iid(data, cfg.truth, cfg.grid_e(), cfg.weight);
            r.estimate.values = fit.estimate;
            if (!fit.converged) {
                r.ok = false;
                r.error = "offline fit did not converge: " + fit.message;
            }
            r.offline = std::move(fit);
            return r;
        }
        const EstimatorSetup setup = cfg.estimator_setup();
        EstimatorState st = [&] {
            if (trajectory) {
                Trajectory t = run(setup, data);
                EstimatorState fs = t.final_state;
                *trajectory = std::move(t);
                return fs;
            }
            return run_final(setup, data);
        }();
        const Index d = cfg.order().dim();
        switch (setup.algorithm) {
        case Algorithm::Iid: r.estimate.values = st.eta(); break;
        case Algorithm::KnownNoise: r.estimate.values = st.theta_s(); break;
        case Algorithm::ThreeStage: {
            VectorXd v(2 * d + st.layout.eta_size());
            v << st.theta_p(), st.eta(), st.theta_s();
            r.estimate.values = v;
            break;
        }
        }
        r.reset_count = st.reset_count;
        r.ridge_events = st.ridge_events;
        r.state = std::move(st);
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
        r.estimate.values = VectorXd::Constant(r.estimate.names.size(), std::numeric_limits<double>::quiet_NaN());
    }
    return r;
}

MonteCarloStudy monte_carlo_study(const ExperimentConfig& cfg, Index n)
{
    if (cfg.replications < 2) throw ConfigError("Monte Carlo needs at least 2 replications");
    MonteCarloStudy st;
    st.n = n;
    const auto reps = static_cast<std::size_t>(cfg.replications);
    for (std::size_t r = 0; r < reps; ++r) st.seeds.push_back(cfg.same_seed ? cfg.seed : cfg.seed + r);
    st.runs.resize(reps);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t r = next++; r < reps; r = next++) {
            try {
                st.runs[r] = run_estimator(cfg, cfg.simulate_data(n, st.seeds[r]));
            } catch (const std::exception& e) {
                st.runs[r].estimate = truth_vector(cfg);
                st.runs[r].ok = false;
                st.runs[r].error = e.what();
            }
        }
    };
    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    const VectorXd truth = truth_vector(cfg).values;
    std::vector<VectorXd> errors;
    for (const RunResult& r : st.runs) {
        if (!r.ok) {
            ++st.failures;
            continue;
        }
        errors.push_back(r.estimate.values - truth);
        st.total_resets += r.reset_count;
        st.max_resets = std::max(st.max_resets, r.reset_count);
        if (r.reset_count > 0) ++st.runs_with_resets;
    }
    const Index d = truth.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    st.rmse = VectorXd::Constant(d, nan);
    st.n_cov = MatrixXd::Constant(d, d, nan);
    if (errors.size() >= 2) {
        MatrixXd e(d, static_cast<Index>(errors.size()));
        for (std::size_t k = 0; k < errors.size(); ++k) e.col(static_cast<Index>(k)) = errors[k];
        const double k = static_cast<double>(errors.size());
        st.rmse = (e.array().square().rowwise().sum() / k).sqrt();
        const MatrixXd c = e.colwise() - e.rowwise().mean();
        st.n_cov = static_cast<double>(n) * (c * c.transpose()) / (k - 1.0);
        st.n_cov = 0.5 * (st.n_cov + st.n_cov.transpose());
    }
    return st;
}

MonteCarloReport run_montecarlo(const ExperimentConfig& cfg)
{
    MonteCarloReport rep;
    const EstimateVector t = truth_vector(cfg);
    rep.names = t.names;
    rep.truth = t.values;
    rep.sigma = theoretical_sigma(cfg);
    rep.study = monte_carlo_study(cfg, cfg.n);
    rep.ratio = rep.study.n_cov.diagonal().cwiseQuotient(rep.sigma.diagonal());
    if (cfg.rate_check) {
        rep.study_4n = monte_carlo_study(cfg, 4 * cfg.n);
        rep.rmse_ratio = rep.study.rmse.cwiseQuotient(rep.study_4n->rmse);
    }
    return rep;
}

Json MonteCarloReport::to_json() const
{
    Json j;
    j["n"] = study.n;
    j["replications"] = study.runs.size();
    j["components"] = names;
    j["truth"] = named(names, truth);
    j["sigma_theory"] = mat_json(sigma);
    j["n_cov"] = mat_json(study.n_cov);
    j["ratio"] = named(names, ratio);
    j["rmse"] = named(names, study.rmse);
    j["resets"] = {{"runs_with_resets", study.runs_with_resets},
                   {"total", study.total_resets},
                   {"max", study.max_resets}};
    Json failures = Json::array();
    for (std::size_t r = 0; r < study.runs.size(); ++r)
        if (!study.runs[r].ok)
            failures.push_back({{"replication", r}, {"seed", study.seeds[r]}, {"error", study.runs[r].error}});
    j["failures"] = failures;
    if (study_4n) {
        j["rate_check"] = {{"n_4", study_4n->n},
                           {"rmse_4n", named(names, study_4n->rmse)},
                           {"rmse_ratio", named(names, rmse_ratio)},
                           {"failures_4n", study_4n->failures}};
    }
    return j;
}

OdeCheck run_ode_check(const ExperimentConfig& cfg)
{
    OdeCheck oc;
    const EstimatorSetup setup = cfg.estimator_setup();
    const StateLayout l = setup.layout();
    oc.names = l.component_names(free_names(cfg.truth));
    AssociatedOde ode;
    std::optional<SystemOde> sys;
    MatrixXd p_star;
    if (setup.algorithm == Algorithm::Iid) {
        ode = make_iid_ode(cfg.truth, setup);
        oc.x_star = VectorXd::Zero(l.size);
        oc.x_star.segment(l.eta, l.eta_size()) = cfg.truth.free_values();
        const FreqGrid g = setup.grid_e;
        const MatrixXcd phi = cf_jacobian(cfg.truth, g.u());
        const WeightMatrix k = make_weight(setup.weight_e, cfg.truth, g);
        r_e_block(oc.x_star, l) = weighted_gram(phi, k.inverse);
        oc.rhs_at_truth = ode.rhs(oc.x_star);
        oc.rhs_std_error = VectorXd::Zero(l.size);
    } else {
        FrozenPathOptions opts;
        opts.path_length = cfg.ode_path_length;
        opts.transient = cfg.ode_transient;
        opts.seed = cfg.ode_seed;
        sys.emplace(setup, cfg.truth, cfg.theta_true(), opts);
        ode = sys->ode();
        oc.x_star = sys->true_point();
        const RhsEstimate e = sys->rhs(oc.x_star);
        oc.rhs_at_truth = e.value;
        oc.rhs_std_error = e.std_error;
        const double worst = e.std_error.maxCoeff();
        if (worst > cfg.ode_noise_tol) {
            oc.noise_dominated = true;
            const double factor = std::ceil((worst / cfg.ode_noise_tol) * (worst / cfg.ode_noise_tol));
            oc.suggested_path_length = static_cast<Index>(factor) * cfg.ode_path_length;
        }
    }
    oc.jacobian = jacobian_at(ode, oc.x_star);
    oc.blocks = block_structure(oc.jacobian.jacobian, layout_blocks(l));
    p_star = sys ? p_star_system(*sys, oc.x_star)
                 : p_star_iid(oc.x_star, cfg.truth, setup, cfg.p_star_length, cfg.ode_seed);
    try {
        oc.lyapunov = lyapunov_solve(oc.jacobian.jacobian, p_star);
    } catch (const RateConditionError& e) {
        oc.lyapunov_error = e.what();
    }
    if (cfg.ode_t_end > 0.0) {
        const VectorXd x0 = initial_state(setup).x0;
        oc.path = integrate(ode, x0, 0.0, cfg.ode_t_end, cfg.ode_dt);
    }
    return oc;
}

Json OdeCheck::to_json() const
{
    Json j;
    j["dimension"] = x_star.size();
    j["components"] = names;
    j["x_star"] = vec_json(x_star);
    j["rhs_at_truth_max_abs"] = rhs_at_truth.cwiseAbs().maxCoeff();
    j["rhs_at_truth_norm"] = rhs_at_truth.norm();
    j["rhs_at_truth"] = vec_json(rhs_at_truth);
    j["rhs_std_error_max"] = rhs_std_error.size() ? rhs_std_error.maxCoeff() : 0.0;
    j["noise_dominated"] = noise_dominated;
    if (noise_dominated) j["suggested_path_length"] = suggested_path_length;
    Json ev = Json::array();
    for (Index k = 0; k < jacobian.eigenvalues.size(); ++k)
        ev.push_back({jacobian.eigenvalues(k).real(), jacobian.eigenvalues(k).imag()});
    j["eigenvalues"] = ev;
    j["jacobian_max_upper"] = blocks.max_upper;
    j["block_diag_error"] = blocks.diag_error;
    if (lyapunov) {
        j["lyapunov"] = {{"sigma", mat_json(lyapunov->sigma_xx)},
                         {"p_star", mat_json(lyapunov->p_star)},
                         {"residual", lyapunov->residual}};
    } else {
        j["lyapunov_error"] = lyapunov_error;
    }
    Json p;
    p["steps"] = path.states.empty() ? 0 : path.states.size() - 1;
    p["escaped"] = path.escaped;
    if (!path.states.empty()) p["final"] = vec_json(path.states.back());
    j["path"] = p;
    return j;
}

Json cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir)
{
    const auto dir = ensure_dir(out_dir);
    const VectorXd data = cfg.simulate_data(cfg.n, cfg.seed);
    write_data_csv((dir / "data.csv").string(), data);
    Json j;
    j["command"] = "simulate";
    j["file"] = "data.csv";
    j["n"] = cfg.n;
    j["seed"] = cfg.seed;
    j["family"] = to_string(cfg.truth.family);
    j["eta"] = named(parameter_names(cfg.truth.family), cfg.truth.eta);
    j["h"] = cfg.truth.h;
    j["ar"] = vec_json(cfg.ar);
    j["ma"] = vec_json(cfg.ma);
    j["config"] = cfg.raw;
    write_text(dir / "data.json", j.dump(2) + "\n");
    return j;
}

Json cmd_estimate(const ExperimentConfig& cfg, const std::string& data_path, const std::string& out_dir)
{
    const VectorXd data = read_data_csv(data_path);
    const auto dir = ensure_dir(out_dir);
    std::optional<Trajectory> traj;
    const bool recursive = cfg.algorithm != "offline";
    const RunResult r = run_estimator(cfg, data, recursive ? &traj : nullptr);
    if (!r.ok && !r.offline) throw std::runtime_error(r.error);

    Json j;
    j["command"] = "estimate";
    j["algorithm"] = cfg.algorithm;
    j["n"] = data.size();
    j["seed"] = cfg.seed;
    j["estimate"] = named(r.estimate.names, r.estimate.values);
    if (recursive) {
        j["reset_count"] = r.reset_count;
        j["ridge_events"] = r.ridge_events;
        Json resets = Json::array();
        for (const auto& rec : traj->records)
            if (rec.reset) resets.push_back(rec.n);
        j["reset_steps"] = resets;
        j["final_state"] = named(traj->names, r.state->x);
        j["trajectory_file"] = "trajectory.csv";

        std::string csv;
        std::vector<std::string> header{"n"};
        header.insert(header.end(), traj->names.begin(), traj->names.end());
        header.push_back("reset");
        csv += csv_row(header);
        const std::size_t last = traj->records.size();
        for (std::size_t k = 0; k < last; ++k) {
            const auto& rec = traj->records[k];
            if (rec.n % cfg.trajectory_stride != 0 && !rec.reset && k + 1 != last) continue;
            std::vector<std::string> row{std::to_string(rec.n)};
            for (Index c = 0; c < rec.x.size(); ++c) row.push_back(format_double(rec.x(c)));
            row.push_back(rec.reset ? "1" : "0");
            csv += csv_row(row);
        }
        write_text(dir / "trajectory.csv", csv);
    } else {
        j["objective"] = r.offline->objective;
        j["iterations"] = r.offline->iterations;
        j["converged"] = r.offline->converged;
        if (!r.offline->message.empty()) j["message"] = r.offline->message;
    }
    j["config"] = cfg.raw;
    write_text(dir / "summary.json", j.dump(2) + "\n");
    return j;
}

Json cmd_montecarlo(const ExperimentConfig& cfg, const std::string& out_dir)
{
    const auto dir = ensure_dir(out_dir);
    const MonteCarloReport rep = run_montecarlo(cfg);
    Json j;
    j["command"] = "montecarlo";
    j["algorithm"] = cfg.algorithm;
    j["seed"] = cfg.seed;
    const Json body = rep.to_json();
    for (const auto& item : body.items()) j[item.key()] = item.value();
    j["config"] = cfg.raw;
    write_text(dir / "report.json", j.dump(2) + "\n");

    std::vector<std::string> header{"replication", "seed", "ok", "reset_count"};
    header.insert(header.end(), rep.names.begin(), rep.names.end());
    std::string csv = csv_row(header);
    auto add_rows = [&](const MonteCarloStudy& st, const std::string& tag) {
        for (std::size_t r = 0; r < st.runs.size(); ++r) {
            std::vector<std::string> row{tag + std::to_string(r), std::to_string(st.seeds[r]),
                                         st.runs[r].ok ? "1" : "0", std::to_string(st.runs[r].reset_count)};
            for (Index c = 0; c < st.runs[r].estimate.values.size(); ++c)
                row.push_back(format_double(st.runs[r].estimate.values(c)));
            csv += csv_row(row);
        }
    };
    add_rows(rep.study, "");
    write_text(dir / "replications.csv", csv);
    if (rep.study_4n) {
        csv = csv_row(header);
        add_rows(*rep.study_4n, "");
        write_text(dir / "replications_4n.csv", csv);
    }

    std::vector<std::string> rh{"component", "truth", "sigma_theory", "n_cov", "ratio", "rmse"};
    if (rep.study_4n) {
        rh.push_back("rmse_4n");
        rh.push_back("rmse_ratio");
    }
    std::string table = csv_row(rh);
    for (std::size_t k = 0; k < rep.names.size(); ++k) {
        const auto c = static_cast<Index>(k);
        std::vector<std::string> row{rep.names[k], format_double(rep.truth(c)), format_double(rep.sigma(c, c)),
                                     format_double(rep.study.n_cov(c, c)), format_double(rep.ratio(c)),
                                     format_double(rep.study.rmse(c))};
        if (rep.study_4n) {
            row.push_back(format_double(rep.study_4n->rmse(c)));
            row.push_back(format_double(rep.rmse_ratio(c)));
        }
        table += csv_row(row);
    }
    write_text(dir / "ratios.csv", table);
    return j;
}

Json cmd_ode_check(const ExperimentConfig& cfg, const std::string& out_dir)
{
    if (cfg.algorithm == "offline") throw ConfigError("ode-check needs a recursive algorithm");
    const auto dir = ensure_dir(out_dir);
    const OdeCheck oc = run_ode_check(cfg);
    Json j;
    j["command"] = "ode-check";
    j["algorithm"] = cfg.algorithm;
    const Json body = oc.to_json();
    for (const auto& item : body.items()) j[item.key()] = item.value();
    j["config"] = cfg.raw;
    write_text(dir / "ode.json", j.dump(2) + "\n");

    std::string spectrum = csv_row({"index", "re", "im"});
    for (Index k = 0; k < oc.jacobian.eigenvalues.size(); ++k)
        spectrum += csv_row({std::to_string(k), format_double(oc.jacobian.eigenvalues(k).real()),
                             format_double(oc.jacobian.eigenvalues(k).imag())});
    write_text(dir / "spectrum.csv", spectrum);

    std::vector<std::string> header{"t"};
    header.insert(header.end(), oc.names.begin(), oc.names.end());
    std::string path = csv_row(header);
    for (std::size_t k = 0; k < oc.path.states.size(); ++k) {
        std::vector<std::string> row{format_double(oc.path.times[k])};
        for (Index c = 0; c < oc.path.states[k].size(); ++c) row.push_back(format_double(oc.path.states[k](c)));
        path += csv_row(row);
    }
    write_text(dir / "ode_path.csv", path);
    return j;
}

}  // namespace levyecf
