#include "levyecf/noise_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

namespace levyecf {

std::string to_string(NoiseFamily family)
{
    switch (family) {
    case NoiseFamily::Gaussian: return "gaussian";
    case NoiseFamily::VarianceGamma: return "variance_gamma";
    case NoiseFamily::NormalInverseGaussian: return "nig";
    }
    return "unknown";
}

NoiseFamily noise_family_from_string(const std::string& name)
{
    std::string key(name);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (key == "gaussian" || key == "normal") return NoiseFamily::Gaussian;
    if (key == "variance_gamma" || key == "vg") return NoiseFamily::VarianceGamma;
    if (key == "nig" || key == "normal_inverse_gaussian") return NoiseFamily::NormalInverseGaussian;
    throw ConfigError("unknown noise family '" + name + "'");
}

Index parameter_count(NoiseFamily family)
{
    switch (family) {
    case NoiseFamily::Gaussian: return 2;
    case NoiseFamily::VarianceGamma: return 3;
    case NoiseFamily::NormalInverseGaussian: return 4;
    }
    return 0;
}

std::vector<std::string> parameter_names(NoiseFamily family)
{
    switch (family) {
    case NoiseFamily::Gaussian: return {"mu", "sigma"};
    case NoiseFamily::VarianceGamma: return {"sigma", "nu", "theta"};
    case NoiseFamily::NormalInverseGaussian: return {"alpha", "beta", "delta", "mu"};
    }
    return {};
}

Index NoiseModel::free_count() const
{
    return free.empty() ? eta.size() : static_cast<Index>(free.size());
}

std::vector<Index> NoiseModel::free_indices() const
{
    if (!free.empty()) return free;
    std::vector<Index> all(static_cast<std::size_t>(eta.size()));
    std::iota(all.begin(), all.end(), Index{0});
    return all;
}

VectorXd NoiseModel::free_values() const
{
    const auto idx = free_indices();
    VectorXd out(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = eta(idx[k]);
    return out;
}

NoiseModel NoiseModel::with_free_values(const Eigen::Ref<const VectorXd>& values) const
{
    const auto idx = free_indices();
    if (values.size() != static_cast<Index>(idx.size()))
        throw ConfigError("free parameter vector has wrong length");
    NoiseModel out = *this;
    for (std::size_t k = 0; k < idx.size(); ++k) out.eta(idx[k]) = values(static_cast<Index>(k));
    return out;
}

NoiseModel make_gaussian(double mu, double sigma, double h)
{
    NoiseModel m{NoiseFamily::Gaussian, VectorXd(2), h, {}};
    m.eta << mu, sigma;
    validate(m);
    return m;
}

NoiseModel make_variance_gamma(double sigma, double nu, double theta, double h)
{
    NoiseModel m{NoiseFamily::VarianceGamma, VectorXd(3), h, {}};
    m.eta << sigma, nu, theta;
    validate(m);
    return m;
}

NoiseModel make_nig(double alpha, double beta, double delta, double mu, double h)
{
    NoiseModel m{NoiseFamily::NormalInverseGaussian, VectorXd(4), h, {}};
    m.eta << alpha, beta, delta, mu;
    validate(m);
    return m;
}

bool in_family_domain(NoiseFamily family, const Eigen::Ref<const VectorXd>& eta)
{
    if (eta.size() != parameter_count(family) || !eta.allFinite()) return false;
    switch (family) {
    case NoiseFamily::Gaussian: return eta(1) > 0.0;
    case NoiseFamily::VarianceGamma: return eta(0) > 0.0 && eta(1) > 0.0;
    case NoiseFamily::NormalInverseGaussian:
        return eta(0) > std::abs(eta(1)) && eta(2) > 0.0;
    }
    return false;
}

void validate(const NoiseModel& model)
{
    if (!(model.h > 0.0) || !std::isfinite(model.h))
        throw DomainError("sampling interval h must be positive");
    if (!in_family_domain(model.family, model.eta))
        throw DomainError("parameters outside the " + to_string(model.family) + " domain");
    for (Index j : model.free)
        if (j < 0 || j >= model.eta.size()) throw DomainError("free parameter index out of range");
}

namespace {

// Per-unit-time cumulant and its parameter gradient, scaled by h by the callers.
struct Cumulant {
    Complex value;
    Eigen::Matrix<Complex, Eigen::Dynamic, 1> grad;
};

Cumulant unit_cumulant(NoiseFamily family, const VectorXd& eta, double u, bool with_grad)
{
    Cumulant c;
    switch (family) {
    case NoiseFamily::Gaussian: {
        const double mu = eta(0), s = eta(1);
        c.value = Complex(-0.5 * u * u * s * s, u * mu);
        if (with_grad) {
            c.grad.resize(2);
            c.grad << Complex(0.0, u), Complex(-u * u * s, 0.0);
        }
        break;
    }
    case NoiseFamily::VarianceGamma: {
        const double s = eta(0), nu = eta(1), th = eta(2);
        // z = 1 - i u theta nu + sigma^2 nu u^2 / 2 has positive real part,
        // so the principal log is continuous in u.
        const Complex z(1.0 + 0.5 * s * s * nu * u * u, -u * th * nu);
        const Complex logz = std::log(z);
        c.value = -logz / nu;
        if (with_grad) {
            c.grad.resize(3);
            const Complex dz_dnu(0.5 * s * s * u * u, -u * th);
            c.grad << -(s * u * u) / z,
                logz / (nu * nu) - dz_dnu / (nu * z),
                Complex(0.0, u) / z;
        }
        break;
    }
    case NoiseFamily::NormalInverseGaussian: {
        const double a = eta(0), b = eta(1), d = eta(2), mu = eta(3);
        const double gamma = std::sqrt(a * a - b * b);
        const Complex bu(b, u);
        const Complex w = std::sqrt(a * a - bu * bu);  // Re(a^2 - (b+iu)^2) > 0
        c.value = Complex(0.0, u * mu) + d * (gamma - w);
        if (with_grad) {
            c.grad.resize(4);
            c.grad << d * (a / gamma - a / w),
                d * (-b / gamma + bu / w),
                Complex(gamma, 0.0) - w,
                Complex(0.0, u);
        }
        break;
    }
    }
    return c;
}

}  // namespace

Complex log_cf(const NoiseModel& model, double u)
{
    validate(model);
    return model.h * unit_cumulant(model.family, model.eta, u, false).value;
}

Complex cf(const NoiseModel& model, double u)
{
    if (u == 0.0) {
        validate(model);
        return Complex(1.0, 0.0);
    }
    return std::exp(log_cf(model, u));
}

VectorXcd cf(const NoiseModel& model, const Eigen::Ref<const VectorXd>& u)
{
    VectorXcd out(u.size());
    for (Index j = 0; j < u.size(); ++j) out(j) = cf(model, u(j));
    return out;
}

VectorXcd cf_grad_full(const NoiseModel& model, double u)
{
    validate(model);
    const Cumulant c = unit_cumulant(model.family, model.eta, u, true);
    const Complex phi = std::exp(model.h * c.value);
    return (model.h * phi) * c.grad;
}

VectorXcd cf_grad(const NoiseModel& model, double u)
{
    const VectorXcd full = cf_grad_full(model, u);
    const auto idx = model.free_indices();
    VectorXcd out(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = full(idx[k]);
    return out;
}

MatrixXcd cf_jacobian(const NoiseModel& model, const Eigen::Ref<const VectorXd>& u)
{
    MatrixXcd out(u.size(), model.free_count());
    for (Index j = 0; j < u.size(); ++j) out.row(j) = cf_grad(model, u(j)).transpose();
    return out;
}

IncrementSample sample(const NoiseModel& model, Index n, std::uint64_t seed)
{
    validate(model);
    if (n < 0) throw DomainError("sample length must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd values(n);
    const double h = model.h;
    const VectorXd& eta = model.eta;

    switch (model.family) {
    case NoiseFamily::Gaussian: {
        const double scale = eta(1) * std::sqrt(h);
        for (Index i = 0; i < n; ++i) values(i) = eta(0) * h + scale * normal(rng);
        break;
    }
    case NoiseFamily::VarianceGamma: {
        const double s = eta(0), nu = eta(1), th = eta(2);
        std::gamma_distribution<double> gamma(h / nu, nu);
        for (Index i = 0; i < n; ++i) {
            const double g = gamma(rng);
            values(i) = th * g + s * std::sqrt(g) * normal(rng);
        }
        break;
    }
    case NoiseFamily::NormalInverseGaussian: {
        const double a = eta(0), b = eta(1), dh = eta(2) * h, muh = eta(3) * h;
        const double m = dh / std::sqrt(a * a - b * b);  // IG mean
        const double lambda = dh * dh;                   // IG shape
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (Index i = 0; i < n; ++i) {
            const double nz = normal(rng);
            const double y = nz * nz;
            const double x = m + m * m * y / (2.0 * lambda)
                - m / (2.0 * lambda) * std::sqrt(4.0 * m * lambda * y + m * m * y * y);
            const double z = unif(rng) <= m / (m + x) ? x : m * m / x;
            values(i) = muh + b * z + std::sqrt(z) * normal(rng);
        }
        break;
    }
    }
    return IncrementSample{std::move(values), seed, model};
}

}  // namespace levyecf
