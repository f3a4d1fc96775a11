#include "levyecf/ecf_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace levyecf {

FreqGrid::FreqGrid(VectorXd u) : u_(std::move(u))
{
    if (u_.size() == 0) throw ConfigError("frequency grid is empty");
    for (Index j = 0; j < u_.size(); ++j) {
        if (!std::isfinite(u_(j))) throw ConfigError("frequency grid entry is not finite");
        if (u_(j) == 0.0) throw ConfigError("frequency grid entries must be nonzero");
        for (Index k = 0; k < j; ++k)
            if (u_(k) == u_(j)) throw ConfigError("frequency grid entries must be distinct");
    }
}

FreqGrid FreqGrid::equispaced(Index m, double u_max)
{
    if (m < 1 || !(u_max > 0.0)) throw ConfigError("equispaced grid needs m >= 1 and u_max > 0");
    VectorXd u(m);
    for (Index j = 0; j < m; ++j) u(j) = u_max * static_cast<double>(j + 1) / static_cast<double>(m);
    return FreqGrid(std::move(u));
}

FreqGrid FreqGrid::for_data(const Eigen::Ref<const VectorXd>& data, Index m)
{
    if (data.size() < 2) throw ConfigError("need at least two observations to size the grid");
    const double mean = data.mean();
    const double var = (data.array() - mean).square().sum() / static_cast<double>(data.size() - 1);
    if (!(var > 0.0)) throw ConfigError("data has zero variance; cannot size the grid");
    return equispaced(m, 2.0 / std::sqrt(var));
}

void require_identifiable(const FreqGrid& grid, const NoiseModel& model)
{
    if (grid.size() < model.free_count()) {
        std::ostringstream os;
        os << "grid has " << grid.size() << " frequencies but " << model.free_count()
           << " free noise parameters";
        throw IdentifiabilityError(os.str());
    }
}

std::string to_string(WeightKind kind)
{
    switch (kind) {
    case WeightKind::Identity: return "identity";
    case WeightKind::CAtEta: return "c";
    case WeightKind::Custom: return "custom";
    }
    return "unknown";
}

WeightKind weight_kind_from_string(const std::string& name)
{
    if (name == "identity") return WeightKind::Identity;
    if (name == "c" || name == "c_at_eta" || name == "optimal") return WeightKind::CAtEta;
    if (name == "custom") return WeightKind::Custom;
    throw ConfigError("unknown weight kind '" + name + "'");
}

namespace {

struct HermitianFactor {
    MatrixXcd value;
    MatrixXcd inverse;
    bool regularized = false;
};

HermitianFactor factor_hermitian(const MatrixXcd& c)
{
    const Index m = c.rows();
    if (c.cols() != m) throw NumericalError("weight matrix must be square");
    MatrixXcd herm = 0.5 * (c + c.adjoint());
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(herm);
    if (es.info() != Eigen::Success) throw NumericalError("Hermitian eigen-decomposition failed");
    VectorXd lambda = es.eigenvalues();

    HermitianFactor f;
    const double ridge = 1e-10 * herm.trace().real() / static_cast<double>(m);
    if (lambda.minCoeff() < ridge) {
        herm.diagonal().array() += ridge;
        lambda.array() += ridge;
        f.regularized = true;
    }
    const double lmax = lambda.maxCoeff();
    const double lmin = lambda.minCoeff();
    if (!(lmax > 0.0) || !(lmin > 1e-12 * lmax))
        throw NumericalError("matrix is not positive definite after regularization");
    f.inverse = es.eigenvectors() * lambda.cwiseInverse().cast<Complex>().asDiagonal()
        * es.eigenvectors().adjoint();
    f.value = std::move(herm);
    return f;
}

}  // namespace

WeightMatrix make_weight(WeightKind kind, const MatrixXcd& value)
{
    HermitianFactor f = factor_hermitian(value);
    return WeightMatrix{kind, std::move(f.value), std::move(f.inverse), f.regularized};
}

WeightMatrix make_weight(WeightKind kind, const NoiseModel& model, const FreqGrid& grid,
                         const MatrixXcd* custom)
{
    const Index m = grid.size();
    switch (kind) {
    case WeightKind::Identity:
        return WeightMatrix{kind, MatrixXcd::Identity(m, m), MatrixXcd::Identity(m, m), false};
    case WeightKind::CAtEta:
        return make_weight(kind, c_matrix_raw(model, grid));
    case WeightKind::Custom:
        if (custom == nullptr || custom->rows() != m || custom->cols() != m)
            throw ConfigError("custom weight must be an M x M matrix");
        return make_weight(kind, *custom);
    }
    throw ConfigError("unknown weight kind");
}

VectorXcd noise_score(double y, const VectorXcd& phi, const FreqGrid& grid)
{
    VectorXcd h(grid.size());
    for (Index j = 0; j < grid.size(); ++j) h(j) = std::polar(1.0, grid[j] * y) - phi(j);
    return h;
}

VectorXcd noise_score(double y, const NoiseModel& model, const FreqGrid& grid)
{
    return noise_score(y, cf(model, grid.u()), grid);
}

MatrixXcd c_matrix_raw(const NoiseModel& model, const FreqGrid& grid)
{
    const Index m = grid.size();
    const VectorXcd phi = cf(model, grid.u());
    MatrixXcd c(m, m);
    for (Index k = 0; k < m; ++k) {
        c(k, k) = Complex(1.0 - std::norm(phi(k)), 0.0);
        for (Index l = 0; l < k; ++l) {
            c(k, l) = cf(model, grid[k] - grid[l]) - phi(k) * std::conj(phi(l));
            c(l, k) = std::conj(c(k, l));
        }
    }
    return c;
}

MatrixXcd regularize_hermitian(const MatrixXcd& c, bool* regularized)
{
    HermitianFactor f = factor_hermitian(c);
    if (regularized != nullptr) *regularized = f.regularized;
    return f.value;
}

MatrixXcd c_matrix(const NoiseModel& model, const FreqGrid& grid, bool* regularized)
{
    return regularize_hermitian(c_matrix_raw(model, grid), regularized);
}

MatrixXcd pseudo_c_matrix(const NoiseModel& model, const FreqGrid& grid)
{
    const Index m = grid.size();
    const VectorXcd phi = cf(model, grid.u());
    MatrixXcd g(m, m);
    for (Index k = 0; k < m; ++k)
        for (Index l = 0; l <= k; ++l) {
            g(k, l) = cf(model, grid[k] + grid[l]) - phi(k) * phi(l);
            g(l, k) = g(k, l);
        }
    return g;
}

namespace {

MatrixXd checked_inverse(const MatrixXd& r, const char* what, const std::vector<std::string>& names)
{
    const MatrixXd sym = 0.5 * (r + r.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    const VectorXd& lambda = es.eigenvalues();
    const double lmax = lambda.cwiseAbs().maxCoeff();
    if (!(lmax > 0.0) || lambda.minCoeff() <= 1e-12 * lmax) {
        std::ostringstream os;
        os << what << " is rank deficient; deficient directions:";
        for (Index k = 0; k < lambda.size(); ++k) {
            if (lambda(k) > 1e-12 * lmax && lmax > 0.0) continue;
            os << " [";
            for (Index j = 0; j < sym.rows(); ++j) {
                if (j > 0) os << ", ";
                if (static_cast<std::size_t>(j) < names.size()) os << names[static_cast<std::size_t>(j)] << "=";
                os << es.eigenvectors()(j, k);
            }
            os << "]";
        }
        throw IdentifiabilityError(os.str());
    }
    return es.eigenvectors() * lambda.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

std::vector<std::string> free_names(const NoiseModel& model)
{
    const auto all = parameter_names(model.family);
    std::vector<std::string> out;
    for (Index j : model.free_indices()) out.push_back(all[static_cast<std::size_t>(j)]);
    return out;
}

}  // namespace

MatrixXd weighted_gram(const MatrixXcd& phi, const MatrixXcd& weight_inverse)
{
    const MatrixXd g = (phi.adjoint() * (weight_inverse * phi)).real();
    return 0.5 * (g + g.transpose());
}

MatrixXd sigma_eta(const NoiseModel& model, const FreqGrid& grid)
{
    require_identifiable(grid, model);
    const MatrixXcd phi_eta = cf_jacobian(model, grid.u());
    const WeightMatrix k = make_weight(WeightKind::CAtEta, model, grid);
    const MatrixXd info = weighted_gram(phi_eta, k.inverse);
    return checked_inverse(info, "Re(phi_eta^* C^{-1} phi_eta)", free_names(model));
}

double location_information(const NoiseModel& model, const FreqGrid& grid)
{
    const VectorXcd phi = cf(model, grid.u());
    VectorXcd psi(grid.size());
    for (Index j = 0; j < grid.size(); ++j) psi(j) = I_unit * grid[j] * phi(j);
    const WeightMatrix k = make_weight(WeightKind::CAtEta, model, grid);
    return weighted_gram(psi, k.inverse)(0, 0);
}

MatrixXd sigma_theta(const NoiseModel& model, const FreqGrid& grid, const MatrixXd& r_p)
{
    if (r_p.rows() != r_p.cols()) throw NumericalError("r_p must be square");
    Eigen::LLT<MatrixXd> llt(0.5 * (r_p + r_p.transpose()));
    if (llt.info() != Eigen::Success) throw NumericalError("r_p is not positive definite");
    const double s = location_information(model, grid);
    if (!(s > 0.0)) throw IdentifiabilityError("psi^* C^{-1} psi is not positive");
    return llt.solve(MatrixXd::Identity(r_p.rows(), r_p.cols())) / s;
}

MatrixXd eta_sandwich_covariance(const NoiseModel& model, const FreqGrid& grid,
                                 const MatrixXcd& weight_inverse)
{
    require_identifiable(grid, model);
    const MatrixXcd phi_eta = cf_jacobian(model, grid.u());
    const MatrixXcd c = c_matrix_raw(model, grid);
    const MatrixXcd g = pseudo_c_matrix(model, grid);
    const MatrixXcd a = weight_inverse * phi_eta;
    const MatrixXd r = (phi_eta.adjoint() * a).real();
    // Cov(Re(a_j^* h), Re(a_k^* h)) = Re(a_j^* C a_k + a_j^* G conj(a_k)) / 2
    const MatrixXd p = 0.5 * (a.adjoint() * c * a + a.adjoint() * g * a.conjugate()).real();
    const MatrixXd r_inv = checked_inverse(r, "Re(phi_eta^* K^{-1} phi_eta)", free_names(model));
    const MatrixXd s = r_inv * p * r_inv;
    return 0.5 * (s + s.transpose());
}

MatrixXcd kron_weight(const MatrixXcd& c, const MatrixXd& r_p)
{
    Eigen::SelfAdjointEigenSolver<MatrixXcd> ec(0.5 * (c + c.adjoint()), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<MatrixXd> er(0.5 * (r_p + r_p.transpose()), Eigen::EigenvaluesOnly);
    if (ec.eigenvalues().minCoeff() <= 0.0 || er.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError("Kronecker weight factors must be positive definite");
    MatrixXcd k = Eigen::kroneckerProduct(c, r_p.cast<Complex>());
    return k;
}

VectorXcd kron_apply(const MatrixXcd& a_inverse, const MatrixXd& b_inverse, const VectorXcd& v)
{
    const Index p = b_inverse.rows();
    const Index m = a_inverse.rows();
    if (v.size() != p * m) throw NumericalError("kron_apply: dimension mismatch");
    Eigen::Map<const MatrixXcd> blocks(v.data(), p, m);
    MatrixXcd out = b_inverse.cast<Complex>() * blocks * a_inverse.transpose();
    return Eigen::Map<const VectorXcd>(out.data(), p * m);
}

}  // namespace levyecf
