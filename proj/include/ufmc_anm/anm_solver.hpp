#ifndef UFMC_ANM_ANM_SOLVER_HPP
#define UFMC_ANM_ANM_SOLVER_HPP

///
/// \file anm_solver.hpp
///
/// Regularized atomic-norm problem
///
///   min_g ||g||_A + lambda ||Y - X .* g||^2
///
/// in its semidefinite form
///
///   min (1/4N) Tr(T) + t/2 + lambda ||Y - X .* g||^2
///   s.t. [[T, g], [g^H, t]] >= 0,  T Hermitian Toeplitz (2N x 2N),
///
/// solved by ADMM on the splitting Z = [[T(u), g], [g^H, t]]: closed-form
/// updates for (u, g, t), a PSD projection for Z, and residual balancing of
/// the penalty parameter.
///

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "ufmc_anm/config.hpp"
#include "ufmc_anm/waveform.hpp"

namespace ufmc
{

struct SolverParams
{
    double rho = 1.0;          ///< initial ADMM penalty
    double tolerance = 1e-6;   ///< on the normalized primal and dual residuals
    int max_iter = 5000;
    /// Residual balancing: rescale rho by `rho_scale` when one residual
    /// exceeds the other by `balance_ratio`.
    double balance_ratio = 10.0;
    double rho_scale = 2.0;
    bool record_history = false;
};

struct AnmProblem
{
    Eigen::VectorXcd Y; ///< observations, 2N bins
    Eigen::VectorXcd X; ///< known pilot spectrum, 2N bins
    double lambda = 1.0;
    SolverParams params{};
};

/// Hermitian Toeplitz matrix stored by its first column.
class HermitianToeplitz
{
public:
    HermitianToeplitz() = default;
    explicit HermitianToeplitz(Eigen::VectorXcd first_column)
        : column_(std::move(first_column))
    {
        if (column_.size() > 0)
            column_[0] = column_[0].real();
    }

    Eigen::Index size() const noexcept { return column_.size(); }
    const Eigen::VectorXcd& first_column() const noexcept { return column_; }

    cplx operator()(Eigen::Index r, Eigen::Index c) const
    {
        return r >= c ? column_[r - c] : std::conj(column_[c - r]);
    }

    double trace() const { return static_cast<double>(size()) * column_[0].real(); }

    Eigen::MatrixXcd dense() const
    {
        const Eigen::Index n = size();
        Eigen::MatrixXcd m(n, n);
        for (Eigen::Index c = 0; c < n; ++c)
            for (Eigen::Index r = 0; r < n; ++r)
                m(r, c) = (*this)(r, c);
        return m;
    }

private:
    Eigen::VectorXcd column_;
};

struct AnmSolution
{
    Eigen::VectorXcd g;
    HermitianToeplitz T;
    double t = 0.0;
    int iterations = 0;
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    double rho = 0.0; ///< penalty at exit
    double objective = 0.0;
    bool converged = false;
    /// Merit at the PSD-feasible iterate, one entry per iteration (only when
    /// SolverParams::record_history is set).
    std::vector<double> merit_history;
};

/// (1/4N) Tr(T) + t/2 + lambda ||Y - X .* g||^2 with 2N = T.size().
inline double anm_objective(const HermitianToeplitz& T, double t, const Eigen::VectorXcd& g,
                            const AnmProblem& problem)
{
    const double n = static_cast<double>(T.size());
    const double fit = (problem.Y - problem.X.cwiseProduct(g)).squaredNorm();
    return T.trace() / (2.0 * n) + t / 2.0 + problem.lambda * fit;
}

/// The bordered matrix [[T, g], [g^H, t]].
inline Eigen::MatrixXcd bordered_matrix(const HermitianToeplitz& T, const Eigen::VectorXcd& g,
                                        double t)
{
    const Eigen::Index n = T.size();
    Eigen::MatrixXcd m(n + 1, n + 1);
    m.topLeftCorner(n, n) = T.dense();
    m.topRightCorner(n, 1) = g;
    m.bottomLeftCorner(1, n) = g.adjoint();
    m(n, n) = t;
    return m;
}

///
/// Sum of |H_i| for a decomposition g = sum_i H_i e(tau_i); an upper bound on
/// the atomic norm. Throws InconsistentDecomposition when the atoms do not
/// reproduce g to `tolerance` (max-abs).
///
inline double atomic_norm_exact(const Eigen::VectorXcd& g,
                                std::span<const std::pair<cplx, double>> atoms,
                                double tolerance = 1e-9)
{
    Eigen::VectorXcd rebuilt = Eigen::VectorXcd::Zero(g.size());
    double norm = 0.0;
    for (const auto& [h, tau] : atoms)
    {
        rebuilt += h * build_steering_vector(tau, static_cast<int>(g.size())).values;
        norm += std::abs(h);
    }
    const double mismatch = g.size() > 0 ? (g - rebuilt).cwiseAbs().maxCoeff() : 0.0;
    if (mismatch > tolerance)
        throw InconsistentDecomposition("atomic_norm_exact: atoms do not reproduce g");
    return norm;
}

///
/// sigma * sqrt(2N ln 2N); `noiseless_fallback` when sigma is zero.
///
inline double default_lambda(double sigma, int N, double noiseless_fallback = 1.0e3)
{
    if (sigma < 0.0 || !std::isfinite(sigma))
        throw InvalidParameter("default_lambda: sigma must be finite and >= 0");
    if (N < 1)
        throw InvalidParameter("default_lambda: N must be >= 1");
    if (sigma == 0.0)
        return noiseless_fallback;
    const double n2 = 2.0 * N;
    return sigma * std::sqrt(n2 * std::log(n2));
}

inline double select_lambda(const LambdaRule& rule, double sigma, int N)
{
    if (rule.kind == LambdaRule::Kind::fixed)
    {
        if (!(rule.fixed_value > 0.0))
            throw InvalidParameter("lambda must be positive");
        return rule.fixed_value;
    }
    if (rule.kind == LambdaRule::Kind::norm_weighted)
    {
        if (sigma == 0.0)
            return rule.noiseless_fallback;
        return 1.0 / (2.0 * default_lambda(sigma, N));
    }
    return default_lambda(sigma, N, rule.noiseless_fallback);
}

namespace detail
{

///
/// Projection of a Hermitian matrix onto the PSD cone. The matrix is reduced
/// to a real symmetric tridiagonal form, and only the eigenvectors of the
/// smaller of the positive and non-positive parts are transformed back.
///
class PsdProjector
{
public:
    explicit PsdProjector(Eigen::Index n) : tri_(n), eig_(n) {}

    void project(const Eigen::MatrixXcd& m, Eigen::MatrixXcd& out)
    {
        const Eigen::Index n = m.rows();
        tri_.compute(m);
        eig_.computeFromTridiagonal(tri_.diagonal(), tri_.subDiagonal(), Eigen::ComputeEigenvectors);
        const Eigen::VectorXd& w = eig_.eigenvalues(); // ascending
        Eigen::Index first = 0;
        while (first < n && w[first] <= 0.0)
            ++first;
        const Eigen::Index positive = n - first;
        positive_count_ = positive;
        if (positive == 0)
        {
            out.setZero(n, n);
            return;
        }
        if (positive <= first)
        {
            basis_ = eig_.eigenvectors().rightCols(positive).cast<cplx>();
            basis_.applyOnTheLeft(tri_.matrixQ());
            scaled_ = basis_ * w.tail(positive).asDiagonal();
            out.noalias() = scaled_ * basis_.adjoint();
        }
        else
        {
            // m minus its negative part
            basis_ = eig_.eigenvectors().leftCols(first).cast<cplx>();
            basis_.applyOnTheLeft(tri_.matrixQ());
            scaled_ = basis_ * w.head(first).asDiagonal();
            out = m;
            out.noalias() -= scaled_ * basis_.adjoint();
        }
    }

    Eigen::Index positive_count() const noexcept { return positive_count_; }

private:
    Eigen::Tridiagonalization<Eigen::MatrixXcd> tri_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
    Eigen::MatrixXcd basis_, scaled_;
    Eigen::Index positive_count_ = 0;
};

inline double merit_at(const Eigen::MatrixXcd& z, const AnmProblem& problem)
{
    const Eigen::Index n = z.rows() - 1;
    const double trace = z.topLeftCorner(n, n).trace().real();
    const Eigen::VectorXcd g = z.topRightCorner(n, 1);
    const double fit = (problem.Y - problem.X.cwiseProduct(g)).squaredNorm();
    return trace / (2.0 * n) + z(n, n).real() / 2.0 + problem.lambda * fit;
}

} // namespace detail

inline AnmSolution solve(const AnmProblem& problem)
{
    const Eigen::Index n = problem.Y.size();
    if (n < 1 || problem.X.size() != n)
        throw InvalidInput("solve: Y and X must be non-empty and of equal length");
    if (!problem.Y.allFinite() || !problem.X.allFinite())
        throw InvalidInput("solve: non-finite observations or pilot spectrum");
    if (!(problem.lambda > 0.0) || !std::isfinite(problem.lambda))
        throw InvalidParameter("solve: lambda must be positive and finite");
    const SolverParams& prm = problem.params;
    if (!(prm.tolerance > 0.0) || !(prm.rho > 0.0) || prm.max_iter < 1)
        throw InvalidParameter("solve: tolerance, rho and max_iter must be positive");

    const double lambda = problem.lambda;
    const Eigen::VectorXcd xy = lambda * problem.X.conjugate().cwiseProduct(problem.Y);
    const Eigen::VectorXd xx = lambda * problem.X.cwiseAbs2();

    double rho = prm.rho;
    Eigen::MatrixXcd Z = Eigen::MatrixXcd::Zero(n + 1, n + 1);
    Eigen::MatrixXcd U = Eigen::MatrixXcd::Zero(n + 1, n + 1); // scaled dual
    Eigen::MatrixXcd Mx(n + 1, n + 1), W(n + 1, n + 1), Zprev(n + 1, n + 1);
    Eigen::VectorXcd u(n), g(n);
    double t = 0.0;
    detail::PsdProjector projector(n + 1);

    AnmSolution sol;
    if (prm.record_history)
        sol.merit_history.reserve(static_cast<std::size_t>(prm.max_iter));

    int it = 0;
    for (; it < prm.max_iter;)
    {
        ++it;
        W = Z - U;

        // Toeplitz generator: diagonal averages; the trace term shifts u0.
        for (Eigen::Index k = 0; k < n; ++k)
        {
            cplx acc = 0.0;
            for (Eigen::Index i = 0; i + k < n; ++i)
                acc += W(i + k, i) + std::conj(W(i, i + k));
            u[k] = acc / (2.0 * static_cast<double>(n - k));
        }
        u[0] = u[0].real() - 1.0 / (2.0 * rho * static_cast<double>(n));

        // g: per-bin weighted least squares against the border of W.
        for (Eigen::Index k = 0; k < n; ++k)
        {
            const cplx border = 0.5 * (W(k, n) + std::conj(W(n, k)));
            g[k] = (xy[k] + rho * border) / (xx[k] + rho);
        }
        t = W(n, n).real() - 1.0 / (2.0 * rho);

        for (Eigen::Index c = 0; c < n; ++c)
        {
            for (Eigen::Index r = c; r < n; ++r)
                Mx(r, c) = u[r - c];
            for (Eigen::Index r = 0; r < c; ++r)
                Mx(r, c) = std::conj(u[c - r]);
        }
        Mx.topRightCorner(n, 1) = g;
        Mx.bottomLeftCorner(1, n) = g.adjoint();
        Mx(n, n) = t;

        Zprev.swap(Z);
        W = Mx + U;
        projector.project(W, Z);
        U += Mx - Z;

        const double r_abs = (Mx - Z).norm();
        const double s_abs = rho * (Z - Zprev).norm();
        sol.primal_residual = r_abs / std::max({1.0, Mx.norm(), Z.norm()});
        sol.dual_residual = s_abs / std::max(1.0, rho * U.norm());
        if (prm.record_history)
            sol.merit_history.push_back(detail::merit_at(Z, problem));

        if (sol.primal_residual <= prm.tolerance && sol.dual_residual <= prm.tolerance)
        {
            sol.converged = true;
            break;
        }
        if (sol.primal_residual > prm.balance_ratio * sol.dual_residual)
        {
            rho *= prm.rho_scale;
            U /= prm.rho_scale;
        }
        else if (sol.dual_residual > prm.balance_ratio * sol.primal_residual)
        {
            rho /= prm.rho_scale;
            U *= prm.rho_scale;
        }
    }

    sol.g = g;
    sol.T = HermitianToeplitz(u);
    sol.t = t;
    sol.iterations = it;
    sol.rho = rho;
    sol.objective = anm_objective(sol.T, sol.t, sol.g, problem);
    return sol;
}

} // namespace ufmc

#endif
