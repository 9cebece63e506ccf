#ifndef UFMC_ANM_ESTIMATOR_HPP
#define UFMC_ANM_ESTIMATOR_HPP

///
/// \file estimator.hpp
///
/// From an atomic-norm solution to per-user timing offsets and channels:
/// matrix-pencil frequency extraction from the Toeplitz block, least-squares
/// channel fit, evaluation-time association, Timing Advance decisions, and a
/// single-peak correlation baseline.
///

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "ufmc_anm/anm_solver.hpp"
#include "ufmc_anm/config.hpp"
#include "ufmc_anm/waveform.hpp"

namespace ufmc
{

struct EstimationResult
{
    std::vector<double> taus;
    std::vector<double> delta_t_hats;
    std::vector<cplx> h_hats;
    std::vector<int> association; ///< estimate index matched to each user
    double residual_norm = 0.0;   ///< ||Y - X .* (E h)||
    double fit_residual = 0.0;    ///< ||g - E h||
    /// Estimate falls outside the configured prior |delta_t| < bound.
    std::vector<bool> outside_prior;
    bool no_signal = false;
    int solver_iterations = 0;
    bool solver_converged = false;
};

struct EstimatorOptions
{
    SolverParams solver{};
    double lambda = 1.0;
    /// Flag estimates with |delta_t| >= prior_bound; <= 0 disables the check.
    double prior_bound = 0.0;
};

///
/// Frequencies of a rank-`order` Hermitian Toeplitz matrix T = D D^H.
///
/// D is built from the top eigenpairs of T. With D_U (last row dropped) and
/// D_L (first row dropped), the eigenvalues of the pencil
/// (D_U^H D_L, D_U^H D_U) are exp(j 2 pi tau_i).
///
inline std::vector<double> matrix_pencil(const Eigen::MatrixXcd& T, int order)
{
    const Eigen::Index n = T.rows();
    if (T.cols() != n || n < 2)
        throw InvalidInput("matrix_pencil: T must be square with size >= 2");
    if (order < 1 || order > n - 1)
        throw InvalidParameter("matrix_pencil: model order must be in [1, size - 1]");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(T);
    const Eigen::VectorXd& w = eig.eigenvalues(); // ascending
    const double top = w[n - 1];
    int rank = 0;
    for (Eigen::Index i = n - 1; i >= 0 && top > 0.0 && w[i] >= 1e-12 * top; --i)
        ++rank;
    if (rank < order)
        throw RankDeficient("matrix_pencil: effective rank below model order", rank);

    const Eigen::MatrixXcd D = eig.eigenvectors().rightCols(order) *
                               w.tail(order).cwiseSqrt().asDiagonal();
    const Eigen::MatrixXcd DU = D.topRows(n - 1);
    const Eigen::MatrixXcd DL = D.bottomRows(n - 1);
    const Eigen::MatrixXcd A = DU.adjoint() * DL;
    const Eigen::MatrixXcd G = DU.adjoint() * DU;

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cond = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                                : std::numeric_limits<double>::infinity();
    Eigen::MatrixXcd pencil;
    if (cond > 1e10)
    {
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv[i] > 1e-10 * sv[0])
                inv[i] = 1.0 / sv[i];
        pencil = svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint() * A;
    }
    else
    {
        pencil = G.partialPivLu().solve(A);
    }

    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(pencil, false);
    std::vector<double> taus;
    taus.reserve(static_cast<std::size_t>(order));
    for (Eigen::Index i = 0; i < order; ++i)
    {
        const cplx d = ces.eigenvalues()[i];
        const cplx unit = std::abs(d) > 0.0 ? d / std::abs(d) : cplx(1.0, 0.0);
        taus.push_back(detail::wrap_unit_interval(std::arg(unit) / (2.0 * pi)));
    }
    std::sort(taus.begin(), taus.end());
    return taus;
}

inline std::vector<double> matrix_pencil(const HermitianToeplitz& T, int order)
{
    return matrix_pencil(T.dense(), order);
}

/// delta_t = -2N tau, wrapped into (-N, N].
inline double tau_to_delta_t(double tau, const SystemConfig& config)
{
    const double n2 = config.fft_size();
    double dt = -n2 * tau;
    dt -= n2 * std::ceil((dt - config.N) / n2);
    return dt;
}

struct ChannelFit
{
    std::vector<cplx> h;
    double residual = 0.0; ///< ||g - E h||
    double condition_number = 1.0;
};

///
/// h = (E^H E)^{-1} E^H g with E = [e(tau_1), ..., e(tau_B)].
/// Throws IllConditioned when cond(E^H E) >= 1e10.
///
inline ChannelFit ls_channels(std::span<const double> taus, const Eigen::VectorXcd& g_hat)
{
    const auto b = static_cast<Eigen::Index>(taus.size());
    const auto n = g_hat.size();
    if (b < 1 || n < b)
        throw InvalidInput("ls_channels: need 1 <= number of taus <= length of g");
    Eigen::MatrixXcd E(n, b);
    for (Eigen::Index i = 0; i < b; ++i)
        E.col(i) = build_steering_vector(taus[static_cast<std::size_t>(i)], static_cast<int>(n)).values;
    const Eigen::MatrixXcd gram = E.adjoint() * E;
    const Eigen::VectorXd sv = gram.jacobiSvd().singularValues();
    const double cond = sv[b - 1] > 0.0 ? sv[0] / sv[b - 1] : std::numeric_limits<double>::infinity();
    if (!(cond < 1e10))
        throw IllConditioned("ls_channels: steering vectors nearly collinear", cond);

    const Eigen::VectorXcd h = gram.ldlt().solve(E.adjoint() * g_hat);
    ChannelFit fit;
    fit.h.assign(h.data(), h.data() + b);
    fit.residual = (g_hat - E * h).norm();
    fit.condition_number = cond;
    return fit;
}

///
/// Permutation p minimizing sum_i (estimates[p[i]] - truth[i])^2, i.e. the
/// estimate assigned to user i is estimates[p[i]].
///
inline std::vector<int> associate(std::span<const double> estimates, std::span<const double> truth)
{
    if (estimates.size() != truth.size())
        throw InvalidInput("associate: length mismatch");
    const int b = static_cast<int>(truth.size());
    auto cost = [&](int user, int est) {
        const double d = estimates[static_cast<std::size_t>(est)] - truth[static_cast<std::size_t>(user)];
        return d * d;
    };
    std::vector<int> perm(static_cast<std::size_t>(b));
    std::iota(perm.begin(), perm.end(), 0);
    if (b <= 1)
        return perm;
    if (b == 2)
    {
        if (cost(0, 1) + cost(1, 0) < cost(0, 0) + cost(1, 1))
            std::swap(perm[0], perm[1]);
        return perm;
    }

    // Hungarian method (potentials), rows = users, columns = estimates.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> pu(static_cast<std::size_t>(b + 1), 0.0), pv(static_cast<std::size_t>(b + 1), 0.0);
    std::vector<int> match(static_cast<std::size_t>(b + 1), 0), way(static_cast<std::size_t>(b + 1), 0);
    for (int i = 1; i <= b; ++i)
    {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(b + 1), inf);
        std::vector<bool> used(static_cast<std::size_t>(b + 1), false);
        do
        {
            used[j0] = true;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= b; ++j)
            {
                if (used[j])
                    continue;
                const double cur = cost(i0 - 1, j - 1) - pu[i0] - pv[j];
                if (cur < minv[j])
                {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta)
                {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= b; ++j)
            {
                if (used[j])
                {
                    pu[match[j]] += delta;
                    pv[j] -= delta;
                }
                else
                {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do
        {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (int j = 1; j <= b; ++j)
        perm[match[j] - 1] = j - 1;
    return perm;
}

/// Flag i is set iff |delta_t_hats[i]| > threshold.
inline std::vector<bool> timing_advance_decision(std::span<const double> delta_t_hats, double threshold)
{
    if (!(threshold > 0.0))
        throw InvalidParameter("timing_advance_decision: threshold must be positive");
    std::vector<bool> out;
    out.reserve(delta_t_hats.size());
    for (double d : delta_t_hats)
        out.push_back(std::abs(d) > threshold);
    return out;
}

///
/// Joint TO and channel estimate of `order` users from one received frame.
/// Failures inside a stage are rethrown as EstimationError naming the stage.
///
inline EstimationResult joint_estimate(const ReceivedFrame& frame, const Eigen::VectorXcd& pilot_spectrum,
                                       const SystemConfig& config, const EstimatorOptions& options)
{
    const int order = config.B;
    EstimationResult res;
    if (frame.freq.size() != config.fft_size() || pilot_spectrum.size() != config.fft_size())
        throw EstimationError("input", "observation and pilot spectrum must have 2N bins");

    if (frame.freq.isZero(0.0))
    {
        res.no_signal = true;
        res.taus.assign(static_cast<std::size_t>(order), 0.0);
        res.delta_t_hats.assign(static_cast<std::size_t>(order), 0.0);
        res.h_hats.assign(static_cast<std::size_t>(order), cplx(0.0, 0.0));
        res.association.resize(static_cast<std::size_t>(order));
        std::iota(res.association.begin(), res.association.end(), 0);
        res.outside_prior.assign(static_cast<std::size_t>(order), false);
        return res;
    }

    AnmProblem problem{frame.freq, pilot_spectrum, options.lambda, options.solver};
    AnmSolution sol;
    try
    {
        sol = solve(problem);
    }
    catch (const Error& e)
    {
        throw EstimationError("solve", e.what());
    }
    res.solver_iterations = sol.iterations;
    res.solver_converged = sol.converged;

    try
    {
        res.taus = matrix_pencil(sol.T, order);
    }
    catch (const Error& e)
    {
        throw EstimationError("matrix_pencil", e.what());
    }

    ChannelFit fit;
    try
    {
        fit = ls_channels(res.taus, sol.g);
    }
    catch (const Error& e)
    {
        throw EstimationError("ls_channels", e.what());
    }
    res.h_hats = fit.h;
    res.fit_residual = fit.residual;

    Eigen::VectorXcd model = Eigen::VectorXcd::Zero(config.fft_size());
    for (int i = 0; i < order; ++i)
    {
        const double tau = res.taus[static_cast<std::size_t>(i)];
        res.delta_t_hats.push_back(tau_to_delta_t(tau, config));
        model += res.h_hats[static_cast<std::size_t>(i)] *
                 build_steering_vector(tau, config.fft_size()).values;
        res.outside_prior.push_back(options.prior_bound > 0.0 &&
                                    std::abs(res.delta_t_hats.back()) >= options.prior_bound);
    }
    res.residual_norm = (frame.freq - pilot_spectrum.cwiseProduct(model)).norm();
    res.association.resize(static_cast<std::size_t>(order));
    std::iota(res.association.begin(), res.association.end(), 0);
    return res;
}

///
/// Single-peak timing estimate: circular correlation (period T_U) of the
/// received window with the clean pilot over integer lags in
/// [min_lag, max_lag], argmax refined by a 3-point parabola.
///
inline double correlation_baseline(const Eigen::VectorXcd& received, const Eigen::VectorXcd& pilot,
                                   int min_lag, int max_lag)
{
    if (min_lag > max_lag)
        throw InvalidParameter("correlation_baseline: empty search range");
    if (received.size() != pilot.size() || received.size() == 0)
        throw InvalidInput("correlation_baseline: received and pilot must have equal non-zero length");
    const auto period = static_cast<long long>(pilot.size());
    if (max_lag - min_lag + 1 > period)
        throw InvalidParameter("correlation_baseline: search range exceeds the symbol period");

    auto corr = [&](long long lag) {
        cplx acc = 0.0;
        for (long long n = 0; n < period; ++n)
        {
            long long idx = (n - lag) % period;
            if (idx < 0)
                idx += period;
            acc += received[n] * std::conj(pilot[idx]);
        }
        return std::abs(acc);
    };

    std::vector<double> c;
    c.reserve(static_cast<std::size_t>(max_lag - min_lag + 1));
    for (int d = min_lag; d <= max_lag; ++d)
        c.push_back(corr(d));
    const auto best = static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
    const double lag = static_cast<double>(min_lag + best);

    // neighbours outside the range are evaluated directly
    const double left = best > 0 ? c[static_cast<std::size_t>(best - 1)] : corr(min_lag + best - 1);
    const double right = best + 1 < static_cast<int>(c.size()) ? c[static_cast<std::size_t>(best + 1)]
                                                               : corr(min_lag + best + 1);
    const double mid = c[static_cast<std::size_t>(best)];
    const double denom = left - 2.0 * mid + right;
    if (denom >= 0.0)
        return lag;
    const double offset = 0.5 * (left - right) / denom;
    return lag + std::clamp(offset, -0.5, 0.5);
}

} // namespace ufmc

#endif
