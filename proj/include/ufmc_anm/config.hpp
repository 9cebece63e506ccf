#ifndef UFMC_ANM_CONFIG_HPP
#define UFMC_ANM_CONFIG_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ufmc_anm/error.hpp"

namespace ufmc
{

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

/// How the data-fidelity weight of the atomic-norm problem is chosen.
struct LambdaRule
{
    enum class Kind
    {
        noise_scaled,  ///< sigma * sqrt(2N log 2N) on the data-fidelity term
        norm_weighted, ///< 1 / (2 sigma sqrt(2N log 2N)): the same rule read as a norm weight
        fixed          ///< constant `fixed_value`
    };
    Kind kind = Kind::fixed;
    double fixed_value = 1.0e-3;
    /// Used by the sigma-based rules when sigma is zero.
    double noiseless_fallback = 1.0e3;
};

///
/// Scenario parameters shared by every module. Times are in samples
/// (sampling interval 1) and the detection start is fixed at 0.
///
struct SystemConfig
{
    int N = 64;      ///< IDFT size; the receiver FFT has 2N points
    int B = 2;       ///< sub-bands, one per user
    int n_s = 16;    ///< subcarriers per sub-band
    int L = 6;       ///< FIR length
    double alpha_db = 120.0;
    int M = 100000;  ///< frame length in symbols
    std::vector<double> snr_db_list{0.0, 5.0, 10.0, 15.0, 20.0};
    LambdaRule lambda_rule{};
    std::uint64_t seed = 1;

    /// T_U: samples per UFMC symbol (IDFT output convolved with the filter).
    int symbol_length() const noexcept { return N + L - 1; }
    int fft_size() const noexcept { return 2 * N; }

    void validate() const
    {
        if (N < 1 || B < 1 || n_s < 1 || L < 1 || M < 1)
            throw InvalidParameter("N, B, n_s, L and M must all be >= 1");
        if (N < n_s * B)
            throw InvalidParameter("N must be at least n_s * B");
        if (L - 1 > N + 1)
            throw InvalidParameter("L must not exceed N + 2 (zero padding to 2N)");
        if (!(alpha_db > 0.0))
            throw InvalidParameter("alpha_db must be positive");
        if (snr_db_list.empty())
            throw InvalidParameter("snr_db_list must not be empty");
    }
};

} // namespace ufmc

#endif
