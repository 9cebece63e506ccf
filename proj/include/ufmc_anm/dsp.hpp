#ifndef UFMC_ANM_DSP_HPP
#define UFMC_ANM_DSP_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "ufmc_anm/config.hpp"

namespace ufmc
{

using Rng = std::mt19937_64;

/// Forward DFT of `x` zero-padded to `size` points:
/// X[k] = sum_n x[n] exp(-j 2 pi k n / size).
inline Eigen::VectorXcd zero_padded_fft(const Eigen::VectorXcd& x, int size)
{
    if (x.size() > size)
        throw InvalidInput("zero_padded_fft: input longer than transform size");
    Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(size);
    padded.head(x.size()) = x;
    Eigen::FFT<double> fft;
    Eigen::VectorXcd out(size);
    fft.fwd(out, padded);
    return out;
}

/// Inverse of zero_padded_fft without truncation (includes the 1/size factor).
inline Eigen::VectorXcd inverse_fft(const Eigen::VectorXcd& spectrum)
{
    Eigen::FFT<double> fft;
    Eigen::VectorXcd out(spectrum.size());
    fft.inv(out, spectrum);
    return out;
}

/// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline cplx complex_gaussian(Rng& rng, double variance)
{
    std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
    const double re = normal(rng);
    const double im = normal(rng);
    return {re, im};
}

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

///
/// Counter-based stream derivation: the generator for (seed, a, b, c) depends
/// only on those four integers, never on how many streams were created before
/// it. Monte Carlo trials use (seed, experiment tag, SNR index, trial index).
///
inline Rng derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                         std::uint64_t c = 0)
{
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ a);
    h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
    h = mix64(h ^ (c + 0x85157af5ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

/// Gray-mapped unit-energy QPSK: bit0 -> sign of I, bit1 -> sign of Q.
inline cplx qpsk_map(int bit0, int bit1) noexcept
{
    const double a = 1.0 / std::sqrt(2.0);
    return {bit0 ? -a : a, bit1 ? -a : a};
}

inline int qpsk_bit_errors(cplx decided_from, int bit0, int bit1) noexcept
{
    const int b0 = decided_from.real() < 0.0 ? 1 : 0;
    const int b1 = decided_from.imag() < 0.0 ? 1 : 0;
    return (b0 != bit0) + (b1 != bit1);
}

inline Eigen::VectorXcd random_qpsk(int count, Rng& rng)
{
    std::uniform_int_distribution<int> bit(0, 1);
    Eigen::VectorXcd out(count);
    for (int i = 0; i < count; ++i)
    {
        const int b0 = bit(rng);
        const int b1 = bit(rng);
        out[i] = qpsk_map(b0, b1);
    }
    return out;
}

/// Floor division for possibly negative numerators.
constexpr long long floor_div(long long a, long long b) noexcept
{
    long long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

} // namespace ufmc

#endif
