#ifndef UFMC_ANM_WAVEFORM_HPP
#define UFMC_ANM_WAVEFORM_HPP

///
/// \file waveform.hpp
///
/// UFMC transmitter, flat-fading multi-user channel, 2N-point receiver front
/// end and the timing-offset interference diagnostics.
///
/// All times are in samples with the detection window starting at 0. A UFMC
/// symbol occupies T_U = N + L - 1 samples and symbols are placed back to back
/// without a guard interval.
///

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ufmc_anm/config.hpp"
#include "ufmc_anm/dsp.hpp"

namespace ufmc
{

struct SubbandFilter
{
    int subband_index = 1;          ///< 1-based
    Eigen::VectorXd prototype;      ///< real symmetric window, unit energy
    Eigen::VectorXcd taps;          ///< prototype modulated to the sub-band centre
    Eigen::VectorXcd freq_response; ///< 2N-point DFT of the zero-padded taps
    double center_frequency = 0.0;  ///< cycles per sample
};

/// One UFMC symbol: row b holds the n_s subcarrier values of sub-band b+1.
/// A zero row is an idle sub-band.
struct UfmcSymbol
{
    Eigen::MatrixXcd values;

    static UfmcSymbol idle(const SystemConfig& config)
    {
        return {Eigen::MatrixXcd::Zero(config.B, config.n_s)};
    }
};

using SymbolStream = std::vector<UfmcSymbol>;

/// Symbols of every user; `users[i][m]` is symbol m of user i.
struct SymbolFrame
{
    std::vector<SymbolStream> users;
    std::vector<bool> is_pilot; ///< per symbol index
};

struct ChannelRealization
{
    Eigen::VectorXcd h;       ///< flat coefficient per user
    Eigen::VectorXd delta_t;  ///< timing offset per user, samples
};

struct ReceivedFrame
{
    Eigen::VectorXcd time;  ///< N + L - 1 samples
    Eigen::VectorXcd freq;  ///< 2N bins
    double noise_variance = 0.0;
};

struct InterferenceTerms
{
    Eigen::VectorXcd interference; ///< I+ (delta_t > 0) or I- (delta_t < 0), 2N bins
    Eigen::VectorXcd useful;       ///< X .* e_{delta_t}
    Eigen::VectorXcd received;     ///< FFT of the zero-padded detection window
    double eta_db = std::numeric_limits<double>::infinity();
};

struct SteeringVector
{
    Eigen::VectorXcd values;
    double tau = 0.0;     ///< after wrapping
    bool wrapped = false; ///< input was outside [-1/2, 1/2)
};

namespace detail
{

/// Chebyshev polynomial T_n(x) for any real x.
inline double chebyshev_poly(int n, double x)
{
    if (std::abs(x) <= 1.0)
        return std::cos(n * std::acos(x));
    if (x > 1.0)
        return std::cosh(n * std::acosh(x));
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    return sign * std::cosh(n * std::acosh(-x));
}

inline double wrap_unit_interval(double tau)
{
    double w = tau - std::floor(tau + 0.5);
    if (w >= 0.5)
        w -= 1.0;
    return w;
}

} // namespace detail

///
/// Dolph-Chebyshev window of the given length with side lobes `alpha_db`
/// below the main lobe, normalized to unit peak.
///
/// Built by sampling the window's spectrum T_{L-1}(x0 cos(pi k / L)) at L
/// points and transforming back.
///
inline Eigen::VectorXd chebyshev_window(int length, double alpha_db)
{
    if (length < 1)
        throw InvalidParameter("chebyshev_window: length must be >= 1");
    if (!(alpha_db > 0.0))
        throw InvalidParameter("chebyshev_window: alpha_db must be positive");
    if (length == 1)
        return Eigen::VectorXd::Ones(1);

    const int order = length - 1;
    const double ripple = std::pow(10.0, alpha_db / 20.0);
    const double x0 = std::cosh(std::acosh(ripple) / order);

    std::vector<cplx> spectrum(length);
    for (int k = 0; k < length; ++k)
    {
        const double p = detail::chebyshev_poly(order, x0 * std::cos(pi * k / length));
        spectrum[k] = (length % 2 == 1) ? cplx(p, 0.0)
                                        : p * std::polar(1.0, pi * k / length);
    }
    // Direct DFT: lengths are small and this keeps the window independent of
    // any FFT size restriction.
    std::vector<double> w(length);
    for (int n = 0; n < length; ++n)
    {
        cplx acc = 0.0;
        for (int k = 0; k < length; ++k)
            acc += spectrum[k] * std::polar(1.0, -2.0 * pi * k * n / length);
        w[n] = acc.real();
    }

    Eigen::VectorXd out(length);
    if (length % 2 == 1)
    {
        const int half = (length + 1) / 2;
        for (int i = 0; i < half; ++i)
        {
            out[half - 1 - i] = w[i];
            out[half - 1 + i] = w[i];
        }
    }
    else
    {
        const int half = length / 2 + 1;
        // [w[half-1], ..., w[1], w[1], ..., w[half-1]]
        int pos = 0;
        for (int i = half - 1; i >= 1; --i)
            out[pos++] = w[i];
        for (int i = 1; i < half; ++i)
            out[pos++] = w[i];
    }
    return out / out.maxCoeff();
}

///
/// Peak-to-highest-side-lobe ratio of a real window's DTFT, in dB, measured on
/// a grid of `grid` points over [0, pi]. The main lobe ends at the first local
/// minimum of the magnitude. Returns +inf when the window has no side lobe.
///
inline double sidelobe_attenuation_db(const Eigen::VectorXd& window, int grid = 1 << 14)
{
    std::vector<double> mag(grid + 1);
    for (int g = 0; g <= grid; ++g)
    {
        const double w = pi * g / grid;
        cplx acc = 0.0;
        for (Eigen::Index n = 0; n < window.size(); ++n)
            acc += window[n] * std::polar(1.0, -w * static_cast<double>(n));
        mag[g] = std::abs(acc);
    }
    int edge = 1;
    while (edge < grid && mag[edge + 1] < mag[edge])
        ++edge;
    if (edge >= grid)
        return std::numeric_limits<double>::infinity();
    const double side = *std::max_element(mag.begin() + edge, mag.end());
    if (side <= 0.0)
        return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(mag[0] / side);
}

///
/// Energy-normalizes `prototype` and modulates it to the centre of sub-band
/// `subband_index`, ((i - 1) n_s + n_s / 2) / N cycles per sample.
///
inline SubbandFilter make_subband_filter(const Eigen::VectorXd& prototype, int subband_index,
                                         const SystemConfig& config)
{
    if (prototype.size() < 1)
        throw InvalidParameter("make_subband_filter: empty prototype");
    if (subband_index < 1 || subband_index > config.B)
        throw InvalidParameter("make_subband_filter: subband_index must be in [1, B]");
    if (prototype.size() != config.L)
        throw InvalidParameter("make_subband_filter: prototype length must equal L");

    SubbandFilter f;
    f.subband_index = subband_index;
    f.prototype = prototype / prototype.norm();
    f.center_frequency =
        ((subband_index - 1) * config.n_s + config.n_s / 2.0) / static_cast<double>(config.N);
    f.taps.resize(prototype.size());
    for (Eigen::Index l = 0; l < prototype.size(); ++l)
        f.taps[l] = f.prototype[l] * std::polar(1.0, 2.0 * pi * f.center_frequency * l);
    f.freq_response = zero_padded_fft(f.taps, config.fft_size());
    return f;
}

inline SubbandFilter design_chebyshev_filter(int L, double alpha_db, int subband_index,
                                             const SystemConfig& config)
{
    if (L < 1 || !(alpha_db > 0.0))
        throw InvalidParameter("design_chebyshev_filter: need L >= 1 and alpha_db > 0");
    if (L != config.L)
        throw InvalidParameter("design_chebyshev_filter: L differs from config.L");
    return make_subband_filter(chebyshev_window(L, alpha_db), subband_index, config);
}

/// One Chebyshev filter per sub-band, index 0 = sub-band 1.
inline std::vector<SubbandFilter> design_filter_bank(const SystemConfig& config)
{
    std::vector<SubbandFilter> bank;
    bank.reserve(config.B);
    for (int i = 1; i <= config.B; ++i)
        bank.push_back(design_chebyshev_filter(config.L, config.alpha_db, i, config));
    return bank;
}

/// Same bank with an all-ones (rectangular) prototype.
inline std::vector<SubbandFilter> rectangular_filter_bank(const SystemConfig& config)
{
    std::vector<SubbandFilter> bank;
    for (int i = 1; i <= config.B; ++i)
        bank.push_back(make_subband_filter(Eigen::VectorXd::Ones(config.L), i, config));
    return bank;
}

///
/// Partial IDFT of one sub-band evaluated at real time `t`:
/// sum_q symbols[q] exp(j 2 pi k t / N), k = (i - 1) n_s + q.
/// Zero outside [0, N).
///
inline cplx eval_subcarrier_sum(std::span<const cplx> symbols, int subband_index, double t,
                                const SystemConfig& config)
{
    if (!(t >= 0.0) || t >= config.N)
        return 0.0;
    const int first = (subband_index - 1) * config.n_s;
    cplx acc = 0.0;
    for (std::size_t q = 0; q < symbols.size(); ++q)
    {
        const double k = static_cast<double>(first + static_cast<int>(q));
        acc += symbols[q] * std::polar(1.0, 2.0 * pi * k * t / config.N);
    }
    return acc;
}

namespace detail
{

/// Sub-band IDFT sampled on the shifted grid p + frac, p = 0..N-1.
inline Eigen::VectorXcd shifted_subband_idft(const Eigen::Ref<const Eigen::VectorXcd>& symbols,
                                             int subband_index, double frac,
                                             const SystemConfig& config)
{
    const int N = config.N;
    const int first = (subband_index - 1) * config.n_s;
    Eigen::VectorXcd rotated(symbols.size());
    for (Eigen::Index q = 0; q < symbols.size(); ++q)
        rotated[q] = symbols[q] * std::polar(1.0, 2.0 * pi * (first + q) * frac / N);

    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(N);
    for (int p = 0; p < N; ++p)
    {
        cplx acc = 0.0;
        for (Eigen::Index q = 0; q < symbols.size(); ++q)
        {
            const long long r = ((first + q) * static_cast<long long>(p)) % N;
            acc += rotated[q] * std::polar(1.0, 2.0 * pi * static_cast<double>(r) / N);
        }
        out[p] = acc;
    }
    return out;
}

inline void accumulate_convolution(const Eigen::VectorXcd& samples, const Eigen::VectorXcd& taps,
                                   Eigen::VectorXcd& out)
{
    for (Eigen::Index n = 0; n < samples.size(); ++n)
        for (Eigen::Index l = 0; l < taps.size(); ++l)
            out[n + l] += taps[l] * samples[n];
}

/// Samples x(j + frac), j = 0..T_U-1, of one UFMC symbol.
inline Eigen::VectorXcd synthesize_fractional(const UfmcSymbol& symbol,
                                              const std::vector<SubbandFilter>& filters,
                                              double frac, const SystemConfig& config)
{
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(config.symbol_length());
    for (int b = 0; b < config.B; ++b)
    {
        if (symbol.values.row(b).isZero(0.0))
            continue;
        const Eigen::VectorXcd row = symbol.values.row(b).transpose();
        accumulate_convolution(shifted_subband_idft(row, b + 1, frac, config), filters[b].taps,
                               out);
    }
    return out;
}

} // namespace detail

///
/// x[n] = sum_l f[l] s(n - l), n = 0..N+L-2: the N IDFT samples of one
/// sub-band linearly convolved with its filter.
///
inline Eigen::VectorXcd synthesize_symbol(std::span<const cplx> symbols,
                                          const SubbandFilter& filter,
                                          const SystemConfig& config)
{
    if (filter.taps.size() != config.L)
        throw InvalidInput("synthesize_symbol: filter length differs from config.L");
    Eigen::VectorXcd s(config.N);
    for (int n = 0; n < config.N; ++n)
        s[n] = eval_subcarrier_sum(symbols, filter.subband_index, n, config);
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(config.symbol_length());
    detail::accumulate_convolution(s, filter.taps, out);
    return out;
}

/// Sum of all active sub-bands of a UFMC symbol.
inline Eigen::VectorXcd synthesize_symbol(const UfmcSymbol& symbol,
                                          const std::vector<SubbandFilter>& filters,
                                          const SystemConfig& config)
{
    return detail::synthesize_fractional(symbol, filters, 0.0, config);
}

/// Continuous-time waveform of one UFMC symbol, supported on [0, T_U).
inline cplx eval_symbol(const UfmcSymbol& symbol, const std::vector<SubbandFilter>& filters,
                        double t, const SystemConfig& config)
{
    cplx acc = 0.0;
    for (int b = 0; b < config.B; ++b)
    {
        const Eigen::VectorXcd row = symbol.values.row(b).transpose();
        std::span<const cplx> values(row.data(), static_cast<std::size_t>(row.size()));
        for (Eigen::Index l = 0; l < filters[b].taps.size(); ++l)
            acc += filters[b].taps[l] *
                   eval_subcarrier_sum(values, b + 1, t - static_cast<double>(l), config);
    }
    return acc;
}

///
/// Back-to-back symbol stream sum_m x_m(t - delta_t - m T_U), evaluated
/// exactly at one real time instant.
///
inline cplx eval_delayed_stream(std::span<const UfmcSymbol> stream,
                                const std::vector<SubbandFilter>& filters, double t,
                                double delta_t, const SystemConfig& config)
{
    const double tau = t - delta_t;
    const int tu = config.symbol_length();
    const double m = std::floor(tau / tu);
    if (m < 0.0 || m >= static_cast<double>(stream.size()))
        return 0.0;
    const auto index = static_cast<std::size_t>(m);
    return eval_symbol(stream[index], filters, tau - m * tu, config);
}

inline cplx eval_delayed_stream(const SymbolFrame& frame, int user,
                                const std::vector<SubbandFilter>& filters, double t,
                                double delta_t, const SystemConfig& config)
{
    return eval_delayed_stream(std::span<const UfmcSymbol>(frame.users.at(user)), filters, t,
                               delta_t, config);
}

///
/// `count` consecutive samples t = window_start + n of the delayed stream.
/// Same values as eval_delayed_stream, but each symbol's waveform is computed
/// once on the shifted sampling grid.
///
inline Eigen::VectorXcd sample_delayed_window(std::span<const UfmcSymbol> stream,
                                              const std::vector<SubbandFilter>& filters,
                                              double window_start, double delta_t,
                                              const SystemConfig& config, int count = -1)
{
    const int tu = config.symbol_length();
    if (count < 0)
        count = tu;
    const double origin = window_start - delta_t;
    const double base_real = std::floor(origin);
    const double frac = origin - base_real;
    const auto base = static_cast<long long>(base_real);

    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(count);
    const long long first = std::max<long long>(0, floor_div(base, tu));
    const long long last =
        std::min<long long>(static_cast<long long>(stream.size()) - 1, floor_div(base + count - 1, tu));
    for (long long m = first; m <= last; ++m)
    {
        const Eigen::VectorXcd xm =
            detail::synthesize_fractional(stream[static_cast<std::size_t>(m)], filters, frac, config);
        const long long lo = std::max<long long>(0, m * tu - base);
        const long long hi = std::min<long long>(count, (m + 1) * tu - base);
        for (long long n = lo; n < hi; ++n)
            out[n] = xm[base + n - m * tu];
    }
    return out;
}

/// Pilot symbol carrying the same n_s values on every sub-band, scaled by
/// 1/sqrt(B) so that its average power equals that of a one-sub-band data
/// symbol.
inline UfmcSymbol make_pilot_symbol(std::span<const cplx> pilot, const SystemConfig& config)
{
    if (static_cast<int>(pilot.size()) != config.n_s)
        throw InvalidInput("make_pilot_symbol: pilot must have n_s values");
    UfmcSymbol s = UfmcSymbol::idle(config);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.B));
    for (int b = 0; b < config.B; ++b)
        for (int q = 0; q < config.n_s; ++q)
            s.values(b, q) = scale * pilot[q];
    return s;
}

/// Fixed pseudo-random QPSK pilot sequence of length n_s.
inline Eigen::VectorXcd default_pilot(const SystemConfig& config)
{
    Rng rng = derive_stream(0x7069'6c6f'7400ULL, static_cast<std::uint64_t>(config.n_s));
    return random_qpsk(config.n_s, rng);
}

///
/// y[n] = sum_i H_i w_i[n] + noise, where w_i already carries user i's timing
/// offset. Noise is circularly-symmetric complex Gaussian with variance
/// `sigma2` per sample.
///
inline Eigen::VectorXcd apply_channel_and_noise(const std::vector<Eigen::VectorXcd>& windows,
                                                const ChannelRealization& channel, double sigma2,
                                                Rng& rng)
{
    if (windows.empty())
        throw InvalidInput("apply_channel_and_noise: no user windows");
    if (static_cast<Eigen::Index>(windows.size()) != channel.h.size())
        throw InvalidInput("apply_channel_and_noise: one channel coefficient per user required");
    const Eigen::Index len = windows.front().size();
    for (const auto& w : windows)
        if (w.size() != len)
            throw InvalidInput("apply_channel_and_noise: mismatched window lengths");
    if (sigma2 < 0.0)
        throw InvalidParameter("apply_channel_and_noise: negative noise variance");

    Eigen::VectorXcd y = Eigen::VectorXcd::Zero(len);
    for (std::size_t i = 0; i < windows.size(); ++i)
        y += channel.h[static_cast<Eigen::Index>(i)] * windows[i];
    if (sigma2 > 0.0)
        for (Eigen::Index n = 0; n < len; ++n)
            y[n] += complex_gaussian(rng, sigma2);
    return y;
}

/// Zero-pads the N + L - 1 window to 2N samples and transforms it.
inline ReceivedFrame receiver_front_end(const Eigen::VectorXcd& samples, const SystemConfig& config,
                                        double noise_variance = 0.0)
{
    if (samples.size() != config.symbol_length())
        throw InvalidInput("receiver_front_end: expected N + L - 1 samples");
    ReceivedFrame frame;
    frame.time = samples;
    frame.freq = zero_padded_fft(samples, config.fft_size());
    frame.noise_variance = noise_variance;
    return frame;
}

///
/// e(tau)[n] = exp(j 2 pi n tau), n = 0..size-1. Out-of-range tau is wrapped
/// into [-1/2, 1/2) and reported through `wrapped`.
///
inline SteeringVector build_steering_vector(double tau, int size)
{
    SteeringVector sv;
    sv.tau = detail::wrap_unit_interval(tau);
    sv.wrapped = !(tau >= -0.5 && tau < 0.5);
    sv.values.resize(size);
    for (int n = 0; n < size; ++n)
        sv.values[n] = std::polar(1.0, 2.0 * pi * n * sv.tau);
    return sv;
}

/// Phase ramp e_{delta_t}[k] = exp(-j 2 pi k delta_t / 2N) on the 2N grid.
inline Eigen::VectorXcd delay_ramp(double delta_t, const SystemConfig& config)
{
    const int n = config.fft_size();
    Eigen::VectorXcd e(n);
    for (int k = 0; k < n; ++k)
        e[k] = std::polar(1.0, -2.0 * pi * k * delta_t / n);
    return e;
}

/// Repeats one symbol `count` times.
inline SymbolStream repeated_stream(const UfmcSymbol& symbol, int count)
{
    return SymbolStream(static_cast<std::size_t>(count), symbol);
}

///
/// TO interference of a repeated symbol. The detection window (middle of
/// three repetitions) is zero-padded to 2N and transformed; the useful part is
/// X .* e_{delta_t} with X the spectrum of the un-delayed symbol, and the
/// interference is the time-domain difference between the window and the
/// 2N-periodic shift of the symbol, transformed. For integer delta_t that
/// difference is the wrapped head minus the pushed-out tail (delta_t > 0) or
/// the mirror image (delta_t < 0).
///
inline InterferenceTerms interference_terms(const UfmcSymbol& pilot,
                                            const std::vector<SubbandFilter>& filters,
                                            double delta_t, const SystemConfig& config)
{
    const int tu = config.symbol_length();
    const int nfft = config.fft_size();
    const SymbolStream stream = repeated_stream(pilot, 3);
    if (delta_t == 0.0)
    {
        InterferenceTerms out;
        out.received = zero_padded_fft(synthesize_symbol(pilot, filters, config), nfft);
        out.useful = out.received;
        out.interference = Eigen::VectorXcd::Zero(nfft);
        return out;
    }

    Eigen::VectorXcd window(tu);
    for (int n = 0; n < tu; ++n)
        window[n] = eval_delayed_stream(std::span<const UfmcSymbol>(stream), filters,
                                        static_cast<double>(tu + n), delta_t, config);

    InterferenceTerms out;
    const Eigen::VectorXcd X = zero_padded_fft(synthesize_symbol(pilot, filters, config), nfft);
    out.useful = X.cwiseProduct(delay_ramp(delta_t, config));
    out.received = zero_padded_fft(window, nfft);

    Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(nfft);
    padded.head(tu) = window;
    const Eigen::VectorXcd shifted = inverse_fft(out.useful);
    out.interference = zero_padded_fft(padded - shifted, nfft);

    const double useful_energy = out.useful.squaredNorm();
    const double interference_energy = out.interference.squaredNorm();
    out.eta_db = interference_energy > 0.0
                     ? 10.0 * std::log10(useful_energy / interference_energy)
                     : std::numeric_limits<double>::infinity();
    return out;
}

/// Expected per-sample power of a one-sub-band data symbol with i.i.d.
/// unit-energy constellation points, averaged over the T_U samples.
inline double average_symbol_power(const SubbandFilter& filter, const SystemConfig& config)
{
    const int tu = config.symbol_length();
    double total = 0.0;
    for (int q = 0; q < config.n_s; ++q)
    {
        Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(config.n_s);
        unit[q] = 1.0;
        std::span<const cplx> values(unit.data(), static_cast<std::size_t>(unit.size()));
        total += synthesize_symbol(values, filter, config).squaredNorm();
    }
    return total / tu;
}

/// H_i ~ CN(0, 1), delta_t_i ~ U(-L, L), drawn in that order per user.
inline ChannelRealization draw_channel(const SystemConfig& config, Rng& rng)
{
    ChannelRealization ch;
    ch.h.resize(config.B);
    ch.delta_t.resize(config.B);
    std::uniform_real_distribution<double> offset(-static_cast<double>(config.L),
                                                  static_cast<double>(config.L));
    for (int i = 0; i < config.B; ++i)
    {
        ch.h[i] = complex_gaussian(rng, 1.0);
        ch.delta_t[i] = offset(rng);
    }
    return ch;
}

} // namespace ufmc

#endif
