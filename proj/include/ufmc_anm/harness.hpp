#ifndef UFMC_ANM_HARNESS_HPP
#define UFMC_ANM_HARNESS_HPP

///
/// \file harness.hpp
///
/// Monte Carlo runner for the timing-offset NMSE and BER sweeps.
///
/// Every trial draws from its own generator derive_stream(seed, tag, snr
/// index, trial index), so results do not depend on execution order or on
/// the number of worker threads. Aggregation always walks trials in index
/// order.
///

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "ufmc_anm/anm_solver.hpp"
#include "ufmc_anm/config.hpp"
#include "ufmc_anm/dsp.hpp"
#include "ufmc_anm/estimator.hpp"
#include "ufmc_anm/waveform.hpp"

namespace ufmc
{

/// Single-shot scenario used by the `estimate` command.
struct EstimateScenario
{
    std::vector<double> delta_t;      ///< empty: drawn like a sweep trial
    bool noiseless = true;
    double snr_db = 20.0;             ///< used when !noiseless
    std::string input;                ///< CSV of received samples; empty: synthetic
    double ta_threshold = 1.0;
};

struct ExperimentConfig
{
    SystemConfig system{};
    int trials = 500;        ///< per SNR point
    int pilot_repeats = 3;   ///< the middle repetition is the detection window
    int data_symbols = 10000; ///< UFMC data symbols per BER point, split over trials
    bool anm = true;         ///< run the estimator (BER sweeps may disable it)
    bool baseline = true;
    bool ideal = true;
    SolverParams solver{.tolerance = 1e-4};
    double prior_bound = 0.0;
    int threads = 1;         ///< 0: one per hardware thread
    std::string output = "results.csv";
    EstimateScenario estimate{};

    void validate() const
    {
        system.validate();
        if (trials < 1)
            throw InvalidParameter("experiment.trials must be >= 1");
        if (pilot_repeats < 3)
            throw InvalidParameter("experiment.pilot_repeats must be >= 3");
        if (data_symbols < 1)
            throw InvalidParameter("experiment.data_symbols must be >= 1");
        if (threads < 0)
            throw InvalidParameter("experiment.threads must be >= 0");
        if (!(solver.tolerance > 0.0) || solver.max_iter < 1 || !(solver.rho > 0.0))
            throw InvalidParameter("solver parameters must be positive");
        if (system.lambda_rule.kind == LambdaRule::Kind::fixed && !(system.lambda_rule.fixed_value > 0.0))
            throw InvalidParameter("lambda must be positive");
    }

    int data_symbols_per_trial() const { return (data_symbols + trials - 1) / trials; }
};

enum class Metric
{
    nmse_db,
    ber
};

inline const char* metric_name(Metric m) { return m == Metric::nmse_db ? "nmse_db" : "ber"; }

struct MetricsRecord
{
    double snr_db = 0.0;
    std::string method; ///< anm, baseline or ideal
    Metric metric = Metric::nmse_db;
    double value = 0.0;  ///< nmse in dB, or BER
    double linear = 0.0; ///< mean squared TO error, or BER
    double std_error = 0.0; ///< standard error of `linear` across trials
    int trials = 0;
    int failures = 0;
    double mean_iterations = 0.0;
    bool invalid = false; ///< more than half of the trials failed
};

/// 10 log10 of the mean; `floor_db` when the mean is zero.
inline double compute_nmse(std::span<const double> errors, double floor_db = -320.0)
{
    if (errors.empty())
        throw InvalidInput("compute_nmse: empty error list");
    double sum = 0.0;
    for (double e : errors)
        sum += e;
    const double mean = sum / static_cast<double>(errors.size());
    if (mean <= 0.0)
        return floor_db;
    return 10.0 * std::log10(mean);
}

inline double noise_variance(double power, double snr_db, const SystemConfig& config)
{
    return power / (2.0 * config.N * std::pow(10.0, snr_db / 10.0));
}

///
/// Quantities shared by all trials of one configuration: the filter bank,
/// the pilot and its spectrum, and the transmit power used for SNR.
///
struct Scenario
{
    SystemConfig config;
    std::vector<SubbandFilter> filters;
    Eigen::VectorXcd pilot_values;
    UfmcSymbol pilot;
    Eigen::VectorXcd pilot_waveform; ///< T_U samples, all sub-bands
    Eigen::VectorXcd pilot_spectrum; ///< 2N bins
    double power = 0.0;

    explicit Scenario(const SystemConfig& cfg)
        : config(cfg), filters(design_filter_bank(cfg)), pilot_values(default_pilot(cfg)),
          pilot(make_pilot_symbol(std::span<const cplx>(pilot_values.data(), pilot_values.size()), cfg))
    {
        pilot_waveform = synthesize_symbol(pilot, filters, cfg);
        pilot_spectrum = zero_padded_fft(pilot_waveform, cfg.fft_size());
        power = average_symbol_power(filters.front(), cfg);
    }
};

struct TrialOutcome
{
    ChannelRealization channel;
    bool failed = false;
    std::string failure; ///< stage and message when failed
    EstimationResult estimate;
    std::vector<int> association; ///< estimate index per user
    double anm_sq_error = 0.0;    ///< (1/B) sum (dt_hat - dt)^2
    double channel_error = 0.0;   ///< sum |h_hat - h|^2
    double channel_energy = 0.0;  ///< sum |h|^2
    double baseline_estimate = 0.0;
    double baseline_sq_error = 0.0;
    long long bits = 0;
    long long anm_bit_errors = 0;
    long long ideal_bit_errors = 0;
};

namespace detail
{

/// Runs fn(i) for i in [0, count) on `threads` workers; results land by index.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn)
{
    if (threads == 0)
        threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, count);
    if (threads <= 1)
    {
        for (int i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++)
                fn(i);
        });
}

inline EstimatorOptions estimator_options(const ExperimentConfig& exp, double sigma2)
{
    EstimatorOptions o;
    o.solver = exp.solver;
    o.lambda = select_lambda(exp.system.lambda_rule, std::sqrt(sigma2), exp.system.N);
    o.prior_bound = exp.prior_bound;
    return o;
}

inline void score_estimate(TrialOutcome& out, const SystemConfig& cfg)
{
    const std::vector<double> truth(out.channel.delta_t.data(), out.channel.delta_t.data() + cfg.B);
    out.association = associate(out.estimate.delta_t_hats, truth);
    double se = 0.0;
    for (int i = 0; i < cfg.B; ++i)
    {
        const auto k = static_cast<std::size_t>(out.association[static_cast<std::size_t>(i)]);
        const double d = out.estimate.delta_t_hats[k] - truth[static_cast<std::size_t>(i)];
        se += d * d;
        out.channel_error += std::norm(out.estimate.h_hats[k] - out.channel.h[i]);
        out.channel_energy += std::norm(out.channel.h[i]);
    }
    out.anm_sq_error = se / cfg.B;
}

inline void run_estimator(TrialOutcome& out, const Scenario& sc, const ExperimentConfig& exp,
                          const Eigen::VectorXcd& window, double sigma2)
{
    try
    {
        const ReceivedFrame frame = receiver_front_end(window, sc.config, sigma2);
        out.estimate = joint_estimate(frame, sc.pilot_spectrum, sc.config, estimator_options(exp, sigma2));
        score_estimate(out, sc.config);
    }
    catch (const EstimationError& e)
    {
        out.failed = true;
        out.failure = e.what();
    }
    catch (const Error& e)
    {
        out.failed = true;
        out.failure = std::string("harness: ") + e.what();
    }
}

/// Equalized sub-band symbol q of user `user` from a 2N-bin spectrum.
inline cplx equalize(const Eigen::VectorXcd& spectrum, const Scenario& sc, int user, int q,
                     double delta_t, cplx h)
{
    const SystemConfig& c = sc.config;
    const int bin = 2 * (user * c.n_s + q);
    const cplx ramp = std::polar(1.0, 2.0 * pi * bin * delta_t / c.fft_size());
    return spectrum[bin] * ramp / (h * sc.filters[static_cast<std::size_t>(user)].freq_response[bin] *
                                   static_cast<double>(c.N));
}

} // namespace detail

///
/// One NMSE trial: draw (H, delta_t) per user, receive the middle pilot
/// window at the given noise variance, estimate, score after association.
///
inline TrialOutcome run_nmse_trial(const Scenario& sc, const ExperimentConfig& exp, double sigma2,
                                   int snr_index, int trial)
{
    const SystemConfig& c = sc.config;
    Rng rng = derive_stream(c.seed, 1, static_cast<std::uint64_t>(snr_index), static_cast<std::uint64_t>(trial));
    TrialOutcome out;
    out.channel = draw_channel(c, rng);

    const SymbolStream stream = repeated_stream(sc.pilot, exp.pilot_repeats);
    const double start = static_cast<double>((exp.pilot_repeats / 2) * c.symbol_length());
    std::vector<Eigen::VectorXcd> windows;
    for (int i = 0; i < c.B; ++i)
        windows.push_back(sample_delayed_window(stream, sc.filters, start, out.channel.delta_t[i], c));
    const Eigen::VectorXcd y = apply_channel_and_noise(windows, out.channel, sigma2, rng);

    detail::run_estimator(out, sc, exp, y, sigma2);
    if (exp.baseline)
    {
        out.baseline_estimate = correlation_baseline(y, sc.pilot_waveform, -c.L, c.L);
        double se = 0.0;
        for (int i = 0; i < c.B; ++i)
        {
            const double d = out.baseline_estimate - out.channel.delta_t[i];
            se += d * d;
        }
        out.baseline_sq_error = se / c.B;
    }
    return out;
}

///
/// One BER trial: a frame of pilot repetitions followed by random QPSK data,
/// user i on sub-band i. Data windows are demodulated once with the
/// estimated (delta_t, H) and once with the true values.
///
inline TrialOutcome run_ber_trial(const Scenario& sc, const ExperimentConfig& exp, double sigma2,
                                  int snr_index, int trial)
{
    const SystemConfig& c = sc.config;
    const int tu = c.symbol_length();
    const int reps = exp.pilot_repeats;
    const int count = exp.data_symbols_per_trial();
    Rng rng = derive_stream(c.seed, 2, static_cast<std::uint64_t>(snr_index), static_cast<std::uint64_t>(trial));
    TrialOutcome out;
    out.channel = draw_channel(c, rng);

    // bits[user][symbol * n_s + q] = {bit0, bit1}
    std::uniform_int_distribution<int> bit(0, 1);
    std::vector<std::vector<std::pair<int, int>>> bits(static_cast<std::size_t>(c.B));
    std::vector<Eigen::VectorXcd> windows;
    for (int i = 0; i < c.B; ++i)
    {
        SymbolStream stream = repeated_stream(sc.pilot, reps);
        for (int m = 0; m < count; ++m)
        {
            UfmcSymbol s = UfmcSymbol::idle(c);
            for (int q = 0; q < c.n_s; ++q)
            {
                const int b0 = bit(rng);
                const int b1 = bit(rng);
                bits[static_cast<std::size_t>(i)].emplace_back(b0, b1);
                s.values(i, q) = qpsk_map(b0, b1);
            }
            stream.push_back(s);
        }
        windows.push_back(sample_delayed_window(stream, sc.filters, 0.0, out.channel.delta_t[i], c,
                                                (reps + count) * tu));
    }
    const Eigen::VectorXcd y = apply_channel_and_noise(windows, out.channel, sigma2, rng);

    if (exp.anm)
        detail::run_estimator(out, sc, exp, y.segment((reps / 2) * tu, tu), sigma2);
    out.bits = 2LL * c.B * c.n_s * count;
    for (int m = 0; m < count; ++m)
    {
        const Eigen::VectorXcd spectrum = zero_padded_fft(y.segment((reps + m) * tu, tu), c.fft_size());
        for (int i = 0; i < c.B; ++i)
        {
            for (int q = 0; q < c.n_s; ++q)
            {
                const auto [b0, b1] = bits[static_cast<std::size_t>(i)][static_cast<std::size_t>(m * c.n_s + q)];
                if (exp.ideal)
                    out.ideal_bit_errors += qpsk_bit_errors(
                        detail::equalize(spectrum, sc, i, q, out.channel.delta_t[i], out.channel.h[i]), b0, b1);
                if (exp.anm && !out.failed)
                {
                    const auto k = static_cast<std::size_t>(out.association[static_cast<std::size_t>(i)]);
                    out.anm_bit_errors += qpsk_bit_errors(
                        detail::equalize(spectrum, sc, i, q, out.estimate.delta_t_hats[k], out.estimate.h_hats[k]),
                        b0, b1);
                }
            }
        }
    }
    return out;
}

using ProgressSink = std::function<void(const std::string&)>;

namespace detail
{

struct Accumulator
{
    std::vector<double> samples;
    int failures = 0;
    double iterations = 0.0;

    MetricsRecord finish(double snr_db, const char* method, Metric metric, int trials) const
    {
        MetricsRecord r;
        r.snr_db = snr_db;
        r.method = method;
        r.metric = metric;
        r.trials = trials;
        r.failures = failures;
        r.invalid = 2 * failures > trials || samples.empty();
        if (!samples.empty())
        {
            double sum = 0.0;
            for (double s : samples)
                sum += s;
            const double n = static_cast<double>(samples.size());
            r.linear = sum / n;
            double ss = 0.0;
            for (double s : samples)
                ss += (s - r.linear) * (s - r.linear);
            r.std_error = samples.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
            r.mean_iterations = iterations / n;
            r.value = metric == Metric::nmse_db ? compute_nmse(samples) : r.linear;
        }
        return r;
    }
};

inline void report_failures(const std::vector<TrialOutcome>& outcomes, double snr_db, const ProgressSink& log)
{
    if (!log)
        return;
    for (std::size_t t = 0; t < outcomes.size(); ++t)
        if (outcomes[t].failed)
        {
            char head[96];
            std::snprintf(head, sizeof head, "snr %g dB trial %zu failed: ", snr_db, t);
            log(head + outcomes[t].failure);
        }
}

template <class TrialFn>
std::vector<TrialOutcome> run_point(const ExperimentConfig& exp, TrialFn&& fn)
{
    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(exp.trials));
    parallel_for(exp.trials, exp.threads, [&](int t) { outcomes[static_cast<std::size_t>(t)] = fn(t); });
    return outcomes;
}

} // namespace detail

/// Rows per SNR: anm, then baseline when enabled.
inline std::vector<MetricsRecord> run_nmse_sweep(const ExperimentConfig& exp, const ProgressSink& log = {})
{
    exp.validate();
    const Scenario sc(exp.system);
    std::vector<MetricsRecord> rows;
    const auto& snrs = exp.system.snr_db_list;
    for (std::size_t s = 0; s < snrs.size(); ++s)
    {
        const double sigma2 = noise_variance(sc.power, snrs[s], exp.system);
        const auto outcomes = detail::run_point(exp, [&](int t) {
            return run_nmse_trial(sc, exp, sigma2, static_cast<int>(s), t);
        });
        detail::report_failures(outcomes, snrs[s], log);
        detail::Accumulator anm, base;
        for (const auto& o : outcomes)
        {
            if (o.failed)
                ++anm.failures;
            else
            {
                anm.samples.push_back(o.anm_sq_error);
                anm.iterations += o.estimate.solver_iterations;
            }
            base.samples.push_back(o.baseline_sq_error);
        }
        rows.push_back(anm.finish(snrs[s], "anm", Metric::nmse_db, exp.trials));
        if (exp.baseline)
            rows.push_back(base.finish(snrs[s], "baseline", Metric::nmse_db, exp.trials));
        if (log)
        {
            char line[128];
            std::snprintf(line, sizeof line, "nmse sweep: snr %g dB done (%d failures)", snrs[s], anm.failures);
            log(line);
        }
    }
    return rows;
}

/// Rows per SNR: anm, then ideal when enabled.
inline std::vector<MetricsRecord> run_ber_sweep(const ExperimentConfig& exp, const ProgressSink& log = {})
{
    exp.validate();
    const Scenario sc(exp.system);
    std::vector<MetricsRecord> rows;
    const auto& snrs = exp.system.snr_db_list;
    for (std::size_t s = 0; s < snrs.size(); ++s)
    {
        const double sigma2 = noise_variance(sc.power, snrs[s], exp.system);
        const auto outcomes = detail::run_point(exp, [&](int t) {
            return run_ber_trial(sc, exp, sigma2, static_cast<int>(s), t);
        });
        detail::report_failures(outcomes, snrs[s], log);
        detail::Accumulator anm, ideal;
        for (const auto& o : outcomes)
        {
            const double bits = static_cast<double>(o.bits);
            if (o.failed)
                ++anm.failures;
            else
            {
                anm.samples.push_back(static_cast<double>(o.anm_bit_errors) / bits);
                anm.iterations += o.estimate.solver_iterations;
            }
            ideal.samples.push_back(static_cast<double>(o.ideal_bit_errors) / bits);
        }
        if (exp.anm)
            rows.push_back(anm.finish(snrs[s], "anm", Metric::ber, exp.trials));
        if (exp.ideal)
            rows.push_back(ideal.finish(snrs[s], "ideal", Metric::ber, exp.trials));
        if (log)
        {
            char line[128];
            std::snprintf(line, sizeof line, "ber sweep: snr %g dB done (%d failures)", snrs[s], anm.failures);
            log(line);
        }
    }
    return rows;
}

inline void write_csv(std::ostream& os, const std::vector<MetricsRecord>& rows)
{
    os << "snr_db,method,metric,value,trials,failures,mean_iterations\n";
    char buf[256];
    for (const auto& r : rows)
    {
        char value[64];
        if (r.invalid)
            std::snprintf(value, sizeof value, "invalid");
        else
            std::snprintf(value, sizeof value, "%.10g", r.value);
        std::snprintf(buf, sizeof buf, "%g,%s,%s,%s,%d,%d,%.4f\n", r.snr_db, r.method.c_str(),
                      metric_name(r.metric), value, r.trials, r.failures, r.mean_iterations);
        os << buf;
    }
}

} // namespace ufmc

#endif
