// Command-line front end: filter design, single-shot estimation, TO
// interference diagnostics and the NMSE / BER sweeps.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ufmc_anm/ufmc_anm.hpp"

namespace fs = std::filesystem;
using namespace ufmc;

namespace
{

constexpr int exit_ok = 0;
constexpr int exit_runtime = 1;
constexpr int exit_usage = 2;

struct UsageError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct CommonArgs
{
    std::string config;
    std::string out = ".";
    long long seed = -1;
    std::vector<std::string> overrides;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& args)
{
    cmd->add_option("--config", args.config, "JSON config file")->required();
    cmd->add_option("--out", args.out, "output directory")->capture_default_str();
    cmd->add_option("--seed", args.seed, "RNG seed (overrides system.seed)");
    cmd->add_option("--set", args.overrides, "override a config key: key=value (repeatable)");
    cmd->add_flag("--verbose", args.verbose, "extra diagnostics on standard error");
}

ExperimentConfig resolve_config(const CommonArgs& args)
{
    if (!fs::exists(args.config))
        throw UsageError("config file '" + args.config + "' does not exist");
    ExperimentConfig cfg = load_config(args.config);
    for (const auto& o : args.overrides)
        apply_override(cfg, o);
    if (args.seed >= 0)
        cfg.system.seed = static_cast<std::uint64_t>(args.seed);
    cfg.validate();
    return cfg;
}

fs::path output_dir(const CommonArgs& args)
{
    fs::path dir(args.out);
    fs::create_directories(dir);
    return dir;
}

std::string key_listing()
{
    const ExperimentConfig defaults;
    std::ostringstream os;
    os << "Config keys (JSON objects nest on '.'; defaults in brackets):\n";
    for (const auto& k : config_keys())
        os << "  " << k.name << " [" << k.get(defaults).dump() << "]  " << k.help << "\n";
    return os.str();
}

/// CSV with header and rows index,re,im.
Eigen::VectorXcd read_samples(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open sample file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("index", 0) != 0)
        throw UsageError(path + ":1: expected header 'index,re,im'");
    std::vector<cplx> values;
    int lineno = 1;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string a, b, c, extra;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c, ',') ||
            std::getline(ls, extra, ','))
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected 3 fields");
        try
        {
            std::size_t used = 0;
            const long idx = std::stol(a, &used);
            if (used != a.size() || idx != static_cast<long>(values.size()))
                throw UsageError(path + ":" + std::to_string(lineno) + ": index out of sequence");
            const double re = std::stod(b, &used);
            if (used != b.size())
                throw std::invalid_argument("re");
            const double im = std::stod(c, &used);
            if (used != c.size() && c.find_first_not_of(" \r", used) != std::string::npos)
                throw std::invalid_argument("im");
            if (!std::isfinite(re) || !std::isfinite(im))
                throw std::invalid_argument("non-finite");
            values.emplace_back(re, im);
        }
        catch (const std::invalid_argument&)
        {
            throw UsageError(path + ":" + std::to_string(lineno) + ": malformed number");
        }
        catch (const std::out_of_range&)
        {
            throw UsageError(path + ":" + std::to_string(lineno) + ": number out of range");
        }
    }
    Eigen::VectorXcd out(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = values[i];
    return out;
}

int cmd_filter_design(const CommonArgs& args)
{
    const ExperimentConfig cfg = resolve_config(args);
    const SystemConfig& c = cfg.system;
    const fs::path dir = output_dir(args);
    const auto bank = design_filter_bank(c);

    std::ofstream taps(dir / "filter_taps.csv");
    taps << "index,re,im\n";
    for (int n = 0; n < c.L; ++n)
        taps << n << ',' << std::setprecision(17) << bank.front().prototype[n] << ",0\n";

    const Eigen::VectorXcd proto = bank.front().prototype.cast<cplx>();
    const Eigen::VectorXcd resp = zero_padded_fft(proto, c.fft_size());
    std::ofstream mag(dir / "filter_response.csv");
    mag << "bin,db\n";
    for (int k = 0; k < c.fft_size(); ++k)
    {
        const double a = std::abs(resp[k]);
        mag << k << ',' << std::setprecision(10) << (a > 0.0 ? 20.0 * std::log10(a) : -400.0) << '\n';
    }

    for (const auto& f : bank)
    {
        std::ofstream sb(dir / ("subband_" + std::to_string(f.subband_index) + "_taps.csv"));
        sb << "index,re,im\n";
        for (Eigen::Index n = 0; n < f.taps.size(); ++n)
            sb << n << ',' << std::setprecision(17) << f.taps[n].real() << ',' << f.taps[n].imag() << '\n';
    }
    std::cout << "L = " << c.L << ", alpha = " << c.alpha_db
              << " dB, measured side-lobe attenuation = " << sidelobe_attenuation_db(bank.front().prototype)
              << " dB\nwrote " << (dir / "filter_taps.csv").string() << '\n';
    return exit_ok;
}

int cmd_estimate(const CommonArgs& args)
{
    const ExperimentConfig cfg = resolve_config(args);
    const SystemConfig& c = cfg.system;
    const Scenario sc(c);
    const double sigma2 = cfg.estimate.noiseless ? 0.0 : noise_variance(sc.power, cfg.estimate.snr_db, c);

    Eigen::VectorXcd window;
    ChannelRealization truth;
    const bool synthetic = cfg.estimate.input.empty();
    if (synthetic)
    {
        Rng rng = derive_stream(c.seed, 3);
        truth = draw_channel(c, rng);
        if (!cfg.estimate.delta_t.empty())
        {
            if (static_cast<int>(cfg.estimate.delta_t.size()) != c.B)
                throw UsageError("estimate.delta_t must have system.B entries");
            for (int i = 0; i < c.B; ++i)
                truth.delta_t[i] = cfg.estimate.delta_t[static_cast<std::size_t>(i)];
        }
        const SymbolStream stream = repeated_stream(sc.pilot, cfg.pilot_repeats);
        const double start = static_cast<double>((cfg.pilot_repeats / 2) * c.symbol_length());
        std::vector<Eigen::VectorXcd> windows;
        for (int i = 0; i < c.B; ++i)
            windows.push_back(sample_delayed_window(stream, sc.filters, start, truth.delta_t[i], c));
        window = apply_channel_and_noise(windows, truth, sigma2, rng);
    }
    else
    {
        window = read_samples(cfg.estimate.input);
        if (window.size() != c.symbol_length())
            throw UsageError("sample file must hold N + L - 1 = " + std::to_string(c.symbol_length()) +
                             " samples, found " + std::to_string(window.size()));
    }

    EstimationResult r;
    try
    {
        EstimatorOptions opts;
        opts.solver = cfg.solver;
        opts.lambda = select_lambda(c.lambda_rule, std::sqrt(sigma2), c.N);
        opts.prior_bound = cfg.prior_bound;
        r = joint_estimate(receiver_front_end(window, c, sigma2), sc.pilot_spectrum, c, opts);
    }
    catch (const EstimationError& e)
    {
        std::cerr << "estimation failed at stage '" << e.stage() << "': " << e.what() << '\n';
        return exit_runtime;
    }

    const auto ta = timing_advance_decision(r.delta_t_hats, cfg.estimate.ta_threshold);
    std::ostringstream kv;
    kv << std::setprecision(10);
    kv << "no_signal=" << (r.no_signal ? "true" : "false") << '\n';
    for (int i = 0; i < c.B; ++i)
    {
        const auto k = static_cast<std::size_t>(i);
        kv << "user" << i << ".delta_t=" << r.delta_t_hats[k] << '\n';
        kv << "user" << i << ".h_magnitude=" << std::abs(r.h_hats[k]) << '\n';
        kv << "user" << i << ".h_phase=" << std::arg(r.h_hats[k]) << '\n';
        kv << "user" << i << ".timing_advance=" << (ta[k] ? "true" : "false") << '\n';
        if (!r.outside_prior.empty() && r.outside_prior[k])
            kv << "user" << i << ".outside_prior=true\n";
    }
    kv << "residual=" << r.residual_norm << '\n';
    kv << "solver_iterations=" << r.solver_iterations << '\n';
    kv << "solver_converged=" << (r.solver_converged ? "true" : "false") << '\n';
    if (synthetic)
        for (int i = 0; i < c.B; ++i)
            kv << "truth" << i << ".delta_t=" << truth.delta_t[i] << '\n';

    std::cout << kv.str();
    const fs::path dir = output_dir(args);
    std::ofstream(dir / "estimate.txt") << kv.str();
    return exit_ok;
}

int cmd_interference(const CommonArgs& args)
{
    const ExperimentConfig cfg = resolve_config(args);
    const Scenario sc(cfg.system);
    const fs::path dir = output_dir(args);
    std::ofstream csv(dir / "interference.csv");
    csv << "delta_t,eta_db\n";
    for (int d = -cfg.system.L + 1; d < cfg.system.L; ++d)
    {
        if (d == 0)
            continue;
        const double eta = interference_terms(sc.pilot, sc.filters, d, cfg.system).eta_db;
        csv << d << ',' << std::setprecision(8) << eta << '\n';
        std::cout << "delta_t = " << d << "  eta = " << eta << " dB\n";
    }
    return exit_ok;
}

int cmd_sweep(const CommonArgs& args, Metric metric)
{
    const ExperimentConfig cfg = resolve_config(args);
    const fs::path dir = output_dir(args);
    const ProgressSink log = [](const std::string& s) { std::cerr << s << '\n'; };
    const auto rows = metric == Metric::nmse_db ? run_nmse_sweep(cfg, log) : run_ber_sweep(cfg, log);
    const fs::path file = dir / cfg.output;
    std::ofstream out(file, std::ios::binary);
    write_csv(out, rows);
    if (!out)
        throw UsageError("cannot write " + file.string());
    if (args.verbose)
        write_csv(std::cerr, rows);
    std::cerr << "wrote " << file.string() << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"UFMC timing-offset and channel estimation by atomic norm minimization"};
    app.require_subcommand(1);
    app.footer(key_listing());

    CommonArgs args;
    auto* filter = app.add_subcommand("filter-design", "write Chebyshev sub-band filter taps and response");
    auto* estimate = app.add_subcommand("estimate", "single-shot joint TO and channel estimate");
    auto* interference = app.add_subcommand("interference", "TO interference level eta per integer offset");
    auto* nmse = app.add_subcommand("sweep-nmse", "NMSE of the TO estimate versus SNR");
    auto* ber = app.add_subcommand("sweep-ber", "BER versus SNR, estimated and perfect sync");
    for (auto* cmd : {filter, estimate, interference, nmse, ber})
    {
        add_common(cmd, args);
        cmd->footer(key_listing());
    }

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return exit_usage;
    }

    try
    {
        if (*filter)
            return cmd_filter_design(args);
        if (*estimate)
            return cmd_estimate(args);
        if (*interference)
            return cmd_interference(args);
        if (*nmse)
            return cmd_sweep(args, Metric::nmse_db);
        return cmd_sweep(args, Metric::ber);
    }
    catch (const UsageError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
    catch (const InvalidParameter& e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_usage;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}
