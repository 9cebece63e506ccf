#ifndef UFMC_ANM_CONFIG_IO_HPP
#define UFMC_ANM_CONFIG_IO_HPP

///
/// \file config_io.hpp
///
/// JSON configuration with a fixed key registry. Files are nested objects
/// whose leaves are addressed by dotted keys ("system.N", "solver.rho");
/// `--set key=value` overrides use the same names. Unknown keys and values
/// of the wrong type are rejected with InvalidParameter.
///

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "ufmc_anm/harness.hpp"

namespace ufmc
{

using json = nlohmann::json;

struct ConfigKey
{
    std::string name;
    std::string help;
    std::function<json(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const json&)> set;
};

namespace detail
{

inline int json_int(const json& v, const std::string& key)
{
    if (!v.is_number_integer())
        throw InvalidParameter(key + ": expected an integer");
    return v.get<int>();
}

inline double json_double(const json& v, const std::string& key)
{
    if (!v.is_number())
        throw InvalidParameter(key + ": expected a number");
    return v.get<double>();
}

inline bool json_bool(const json& v, const std::string& key)
{
    if (!v.is_boolean())
        throw InvalidParameter(key + ": expected true or false");
    return v.get<bool>();
}

inline std::string json_string(const json& v, const std::string& key)
{
    if (!v.is_string())
        throw InvalidParameter(key + ": expected a string");
    return v.get<std::string>();
}

inline std::vector<double> json_doubles(const json& v, const std::string& key)
{
    if (!v.is_array())
        throw InvalidParameter(key + ": expected a list of numbers");
    std::vector<double> out;
    for (const auto& e : v)
        out.push_back(json_double(e, key));
    return out;
}

inline const char* lambda_kind_name(LambdaRule::Kind k)
{
    switch (k)
    {
    case LambdaRule::Kind::noise_scaled:
        return "noise_scaled";
    case LambdaRule::Kind::norm_weighted:
        return "norm_weighted";
    case LambdaRule::Kind::fixed:
        break;
    }
    return "fixed";
}

template <class T>
ConfigKey int_key(std::string name, std::string help, T ExperimentConfig::*group, int T::*field)
{
    return {name, std::move(help), [=](const ExperimentConfig& c) { return json((c.*group).*field); },
            [=](ExperimentConfig& c, const json& v) { (c.*group).*field = json_int(v, name); }};
}

template <class T>
ConfigKey double_key(std::string name, std::string help, T ExperimentConfig::*group, double T::*field)
{
    return {name, std::move(help), [=](const ExperimentConfig& c) { return json((c.*group).*field); },
            [=](ExperimentConfig& c, const json& v) { (c.*group).*field = json_double(v, name); }};
}

template <class T>
ConfigKey bool_key(std::string name, std::string help, T ExperimentConfig::*group, bool T::*field)
{
    return {name, std::move(help), [=](const ExperimentConfig& c) { return json((c.*group).*field); },
            [=](ExperimentConfig& c, const json& v) { (c.*group).*field = json_bool(v, name); }};
}

template <class T>
ConfigKey string_key(std::string name, std::string help, T ExperimentConfig::*group,
                     std::string T::*field)
{
    return {name, std::move(help), [=](const ExperimentConfig& c) { return json((c.*group).*field); },
            [=](ExperimentConfig& c, const json& v) { (c.*group).*field = json_string(v, name); }};
}

template <class F>
ConfigKey top_key(std::string name, std::string help, F ExperimentConfig::*field)
{
    return {name, std::move(help), [=](const ExperimentConfig& c) { return json(c.*field); },
            [=](ExperimentConfig& c, const json& v) {
                if constexpr (std::is_same_v<F, int>)
                    c.*field = json_int(v, name);
                else if constexpr (std::is_same_v<F, bool>)
                    c.*field = json_bool(v, name);
                else if constexpr (std::is_same_v<F, double>)
                    c.*field = json_double(v, name);
                else
                    c.*field = json_string(v, name);
            }};
}

inline void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, json>>& out)
{
    if (node.is_object())
    {
        for (auto it = node.begin(); it != node.end(); ++it)
            flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
        return;
    }
    out.emplace_back(prefix, node);
}

} // namespace detail

/// Every recognized key, in display order.
inline const std::vector<ConfigKey>& config_keys()
{
    using E = ExperimentConfig;
    using S = SystemConfig;
    using detail::bool_key;
    using detail::double_key;
    using detail::int_key;
    using detail::string_key;
    using detail::top_key;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        k.push_back(int_key("system.N", "IDFT size (receiver FFT has 2N bins)", &E::system, &S::N));
        k.push_back(int_key("system.B", "sub-bands = users", &E::system, &S::B));
        k.push_back(int_key("system.n_s", "subcarriers per sub-band", &E::system, &S::n_s));
        k.push_back(int_key("system.L", "FIR filter length", &E::system, &S::L));
        k.push_back(double_key("system.alpha_db", "Chebyshev side-lobe attenuation (dB)", &E::system, &S::alpha_db));
        k.push_back(int_key("system.M", "frame length in symbols", &E::system, &S::M));
        k.push_back({"system.snr_db_list", "SNR grid (dB)",
                     [](const E& c) { return json(c.system.snr_db_list); },
                     [](E& c, const json& v) { c.system.snr_db_list = detail::json_doubles(v, "system.snr_db_list"); }});
        k.push_back({"system.seed", "RNG seed",
                     [](const E& c) { return json(c.system.seed); },
                     [](E& c, const json& v) {
                         if (!v.is_number_unsigned())
                             throw InvalidParameter("system.seed: expected a non-negative integer");
                         c.system.seed = v.get<std::uint64_t>();
                     }});
        k.push_back({"system.lambda_rule.kind", "noise_scaled | norm_weighted | fixed",
                     [](const E& c) { return json(detail::lambda_kind_name(c.system.lambda_rule.kind)); },
                     [](E& c, const json& v) {
                         const std::string s = detail::json_string(v, "system.lambda_rule.kind");
                         if (s == "noise_scaled")
                             c.system.lambda_rule.kind = LambdaRule::Kind::noise_scaled;
                         else if (s == "norm_weighted")
                             c.system.lambda_rule.kind = LambdaRule::Kind::norm_weighted;
                         else if (s == "fixed")
                             c.system.lambda_rule.kind = LambdaRule::Kind::fixed;
                         else
                             throw InvalidParameter("system.lambda_rule.kind: unknown rule '" + s + "'");
                     }});
        k.push_back({"system.lambda_rule.fixed_value", "lambda for the fixed rule",
                     [](const E& c) { return json(c.system.lambda_rule.fixed_value); },
                     [](E& c, const json& v) {
                         c.system.lambda_rule.fixed_value = detail::json_double(v, "system.lambda_rule.fixed_value");
                     }});
        k.push_back({"system.lambda_rule.noiseless_fallback", "lambda of the sigma rules when sigma = 0",
                     [](const E& c) { return json(c.system.lambda_rule.noiseless_fallback); },
                     [](E& c, const json& v) {
                         c.system.lambda_rule.noiseless_fallback =
                             detail::json_double(v, "system.lambda_rule.noiseless_fallback");
                     }});
        k.push_back(top_key("experiment.trials", "Monte Carlo trials per SNR point", &E::trials));
        k.push_back(top_key("experiment.pilot_repeats", "pilot repetitions per frame (>= 3)", &E::pilot_repeats));
        k.push_back(top_key("experiment.data_symbols", "data symbols per BER point", &E::data_symbols));
        k.push_back(top_key("experiment.anm", "run the estimator arm of BER sweeps", &E::anm));
        k.push_back(top_key("experiment.baseline", "add the correlation baseline to NMSE sweeps", &E::baseline));
        k.push_back(top_key("experiment.ideal", "add the perfect-sync arm to BER sweeps", &E::ideal));
        k.push_back(top_key("experiment.threads", "worker threads (0 = all cores)", &E::threads));
        k.push_back(top_key("experiment.output", "CSV file name inside --out", &E::output));
        k.push_back(double_key("solver.rho", "initial ADMM penalty", &E::solver, &SolverParams::rho));
        k.push_back(double_key("solver.tolerance", "normalized residual tolerance", &E::solver, &SolverParams::tolerance));
        k.push_back(int_key("solver.max_iter", "ADMM iteration cap", &E::solver, &SolverParams::max_iter));
        k.push_back(double_key("solver.balance_ratio", "residual ratio that triggers a penalty update", &E::solver,
                               &SolverParams::balance_ratio));
        k.push_back(double_key("solver.rho_scale", "penalty update factor", &E::solver, &SolverParams::rho_scale));
        k.push_back(top_key("estimator.prior_bound", "flag |delta_t| >= bound (0 disables)", &E::prior_bound));
        k.push_back({"estimate.delta_t", "timing offsets for `estimate` (empty: drawn)",
                     [](const E& c) { return json(c.estimate.delta_t); },
                     [](E& c, const json& v) { c.estimate.delta_t = detail::json_doubles(v, "estimate.delta_t"); }});
        k.push_back(bool_key("estimate.noiseless", "no noise in the `estimate` scenario", &E::estimate,
                             &EstimateScenario::noiseless));
        k.push_back(double_key("estimate.snr_db", "SNR of the `estimate` scenario when noisy", &E::estimate,
                               &EstimateScenario::snr_db));
        k.push_back(string_key("estimate.input", "CSV of received samples (index,re,im)", &E::estimate,
                               &EstimateScenario::input));
        k.push_back(double_key("estimate.ta_threshold", "Timing Advance threshold in samples", &E::estimate,
                               &EstimateScenario::ta_threshold));
        return k;
    }();
    return keys;
}

inline const ConfigKey& find_config_key(std::string_view name)
{
    for (const auto& k : config_keys())
        if (k.name == name)
            return k;
    throw InvalidParameter("unknown config key '" + std::string(name) + "'");
}

inline void apply_config_json(ExperimentConfig& config, const json& root)
{
    if (!root.is_object())
        throw InvalidParameter("config: top level must be an object");
    std::vector<std::pair<std::string, json>> leaves;
    detail::flatten(root, "", leaves);
    for (const auto& [key, value] : leaves)
        find_config_key(key).set(config, value);
}

/// Applies "key=value"; the value is parsed as JSON, falling back to a string.
inline void apply_override(ExperimentConfig& config, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw InvalidParameter("override '" + std::string(assignment) + "' is not key=value");
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded())
        value = text;
    find_config_key(key).set(config, value);
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidParameter("cannot open config file '" + path + "'");
    json root = json::parse(in, nullptr, false);
    if (root.is_discarded())
        throw InvalidParameter("config file '" + path + "' is not valid JSON");
    ExperimentConfig config;
    apply_config_json(config, root);
    return config;
}

/// Nested JSON of every key with its current value.
inline json config_to_json(const ExperimentConfig& config)
{
    json root = json::object();
    for (const auto& k : config_keys())
        root[json::json_pointer("/" + [&] {
            std::string p = k.name;
            std::replace(p.begin(), p.end(), '.', '/');
            return p;
        }())] = k.get(config);
    return root;
}

} // namespace ufmc

#endif
