#pragma once

#include <mref/core/error.hpp>
#include <mref/core/parallel.hpp>
#include <mref/features/extractor.hpp>
#include <mref/partition.hpp>
#include <mref/similarity/match_field.hpp>
#include <mref/transfer/synthesis.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mref::app {

/// Dimensions of the random feature case used by oracle-check when no images are given.
struct RandomCase
{
    int height = 12;
    int width = 12;
    int channels = 8;
    int ref_height = 12;
    int ref_width = 12;
    /// Quantization steps for feature values; 0 draws continuous values.
    int levels = 0;
};

/// Everything one CLI invocation needs.
struct RunConfig
{
    PartitionSpec spec;
    bool n_m_set = false;
    MatchParams match;
    SynthesisConfig synth;
    ExtractorConfig extractor;
    std::string weights_kind = "seeded";
    std::uint32_t seed = 0;
    std::filesystem::path weights_dir;
    Exec exec;
    std::string input;
    std::string ground_truth;
    std::string out;
    std::vector<std::string> refs;
    std::vector<int> bench_sweep{1, 4, 16};
    RandomCase random_case;

    /// Subvector count for a matching map of `channels` channels (auto when spec.n_c is 0).
    int subvector_count(const std::array<int, 3>& stage_channels) const
    {
        const int n_c = spec.n_c > 0 ? spec.n_c : auto_nc(stage_channels);
        if (stage_channels[2] % n_c != 0)
            throw ConfigError("spec.n_c", std::to_string(n_c) + " does not divide the " +
                                              std::to_string(stage_channels[2]) + " matching channels");
        return n_c;
    }

    /// Resolves the extractor weight source and checks every nested invariant.
    void finalize()
    {
        if (weights_kind == "seeded")
            extractor.weights = SeededRandomWeights{seed};
        else if (weights_kind == "gabor")
            extractor.weights = GaborBankWeights{seed};
        else if (weights_kind == "external") {
            if (weights_dir.empty())
                throw ConfigError("extractor.weights_dir", "required when extractor.weights = external");
            extractor.weights = ExternalWeights{weights_dir};
        } else
            throw ConfigError("extractor.weights", "expected seeded, gabor or external, got '" + weights_kind + "'");
        if (!refs.empty()) {
            if (n_m_set && spec.n_m != static_cast<int>(refs.size()))
                throw ConfigError("spec.n_m", "is " + std::to_string(spec.n_m) + " but " +
                                                  std::to_string(refs.size()) + " references were given");
            spec.n_m = static_cast<int>(refs.size());
        }
        spec.validate();
        match.validate();
        synth.validate();
        extractor.validate();
        for (int n : bench_sweep)
            if (exact_sqrt(n) < 0)
                throw ConfigError("bench.sweep", std::to_string(n) + " is not a perfect square");
        const auto& rc = random_case;
        if (rc.height < 1 || rc.width < 1 || rc.channels < 1 || rc.ref_height < 1 || rc.ref_width < 1 || rc.levels < 0)
            throw ConfigError("oracle", "random case dims must be positive");
    }
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, std::string_view v)
{
    N out{};
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ConfigError(key, "invalid number '" + std::string(v) + "'");
    return out;
}

inline bool parse_bool(const std::string& key, std::string_view v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw ConfigError(key, "invalid boolean '" + std::string(v) + "'");
}

inline std::vector<std::string_view> split_list(std::string_view v)
{
    std::vector<std::string_view> out;
    while (true) {
        const auto p = v.find(',');
        out.push_back(trim(v.substr(0, p)));
        if (p == std::string_view::npos)
            break;
        v.remove_prefix(p + 1);
    }
    return out;
}

inline std::vector<int> parse_int_list(const std::string& key, std::string_view v)
{
    std::vector<int> out;
    for (auto item : split_list(v))
        out.push_back(parse_number<int>(key, item));
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, std::string_view value)>;

inline const std::map<std::string, Setter, std::less<>>& setters()
{
    static const std::map<std::string, Setter, std::less<>> table = [] {
        std::map<std::string, Setter, std::less<>> t;
        t["spec.n_m"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.spec.n_m = parse_number<int>(k, v);
            c.n_m_set = true;
        };
        t["spec.n_i"] = [](RunConfig& c, const std::string& k, std::string_view v) { c.spec.n_i = parse_number<int>(k, v); };
        t["spec.n_r"] = [](RunConfig& c, const std::string& k, std::string_view v) { c.spec.n_r = parse_number<int>(k, v); };
        t["spec.n_c"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.spec.n_c = v == "auto" ? 0 : parse_number<int>(k, v);
        };
        t["spec.n_l"] = [](RunConfig& c, const std::string& k, std::string_view v) { c.spec.n_l = parse_number<int>(k, v); };
        t["match.patch_size"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.match.patch_size = parse_number<int>(k, v);
        };
        t["match.stride"] = [](RunConfig& c, const std::string& k, std::string_view v) { c.match.stride = parse_number<int>(k, v); };
        t["match.norm_epsilon"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.match.norm_epsilon = parse_number<float>(k, v);
        };
        t["match.normalize_input"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.match.normalize_input = parse_bool(k, v);
        };
        t["match.oracle_cap"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.match.oracle_cap = parse_number<std::size_t>(k, v);
        };
        t["synth.upscale"] = [](RunConfig& c, const std::string& k, std::string_view v) { c.synth.upscale = parse_number<int>(k, v); };
        t["synth.paste_patch"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.synth.paste_patch = parse_number<int>(k, v);
        };
        t["synth.temperature"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.synth.temperature = parse_number<double>(k, v);
        };
        t["synth.alpha"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            if (v == "auto")
                c.synth.alpha.reset();
            else
                c.synth.alpha = parse_number<double>(k, v);
        };
        t["extractor.stage_channels"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            const auto list = parse_int_list(k, v);
            if (list.size() != 3)
                throw ConfigError(k, "expected exactly 3 channel counts");
            std::copy(list.begin(), list.end(), c.extractor.stage_channels.begin());
        };
        t["extractor.kernel_size"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.extractor.kernel_size = parse_number<int>(k, v);
        };
        t["extractor.weights"] = [](RunConfig& c, const std::string&, std::string_view v) { c.weights_kind = std::string(v); };
        t["extractor.seed"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.seed = parse_number<std::uint32_t>(k, v);
        };
        t["extractor.weights_dir"] = [](RunConfig& c, const std::string&, std::string_view v) { c.weights_dir = std::string(v); };
        t["run.threads"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.exec.threads = v == "auto" ? 0u : parse_number<unsigned>(k, v);
        };
        t["run.seed"] = [](RunConfig& c, const std::string& k, std::string_view v) { c.seed = parse_number<std::uint32_t>(k, v); };
        t["paths.input"] = [](RunConfig& c, const std::string&, std::string_view v) { c.input = std::string(v); };
        t["paths.ground_truth"] = [](RunConfig& c, const std::string&, std::string_view v) { c.ground_truth = std::string(v); };
        t["paths.out"] = [](RunConfig& c, const std::string&, std::string_view v) { c.out = std::string(v); };
        t["paths.refs"] = [](RunConfig& c, const std::string&, std::string_view v) {
            c.refs.clear();
            for (auto item : split_list(v))
                if (!item.empty())
                    c.refs.emplace_back(item);
        };
        t["bench.sweep"] = [](RunConfig& c, const std::string& k, std::string_view v) { c.bench_sweep = parse_int_list(k, v); };
        t["oracle.height"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.random_case.height = parse_number<int>(k, v);
        };
        t["oracle.width"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.random_case.width = parse_number<int>(k, v);
        };
        t["oracle.channels"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.random_case.channels = parse_number<int>(k, v);
        };
        t["oracle.ref_height"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.random_case.ref_height = parse_number<int>(k, v);
        };
        t["oracle.ref_width"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.random_case.ref_width = parse_number<int>(k, v);
        };
        t["oracle.levels"] = [](RunConfig& c, const std::string& k, std::string_view v) {
            c.random_case.levels = parse_number<int>(k, v);
        };
        return t;
    }();
    return table;
}

} // namespace detail

/// Applies one `key = value` setting; unknown keys are rejected.
inline void apply_setting(RunConfig& cfg, const std::string& key, std::string_view value)
{
    const auto& table = detail::setters();
    const auto it = table.find(key);
    if (it == table.end())
        throw ConfigError(key, "unknown key");
    it->second(cfg, key, detail::trim(value));
}

/// Parses `key = value` lines with `#` comments. Errors name the key and line number.
inline void parse_config(RunConfig& cfg, std::istream& in, const std::string& source = "config")
{
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view v = line;
        if (const auto hash = v.find('#'); hash != std::string_view::npos)
            v = v.substr(0, hash);
        v = detail::trim(v);
        if (v.empty())
            continue;
        const auto eq = v.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string_view::npos)
            throw ConfigError("", where + ": expected 'key = value'");
        const std::string key(detail::trim(v.substr(0, eq)));
        if (key.empty())
            throw ConfigError("", where + ": missing key");
        try {
            apply_setting(cfg, key, v.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(key, where + ": " + std::string(e.what()).substr(key.size() + 2));
        }
    }
}

inline void parse_config_text(RunConfig& cfg, std::string_view text)
{
    std::istringstream in{std::string(text)};
    parse_config(cfg, in);
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path.string());
    parse_config(cfg, in, path.string());
}

} // namespace mref::app
