#pragma once

#include <mref/app/config.hpp>
#include <mref/app/pipeline.hpp>
#include <mref/core/error.hpp>
#include <mref/core/png_io.hpp>
#include <mref/core/tensor_io.hpp>
#include <mref/metrics/quality.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace mref::app {

enum ExitCode : int { kOk = 0, kConfigExit = 1, kIoExit = 2, kComputeExit = 3 };

using Json = nlohmann::ordered_json;

/// Fixed-point rendering with a dot separator regardless of the global locale.
inline std::string format_fixed(double v, int precision)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
    return std::string(buf, res.ptr);
}

/// JSON number, or the string "inf" for an infinite PSNR.
inline Json metric_json(double v)
{
    if (std::isfinite(v))
        return v;
    return v > 0 ? "inf" : "-inf";
}

/// Runs `body`, mapping library errors onto exit codes with a one-line diagnostic.
inline int guarded(std::ostream& err, const std::function<int()>& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
        return kIoExit;
    } catch (const FormatError& e) {
        err << "io error: " << e.what() << '\n';
        return kIoExit;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kComputeExit;
    }
}

namespace detail {

inline void require(bool ok, const char* key, const char* what)
{
    if (!ok)
        throw ConfigError(key, what);
}

inline std::filesystem::path sibling(const std::filesystem::path& out, const std::string& suffix)
{
    std::filesystem::path p = out;
    p.replace_extension();
    return p.string() + suffix;
}

} // namespace detail

/// Super-resolves paths.input with the references; writes the PNG, the field and the weight map.
inline int cmd_superres(const RunConfig& cfg, std::ostream& out)
{
    detail::require(!cfg.input.empty(), "paths.input", "an input image is required");
    detail::require(!cfg.refs.empty(), "paths.refs", "at least one reference is required");
    detail::require(!cfg.out.empty(), "paths.out", "an output path is required");
    cfg.subvector_count(cfg.extractor.stage_channels);

    const Image lr = read_png(cfg.input);
    const auto refs = read_images(cfg.refs);
    std::optional<Image> gt;
    if (!cfg.ground_truth.empty())
        gt = read_png(cfg.ground_truth);

    const auto res = run_superres(cfg, lr, refs);
    write_png(res.sr, cfg.out);
    write_tensor(field_to_tensor(res.swap.field), detail::sibling(cfg.out, ".field.tens"));
    save_tensor(res.swap.weights, detail::sibling(cfg.out, ".weights.tens"));

    Json j;
    j["output"] = cfg.out;
    if (gt) {
        if (gt->width != res.sr.width || gt->height != res.sr.height)
            throw IoError("ground truth dims differ from the super-resolved output");
        const Image bicubic = resize_bicubic(lr, res.sr.width, res.sr.height);
        j["psnr_y"] = metric_json(psnr_y(res.sr, *gt));
        j["ssim_y"] = ssim_y(res.sr, *gt);
        j["bicubic_psnr_y"] = metric_json(psnr_y(bicubic, *gt));
    }
    j["peak_bytes"] = res.peak_bytes;
    j["peak_reference_bytes"] = res.peak_reference_bytes;
    j["wall_ms"] = res.wall_ms;
    out << j.dump() << '\n';
    return kOk;
}

/// Hierarchical matcher against the brute-force oracle, on random features or on images.
inline int cmd_oracle_check(const RunConfig& cfg, std::ostream& out)
{
    std::vector<FeatureMap> refs;
    FeatureMap input;
    int n_c = 1;
    PartitionSpec spec = cfg.spec;
    if (!cfg.input.empty()) {
        detail::require(!cfg.refs.empty(), "paths.refs", "image mode needs at least one reference");
        n_c = cfg.subvector_count(cfg.extractor.stage_channels);
        const Extractor ex(cfg.extractor);
        input = extract(ex, read_png(cfg.input), cfg.exec).matching();
        for (const auto& r : read_images(cfg.refs))
            refs.push_back(extract(ex, to_lr_domain(r, cfg.synth.upscale), cfg.exec).matching());
    } else {
        const RandomCase& rc = cfg.random_case;
        n_c = spec.n_c > 0 ? spec.n_c : 1;
        if (rc.channels % n_c != 0)
            throw ConfigError("spec.n_c", std::to_string(n_c) + " does not divide oracle.channels = " +
                                              std::to_string(rc.channels));
        std::mt19937 gen(cfg.seed);
        input = random_features(gen, rc.channels, rc.height, rc.width, rc.levels);
        for (int m = 0; m < spec.n_m; ++m)
            refs.push_back(random_features(gen, rc.channels, rc.ref_height, rc.ref_width, rc.levels));
    }
    spec.n_m = static_cast<int>(refs.size());
    const auto cmp = compare_with_oracle(input, refs, spec, n_c, cfg.match, cfg.exec);

    Json j;
    j["mode"] = cmp.exact ? "exact" : "bound";
    j["positions"] = cmp.positions;
    j["mismatches"] = cmp.mismatches;
    j["provenance_errors"] = cmp.provenance_errors;
    j["max_score_gap"] = cmp.max_gap;
    j["tolerance"] = cmp.tolerance;
    out << j.dump() << '\n';
    return cmp.pass() ? kOk : kComputeExit;
}

/// Memory sweep over bench.sweep; CSV rows `n_r,peak_bytes,wall_ms,psnr_y`.
inline int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    detail::require(!cfg.input.empty(), "paths.input", "a ground-truth input image is required");
    detail::require(!cfg.refs.empty(), "paths.refs", "at least one reference is required");
    detail::require(!cfg.bench_sweep.empty(), "bench.sweep", "must list at least one N_R");
    cfg.subvector_count(cfg.extractor.stage_channels);
    const Image gt = read_png(cfg.input);
    const auto refs = read_images(cfg.refs);

    std::vector<BenchRow> rows;
    for (int n_r : cfg.bench_sweep)
        rows.push_back(bench_once(cfg, gt, refs, n_r));

    std::string csv = "n_r,peak_bytes,wall_ms,psnr_y\n";
    for (const auto& r : rows)
        csv += std::to_string(r.n_r) + "," + std::to_string(r.peak_bytes) + "," + format_fixed(r.wall_ms, 3) + "," +
               format_fixed(r.psnr_y, 4) + "\n";
    out << csv;
    if (!cfg.out.empty()) {
        std::ofstream f(cfg.out, std::ios::binary);
        if (!(f << csv))
            throw IoError("cannot write " + cfg.out);
    }

    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < rows.size(); ++b)
            if (rows[a].n_r < rows[b].n_r && rows[b].peak_bytes > rows[a].peak_bytes) {
                err << "error: peak_bytes rises from " << rows[a].peak_bytes << " at n_r=" << rows[a].n_r << " to "
                    << rows[b].peak_bytes << " at n_r=" << rows[b].n_r << '\n';
                return kComputeExit;
            }
    return kOk;
}

/// Y-channel PSNR and SSIM per (sr, gt) pair, then the means.
inline int cmd_evaluate(const std::vector<std::string>& paths, std::ostream& out)
{
    if (paths.empty() || paths.size() % 2 != 0)
        throw ConfigError("pairs", "expected an even, non-zero number of paths (sr gt ...)");
    std::vector<Json> lines;
    double sum_psnr = 0.0, sum_ssim = 0.0;
    for (std::size_t i = 0; i < paths.size(); i += 2) {
        const Image sr = read_png(paths[i]);
        const Image gt = read_png(paths[i + 1]);
        if (sr.width != gt.width || sr.height != gt.height)
            throw IoError("dims differ: " + paths[i] + " vs " + paths[i + 1]);
        const double p = psnr_y(sr, gt), s = ssim_y(sr, gt);
        sum_psnr += p;
        sum_ssim += s;
        Json j;
        j["path"] = paths[i];
        j["psnr_y"] = metric_json(p);
        j["ssim_y"] = s;
        lines.push_back(std::move(j));
    }
    const double n = static_cast<double>(lines.size());
    for (const auto& j : lines)
        out << j.dump() << '\n';
    Json agg;
    agg["count"] = lines.size();
    agg["mean_psnr_y"] = metric_json(sum_psnr / n);
    agg["mean_ssim_y"] = sum_ssim / n;
    out << agg.dump() << '\n';
    return kOk;
}

/// Writes scale1.tens .. scale3.tens for paths.input into the paths.out directory.
inline int cmd_extract(const RunConfig& cfg, std::ostream& out)
{
    detail::require(!cfg.input.empty(), "paths.input", "an input image is required");
    detail::require(!cfg.out.empty(), "paths.out", "an output directory is required");
    const Extractor ex(cfg.extractor);
    const FeaturePyramid pyr = extract(ex, read_png(cfg.input), cfg.exec);
    std::error_code ec;
    std::filesystem::create_directories(cfg.out, ec);
    if (ec)
        throw IoError("cannot create " + cfg.out + ": " + ec.message());
    Json j;
    j["output"] = cfg.out;
    Json scales = Json::array();
    for (int q = 0; q < kPyramidLevels; ++q) {
        const auto& s = pyr.scales[q];
        save_tensor(s, std::filesystem::path(cfg.out) / ("scale" + std::to_string(q + 1) + ".tens"));
        scales.push_back({s.channels(), s.height(), s.width()});
    }
    j["scales"] = scales;
    out << j.dump() << '\n';
    return kOk;
}

/// Matching only; writes the field tensor to paths.out.
inline int cmd_match(const RunConfig& cfg, std::ostream& out)
{
    detail::require(!cfg.input.empty(), "paths.input", "an input image is required");
    detail::require(!cfg.refs.empty(), "paths.refs", "at least one reference is required");
    detail::require(!cfg.out.empty(), "paths.out", "an output path is required");
    const int n_c = cfg.subvector_count(cfg.extractor.stage_channels);
    const Image lr = read_png(cfg.input);
    const auto refs = read_images(cfg.refs);

    MemoryLedger ledger;
    const Extractor ex(cfg.extractor);
    const FeaturePyramid input = extract(ex, lr, cfg.exec, &ledger);
    auto hold = track(&ledger, MemoryCategory::Input, input.bytes());
    std::vector<Image> refs_lr;
    for (const auto& r : refs)
        refs_lr.push_back(to_lr_domain(r, cfg.synth.upscale));
    const StreamingReferences source(ex, refs_lr);
    const auto swap = match_hierarchical(input.matching(), source, cfg.spec, n_c, cfg.match, cfg.exec, &ledger);
    write_tensor(field_to_tensor(swap.field), cfg.out);

    Json j;
    j["output"] = cfg.out;
    j["height"] = swap.field.height();
    j["width"] = swap.field.width();
    j["peak_bytes"] = ledger.peak_bytes();
    out << j.dump() << '\n';
    return kOk;
}

/// Full command-line entry point. args excludes the program name.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Hierarchical multi-reference patch matching and texture transfer", "mref"};
    app.require_subcommand(1);

    struct Flags
    {
        std::string config;
        std::string input, ground_truth, out, threads;
        std::vector<std::string> refs, sets, sweep, pairs;
        std::optional<std::uint32_t> seed;
    } f;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "key = value configuration file");
        sub->add_option("--input", f.input, "input image");
        sub->add_option("--ref", f.refs, "reference image (repeatable, order defines m)");
        sub->add_option("--ground-truth", f.ground_truth, "ground-truth image for metrics");
        sub->add_option("--out", f.out, "output path");
        sub->add_option("--threads", f.threads, "worker count or 'auto'");
        sub->add_option("--seed", f.seed, "seed for weights and random cases");
        sub->add_option("--set", f.sets, "override a config key: key=value (repeatable)");
    };
    auto* superres = app.add_subcommand("superres", "super-resolve an image");
    auto* oracle = app.add_subcommand("oracle-check", "compare hierarchical matching with brute force");
    auto* bench = app.add_subcommand("bench", "memory sweep over N_R");
    auto* evaluate = app.add_subcommand("evaluate", "Y-channel PSNR/SSIM of (sr, gt) pairs");
    auto* extract_cmd = app.add_subcommand("extract", "dump feature pyramids");
    auto* match_cmd = app.add_subcommand("match", "dump the match field");
    for (auto* sub : {superres, oracle, bench, extract_cmd, match_cmd})
        add_common(sub);
    bench->add_option("--sweep", f.sweep, "N_R values")->delimiter(',');
    evaluate->add_option("pairs", f.pairs, "sr gt [sr gt ...]")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigExit;
    }

    if (evaluate->parsed())
        return guarded(err, [&] { return cmd_evaluate(f.pairs, out); });

    RunConfig cfg;
    const int status = guarded(err, [&] {
        if (!f.config.empty())
            load_config_file(cfg, f.config);
        for (const auto& s : f.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(s, "--set expects key=value");
            apply_setting(cfg, std::string(detail::trim(std::string_view(s).substr(0, eq))),
                          std::string_view(s).substr(eq + 1));
        }
        if (!f.input.empty())
            cfg.input = f.input;
        if (!f.refs.empty())
            cfg.refs = f.refs;
        if (!f.ground_truth.empty())
            cfg.ground_truth = f.ground_truth;
        if (!f.out.empty())
            cfg.out = f.out;
        if (!f.threads.empty())
            apply_setting(cfg, "run.threads", f.threads);
        if (f.seed)
            cfg.seed = *f.seed;
        if (!f.sweep.empty()) {
            cfg.bench_sweep.clear();
            for (const auto& v : f.sweep)
                cfg.bench_sweep.push_back(detail::parse_number<int>("bench.sweep", v));
        }
        cfg.finalize();
        return kOk;
    });
    if (status != kOk)
        return status;

    return guarded(err, [&] {
        if (superres->parsed())
            return cmd_superres(cfg, out);
        if (oracle->parsed())
            return cmd_oracle_check(cfg, out);
        if (bench->parsed())
            return cmd_bench(cfg, out, err);
        if (extract_cmd->parsed())
            return cmd_extract(cfg, out);
        return cmd_match(cfg, out);
    });
}

} // namespace mref::app
