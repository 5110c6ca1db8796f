#include "simdiff/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "simdiff/errors.hpp"
#include "simdiff/experiment.hpp"
#include "simdiff/format.hpp"
#include "simdiff/forecast.hpp"
#include "simdiff/log.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    bool verbose = false;
};

RunConfig resolve(const Options& opt) {
    RunConfig cfg = load_run_config(opt.config);
    if (const char* env = std::getenv("SIMDIFF_OUT"); env && *env) cfg.out = env;
    if (const char* env = std::getenv("SIMDIFF_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            cfg.seed = std::stoull(env, &used);
            if (env[used] != '\0') throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(std::string("SIMDIFF_SEED is not an unsigned integer: ") + env);
        }
    }
    if (!opt.out.empty()) cfg.out = opt.out;
    if (opt.seed) cfg.seed = *opt.seed;
    cfg.finalize();
    fs::create_directories(cfg.out);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out) / name).string(); }

std::string checkpoint_path(const Options& opt, const RunConfig& cfg) {
    const std::string p = opt.checkpoint.empty() ? out_path(cfg, "model.ckpt") : opt.checkpoint;
    if (!fs::exists(p)) throw ArtifactMismatch("checkpoint not found: " + p);
    return p;
}

// The checkpoint must match the configured architecture and data shape.
void check_compatible(const DenoiserConfig& in_ckpt, DenoiserConfig configured, std::size_t channels,
                      const std::string& path) {
    configured.channels = channels;
    if (!(in_ckpt == configured)) {
        throw ArtifactMismatch("checkpoint " + path + " was trained with model " + config_to_json(in_ckpt) +
                               " but the config describes " + config_to_json(configured));
    }
}

int cmd_synth(const Options& opt, std::ostream& out) {
    const RunConfig cfg = resolve(opt);
    if (!cfg.data.synth) throw ConfigError("synth: config has no 'data.synth' section");
    const Dataset ds = build_dataset(cfg.data, cfg.seed);
    write_text_file(out_path(cfg, "data.csv"), dataset_to_csv(ds));
    const DriftTruth& t = *ds.truth;
    std::ostringstream os;
    os << "key,value\n"
       << "kind," << to_string(t.kind) << "\n"
       << "length," << ds.length() << "\n"
       << "channels," << ds.channels() << "\n"
       << "period," << fmt_double(t.params.period) << "\n"
       << "amplitude," << fmt_double(t.params.amplitude) << "\n"
       << "slope," << fmt_double(t.params.slope) << "\n"
       << "shift," << fmt_double(t.params.shift) << "\n"
       << "shift_index," << t.shift_index << "\n"
       << "scale_end," << fmt_double(t.params.scale_end) << "\n"
       << "noise," << fmt_double(t.params.noise) << "\n"
       << "seed," << t.seed << "\n";
    for (std::size_t c = 0; c < t.phase.size(); ++c) os << "phase_" << c << ',' << fmt_double(t.phase[c]) << "\n";
    write_text_file(out_path(cfg, "truth.csv"), os.str());
    out << "wrote " << out_path(cfg, "data.csv") << " (" << ds.length() << " x " << ds.channels() << ")\n";
    return kExitOk;
}

int cmd_train(const Options& opt, std::ostream& out) {
    RunConfig cfg = resolve(opt);
    const PreparedData data = prepare_data(cfg.data, cfg.seed);
    cfg.model.channels = data.ds.channels();
    DenoiserModel model(cfg.model, model_seed(cfg.seed));
    log::info("model parameters: " + std::to_string(model.params().count()));
    const FitResult fr = fit(model, data.train, data.val, cfg.train);
    write_text_file(out_path(cfg, "history.csv"), history_to_csv(fr.history));
    save_model(out_path(cfg, "model.ckpt"), model, ModelBundle{cfg.model, data.scaler, cfg.train, model_seed(cfg.seed)});
    write_text_file(out_path(cfg, "config.json"), run_config_to_json(cfg) + "\n");
    out << "trained " << fr.history.size() << " epochs; best val MSE " << fmt_double(fr.best_val_mse) << " at epoch "
        << fr.best_epoch << "\n";
    return kExitOk;
}

struct Loaded {
    RunConfig cfg;
    ModelBundle meta;
    std::optional<DenoiserModel> model;
    PreparedData data;
};

Loaded load_for_inference(const Options& opt) {
    Loaded l;
    l.cfg = resolve(opt);
    const std::string path = checkpoint_path(opt, l.cfg);
    l.model.emplace(load_model(path, &l.meta));
    l.data = prepare_data(l.cfg.data, l.cfg.seed, l.meta.scaler);
    check_compatible(l.meta.model, l.cfg.model, l.data.ds.channels(), path);
    return l;
}

int cmd_forecast(const Options& opt, std::ostream& out) {
    Loaded l = load_for_inference(opt);
    const RunConfig& cfg = l.cfg;
    const Dataset& ds = l.data.ds;
    const std::size_t lb = cfg.data.lookback;
    const std::size_t h = cfg.data.horizon;
    const std::size_t m = ds.channels();
    const std::size_t origin = ds.length() - lb;
    Tensor past({lb, m}, std::vector<double>(ds.values.data() + origin * m, ds.values.data() + ds.length() * m));
    Forecaster fc(*l.model, make_schedule(l.meta.schedule), cfg.max_rows);
    Tensor samples = fc.sample(past, cfg.draws, cfg.sampler, origin);

    // back to data units
    const Standardizer& sc = l.data.scaler;
    for (std::size_t i = 0; i < samples.numel(); ++i) samples[i] = samples[i] * sc.scale[i % m] + sc.mean[i % m];
    const Tensor mom = mom_grid(samples, effective_mom(cfg.mom, cfg.draws));
    const Tensor mean = mean_ensemble(samples);
    const Tensor single = single_draw(samples, 0);

    write_text_file(out_path(cfg, "samples.csv"), samples_to_csv(samples));
    std::ostringstream pt;
    pt << "t,channel,mom,mean,single\n";
    for (std::size_t t = 0; t < h; ++t)
        for (std::size_t c = 0; c < m; ++c) {
            const std::size_t i = t * m + c;
            pt << ds.length() + t << ',' << c << ',' << fmt_double(mom[i]) << ',' << fmt_double(mean[i]) << ','
               << fmt_double(single[i]) << '\n';
        }
    write_text_file(out_path(cfg, "point.csv"), pt.str());
    std::ostringstream ctx;
    ctx << "t,channel,value\n";
    for (std::size_t t = 0; t < lb; ++t)
        for (std::size_t c = 0; c < m; ++c) {
            const double v = past[t * m + c] * sc.scale[c] + sc.mean[c];
            ctx << origin + t << ',' << c << ',' << fmt_double(v) << '\n';
        }
    write_text_file(out_path(cfg, "context.csv"), ctx.str());
    out << "wrote " << cfg.draws << " draws of " << h << " x " << m << " to " << out_path(cfg, "samples.csv") << "\n";
    return kExitOk;
}

int cmd_evaluate(const Options& opt, std::ostream& out) {
    Loaded l = load_for_inference(opt);
    const RunConfig& cfg = l.cfg;
    const EvalReport rep =
        evaluate_forecasts(l.data.test,
                           model_forecaster(*l.model, make_schedule(l.meta.schedule), cfg.sampler, cfg.draws,
                                            cfg.max_rows),
                           cfg.mom);
    write_text_file(out_path(cfg, "report.csv"), rep.to_csv());
    write_text_file(out_path(cfg, "windows.csv"), rep.windows_csv());
    out << rep.summary();
    return kExitOk;
}

int cmd_ablate(const Options& opt, std::ostream& out) {
    RunConfig cfg = resolve(opt);
    const PreparedData data = prepare_data(cfg.data, cfg.seed);
    const auto rows = run_ni_ablation(cfg, data);
    write_text_file(out_path(cfg, "ablation.csv"), ablation_to_csv(rows));
    out << ablation_to_csv(rows);
    return kExitOk;
}

int cmd_bench(const Options& opt, std::ostream& out) {
    const RunConfig cfg = resolve(opt);
    const std::string path = checkpoint_path(opt, cfg);
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    const ModelBundle meta = read_model_meta(path);
    const NoiseSchedule sched = make_schedule(meta.schedule);
    const std::vector<std::size_t> grid = select_steps(sched.steps(), cfg.sampler.steps, cfg.sampler.skip);

    std::ostringstream table;
    std::ostringstream steps_csv;
    table << "horizon,future_tokens,steps,ms_per_draw\n";
    steps_csv << "horizon,step,k,ms\n";
    for (std::size_t h : cfg.bench.horizons) {
        DenoiserConfig mc = meta.model;
        mc.horizon = h;
        try {
            mc.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("bench: horizon " + std::to_string(h) + ": " + e.what());
        }
        DenoiserModel model(mc, meta.seed);
        nn::restore(model.params(), ckpt);  // weight shapes do not depend on H

        Tensor past_rows({1, mc.lookback});
        CounterRng(substream(cfg.seed, {0xbe, h})).fill_normal(past_rows.storage());
        const nn::Var past = nn::Var::constant(patchify_rows(past_rows, mc.patch_len, mc.stride));
        std::vector<double> step_ms(grid.size() - 1, 0.0);
        double best = 0.0;
        for (std::size_t rep = 0; rep < cfg.bench.repeats; ++rep) {
            std::size_t step = 0;
            std::vector<double> ms(grid.size() - 1, 0.0);
            DenoiseFn denoise = [&](const Tensor& y_k, std::size_t k) {
                const auto t0 = std::chrono::steady_clock::now();
                nn::NoGradGuard guard;
                Tensor fut = patchify_rows(y_k.reshaped({1, h}), mc.patch_len, mc.stride);
                const double tf = static_cast<double>(k) / static_cast<double>(sched.steps());
                Tensor y0 = model.forward(past, fut, std::span<const double>(&tf, 1)).value().reshaped({1, h, 1});
                ms[step++] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                return y0;
            };
            const std::uint64_t key = 0;
            const auto t0 = std::chrono::steady_clock::now();
            sample_keyed(denoise, h, 1, std::span<const std::uint64_t>(&key, 1), cfg.sampler, sched);
            const double total = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            if (rep == 0 || total < best) {
                best = total;
                step_ms = ms;
            }
        }
        table << h << ',' << mc.future_tokens() << ',' << cfg.sampler.steps << ',' << fmt_double(best) << '\n';
        for (std::size_t i = 0; i < step_ms.size(); ++i) {
            steps_csv << h << ',' << i << ',' << grid[i] << ',' << fmt_double(step_ms[i]) << '\n';
        }
    }
    write_text_file(out_path(cfg, "bench.csv"), table.str());
    if (opt.verbose) write_text_file(out_path(cfg, "bench_steps.csv"), steps_csv.str());
    out << table.str();
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Diffusion forecaster: synth, train, forecast, evaluate, ablate-ni, bench"};
    app.require_subcommand(1);
    Options opt;
    auto add_common = [&](CLI::App* sub, bool checkpoint) {
        sub->add_option("--config", opt.config, "JSON run configuration")->required();
        sub->add_option("--out", opt.out, "Output directory (overrides config and SIMDIFF_OUT)");
        sub->add_option("--seed", opt.seed, "Run seed (overrides config and SIMDIFF_SEED)");
        if (checkpoint) sub->add_option("--checkpoint", opt.checkpoint, "Model checkpoint (default <out>/model.ckpt)");
        sub->add_flag("--verbose,-v", opt.verbose, "Progress logging and extra outputs");
    };
    auto* synth = app.add_subcommand("synth", "Generate a synthetic drift dataset");
    auto* train = app.add_subcommand("train", "Train a model; writes model.ckpt and history.csv");
    auto* forecast = app.add_subcommand("forecast", "Forecast past the end of the series");
    auto* evaluate = app.add_subcommand("evaluate", "Score the test split; writes report.csv");
    auto* ablate = app.add_subcommand("ablate-ni", "Train twins with and without normalization independence");
    auto* bench = app.add_subcommand("bench", "Time single draws across horizons");
    add_common(synth, false);
    add_common(train, false);
    add_common(forecast, true);
    add_common(evaluate, true);
    add_common(ablate, false);
    add_common(bench, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    log::set_verbose(opt.verbose);
    try {
        if (synth->parsed()) return cmd_synth(opt, out);
        if (train->parsed()) return cmd_train(opt, out);
        if (forecast->parsed()) return cmd_forecast(opt, out);
        if (evaluate->parsed()) return cmd_evaluate(opt, out);
        if (ablate->parsed()) return cmd_ablate(opt, out);
        if (bench->parsed()) return cmd_bench(opt, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ArtifactMismatch& e) {
        err << "artifact mismatch: " << e.what() << "\n";
        return kExitArtifact;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace simdiff
