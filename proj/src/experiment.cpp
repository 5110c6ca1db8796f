#include "simdiff/experiment.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "simdiff/errors.hpp"
#include "simdiff/format.hpp"
#include "simdiff/forecast.hpp"
#include "simdiff/log.hpp"
#include "simdiff/nn.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + section + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) throw ConfigError("config: unknown key '" + section + "." + key + "'");
    }
}

std::string where(const std::string& section, const char* key) { return section + "." + key; }

void read(const json& j, const std::string& section, const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_unsigned()) throw ConfigError("config: '" + where(section, key) + "' must be a nonnegative integer");
    out = v.get<std::size_t>();
}

void read(const json& j, const std::string& section, const char* key, std::uint64_t& out, int /*seed*/) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_unsigned()) throw ConfigError("config: '" + where(section, key) + "' must be a nonnegative integer");
    out = v.get<std::uint64_t>();
}

void read(const json& j, const std::string& section, const char* key, double& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError("config: '" + where(section, key) + "' must be a number");
    out = v.get<double>();
}

void read(const json& j, const std::string& section, const char* key, bool& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError("config: '" + where(section, key) + "' must be true or false");
    out = v.get<bool>();
}

void read(const json& j, const std::string& section, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_string()) throw ConfigError("config: '" + where(section, key) + "' must be a string");
    out = v.get<std::string>();
}

template <typename Enum, typename Parse>
void read_enum(const json& j, const std::string& section, const char* key, Enum& out, Parse parse) {
    std::string s;
    read(j, section, key, s);
    if (s.empty()) return;
    try {
        out = parse(s);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config: '" + where(section, key) + "': " + e.what());
    }
}

void parse_data(const json& j, DataSpec& d) {
    check_keys(j, "data", {"path", "synth", "lookback", "horizon", "split_fractions", "split_counts", "standardize",
                           "eval_stride"});
    read(j, "data", "path", d.path);
    read(j, "data", "lookback", d.lookback);
    read(j, "data", "horizon", d.horizon);
    read(j, "data", "standardize", d.standardize);
    read(j, "data", "eval_stride", d.eval_stride);
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        check_keys(s, "data.synth", {"kind", "length", "channels", "period", "amplitude", "slope", "shift", "shift_at",
                                     "scale_end", "noise"});
        d.synth = true;
        read_enum(s, "data.synth", "kind", d.kind, parse_drift_kind);
        read(s, "data.synth", "length", d.length);
        read(s, "data.synth", "channels", d.channels);
        read(s, "data.synth", "period", d.params.period);
        read(s, "data.synth", "amplitude", d.params.amplitude);
        read(s, "data.synth", "slope", d.params.slope);
        read(s, "data.synth", "shift", d.params.shift);
        read(s, "data.synth", "shift_at", d.params.shift_at);
        read(s, "data.synth", "scale_end", d.params.scale_end);
        read(s, "data.synth", "noise", d.params.noise);
    }
    if (j.contains("split_fractions")) {
        const json& f = j.at("split_fractions");
        if (!f.is_array() || f.size() != 3 || !std::all_of(f.begin(), f.end(), [](const json& v) { return v.is_number(); })) {
            throw ConfigError("config: 'data.split_fractions' must be three numbers");
        }
        for (std::size_t i = 0; i < 3; ++i) d.split_fractions[i] = f[i].get<double>();
    }
    if (j.contains("split_counts")) {
        const json& c = j.at("split_counts");
        if (!c.is_array() || c.size() != 3 ||
            !std::all_of(c.begin(), c.end(), [](const json& v) { return v.is_number_unsigned(); })) {
            throw ConfigError("config: 'data.split_counts' must be three nonnegative integers");
        }
        d.split_counts = SplitCounts{c[0].get<std::size_t>(), c[1].get<std::size_t>(), c[2].get<std::size_t>()};
    }
    if (!d.path.empty() && d.synth) throw ConfigError("config: give either 'data.path' or 'data.synth', not both");
}

void parse_model(const json& j, DenoiserConfig& m) {
    check_keys(j, "model", {"patch_len", "stride", "d_model", "n_heads", "n_layers", "ffn_mult", "dropout", "norm",
                            "rope_base"});
    read(j, "model", "patch_len", m.patch_len);
    read(j, "model", "stride", m.stride);
    read(j, "model", "d_model", m.d_model);
    read(j, "model", "n_heads", m.n_heads);
    read(j, "model", "n_layers", m.n_layers);
    read(j, "model", "ffn_mult", m.ffn_mult);
    read(j, "model", "dropout", m.dropout);
    read(j, "model", "rope_base", m.rope_base);
    read_enum(j, "model", "norm", m.norm, parse_norm_mode);
}

void parse_train(const json& j, TrainConfig& t) {
    check_keys(j, "train", {"lr", "max_epochs", "patience", "batch_size", "K", "schedule", "schedule_offset",
                            "beta_min", "beta_max", "loss_eps", "invert_weight", "window_stride", "val_stride",
                            "steps_per_epoch", "val_sampler_steps"});
    read(j, "train", "lr", t.lr);
    read(j, "train", "max_epochs", t.max_epochs);
    read(j, "train", "patience", t.patience);
    read(j, "train", "batch_size", t.batch_size);
    read(j, "train", "K", t.diffusion_steps);
    read_enum(j, "train", "schedule", t.schedule, parse_schedule_kind);
    read(j, "train", "schedule_offset", t.schedule_offset);
    read(j, "train", "beta_min", t.beta_min);
    read(j, "train", "beta_max", t.beta_max);
    read(j, "train", "loss_eps", t.loss_eps);
    read(j, "train", "invert_weight", t.invert_weight);
    read(j, "train", "window_stride", t.window_stride);
    read(j, "train", "val_stride", t.val_stride);
    read(j, "train", "steps_per_epoch", t.steps_per_epoch);
    read(j, "train", "val_sampler_steps", t.val_sampler_steps);
}

}  // namespace

std::uint64_t model_seed(std::uint64_t run_seed) { return substream(run_seed, {11}); }
std::uint64_t sampler_seed(std::uint64_t run_seed) { return substream(run_seed, {12}); }
std::uint64_t mom_seed(std::uint64_t run_seed) { return substream(run_seed, {13}); }

void RunConfig::finalize() {
    model.lookback = data.lookback;
    model.horizon = data.horizon;
    if (data.synth) model.channels = data.channels;
    train.seed = seed;
    sampler.seed = sampler_seed(seed);
    mom.seed = mom_seed(seed);
    try {
        model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    train.validate();
    if (sampler.steps < 1 || sampler.steps > train.diffusion_steps) {
        throw ConfigError("config: sampler.steps must be in [1, K]");
    }
    if (draws < 1) throw ConfigError("config: sampler.draws must be >= 1");
    if (mom.groups < 1 || mom.repeats < 1) throw ConfigError("config: mom.groups and mom.repeats must be >= 1");
    if (data.eval_stride < 1) throw ConfigError("config: data.eval_stride must be >= 1");
    if (max_rows < 1) throw ConfigError("config: max_rows must be >= 1");
    if (bench.horizons.empty() || bench.repeats < 1) throw ConfigError("config: bench needs horizons and repeats >= 1");
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "config", {"seed", "out", "data", "model", "train", "sampler", "mom", "bench", "max_rows"});
    RunConfig c;
    read(j, "config", "seed", c.seed, 0);
    read(j, "config", "out", c.out);
    read(j, "config", "max_rows", c.max_rows);
    if (j.contains("data")) parse_data(j.at("data"), c.data);
    if (j.contains("model")) parse_model(j.at("model"), c.model);
    if (j.contains("train")) parse_train(j.at("train"), c.train);
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s, "sampler", {"steps", "skip", "stochastic", "draws"});
        read(s, "sampler", "steps", c.sampler.steps);
        read_enum(s, "sampler", "skip", c.sampler.skip, parse_skip_kind);
        read(s, "sampler", "stochastic", c.sampler.stochastic);
        read(s, "sampler", "draws", c.draws);
    }
    if (j.contains("mom")) {
        const json& m = j.at("mom");
        check_keys(m, "mom", {"groups", "repeats"});
        read(m, "mom", "groups", c.mom.groups);
        read(m, "mom", "repeats", c.mom.repeats);
    }
    if (j.contains("bench")) {
        const json& b = j.at("bench");
        check_keys(b, "bench", {"horizons", "repeats"});
        read(b, "bench", "repeats", c.bench.repeats);
        if (b.contains("horizons")) {
            const json& h = b.at("horizons");
            if (!h.is_array() || !std::all_of(h.begin(), h.end(), [](const json& v) { return v.is_number_unsigned(); })) {
                throw ConfigError("config: 'bench.horizons' must be a list of positive integers");
            }
            c.bench.horizons = h.get<std::vector<std::size_t>>();
        }
    }
    c.finalize();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception&) {
        throw ConfigError("cannot read config file '" + path + "'");
    }
    return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& c) {
    json data{{"lookback", c.data.lookback},
              {"horizon", c.data.horizon},
              {"split_fractions", c.data.split_fractions},
              {"standardize", c.data.standardize},
              {"eval_stride", c.data.eval_stride}};
    if (c.data.split_counts) {
        data["split_counts"] = {c.data.split_counts->train, c.data.split_counts->val, c.data.split_counts->test};
    }
    if (c.data.synth) {
        const DriftParams& p = c.data.params;
        data["synth"] = {{"kind", to_string(c.data.kind)}, {"length", c.data.length}, {"channels", c.data.channels},
                         {"period", p.period}, {"amplitude", p.amplitude}, {"slope", p.slope}, {"shift", p.shift},
                         {"shift_at", p.shift_at}, {"scale_end", p.scale_end}, {"noise", p.noise}};
    } else {
        data["path"] = c.data.path;
    }
    const DenoiserConfig& m = c.model;
    const TrainConfig& t = c.train;
    json j{{"seed", c.seed},
           {"out", c.out},
           {"max_rows", c.max_rows},
           {"data", data},
           {"model",
            {{"patch_len", m.patch_len}, {"stride", m.stride}, {"d_model", m.d_model}, {"n_heads", m.n_heads},
             {"n_layers", m.n_layers}, {"ffn_mult", m.ffn_mult}, {"dropout", m.dropout}, {"norm", to_string(m.norm)},
             {"rope_base", m.rope_base}}},
           {"train",
            {{"lr", t.lr}, {"max_epochs", t.max_epochs}, {"patience", t.patience}, {"batch_size", t.batch_size},
             {"K", t.diffusion_steps}, {"schedule", to_string(t.schedule)}, {"schedule_offset", t.schedule_offset},
             {"beta_min", t.beta_min}, {"beta_max", t.beta_max}, {"loss_eps", t.loss_eps},
             {"invert_weight", t.invert_weight}, {"window_stride", t.window_stride}, {"val_stride", t.val_stride},
             {"steps_per_epoch", t.steps_per_epoch}, {"val_sampler_steps", t.val_sampler_steps}}},
           {"sampler",
            {{"steps", c.sampler.steps}, {"skip", to_string(c.sampler.skip)}, {"stochastic", c.sampler.stochastic},
             {"draws", c.draws}}},
           {"mom", {{"groups", c.mom.groups}, {"repeats", c.mom.repeats}}},
           {"bench", {{"horizons", c.bench.horizons}, {"repeats", c.bench.repeats}}}};
    return j.dump(2);
}

Dataset build_dataset(const DataSpec& spec, std::uint64_t seed) {
    if (spec.synth) {
        const std::size_t need = spec.lookback + spec.horizon + 100;
        if (spec.length < need) {
            throw ConfigError("synth: length " + std::to_string(spec.length) + " is below L + H + 100 = " +
                              std::to_string(need));
        }
        return synth_drift(spec.kind, spec.length, spec.channels, spec.params, seed);
    }
    if (spec.path.empty()) throw ConfigError("config: dataset missing; set 'data.path' or 'data.synth'");
    return load_csv(spec.path);
}

PreparedData prepare_data(const DataSpec& spec, std::uint64_t seed, const std::optional<Standardizer>& scaler) {
    PreparedData p;
    p.ds = build_dataset(spec, seed);
    const SplitCounts counts =
        spec.split_counts ? *spec.split_counts : split_from_fractions(p.ds.length(), spec.split_fractions);
    set_splits(p.ds, counts, spec.lookback, spec.horizon);
    if (scaler) {
        p.scaler = *scaler;
        if (p.scaler.mean.size() != p.ds.channels()) {
            throw ArtifactMismatch("checkpoint expects " + std::to_string(p.scaler.mean.size()) +
                                   " channels, dataset has " + std::to_string(p.ds.channels()));
        }
    } else if (spec.standardize) {
        p.scaler = fit_standardizer(p.ds);
    } else {
        p.scaler.mean.assign(p.ds.channels(), 0.0);
        p.scaler.scale.assign(p.ds.channels(), 1.0);
    }
    apply_standardizer(p.ds, p.scaler);
    p.train = windows(p.ds, Split::train, spec.lookback, spec.horizon);
    p.val = windows(p.ds, Split::val, spec.lookback, spec.horizon);
    p.test = windows(p.ds, Split::test, spec.lookback, spec.horizon, spec.eval_stride);
    return p;
}

namespace {

json model_json(const DenoiserConfig& m) { return json::parse(config_to_json(m)); }

}  // namespace

void save_model(const std::string& path, const DenoiserModel& model, const ModelBundle& meta) {
    const TrainConfig& t = meta.schedule;
    json j{{"kind", "simdiff-model"},
           {"model", model_json(model.config())},
           {"scaler", {{"mean", meta.scaler.mean}, {"scale", meta.scaler.scale}}},
           {"schedule",
            {{"K", t.diffusion_steps}, {"kind", to_string(t.schedule)}, {"offset", t.schedule_offset},
             {"beta_min", t.beta_min}, {"beta_max", t.beta_max}}},
           {"seed", meta.seed}};
    nn::save_checkpoint(path, nn::snapshot(model.params(), j.dump()));
}

namespace {

ModelBundle parse_meta(const std::string& meta_text, const std::string& path) {
    try {
        const json j = json::parse(meta_text);
        if (j.at("kind").get<std::string>() != "simdiff-model") throw ArtifactMismatch(path + " is not a model checkpoint");
        ModelBundle b;
        b.model = config_from_json(j.at("model").dump());
        b.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
        b.scaler.scale = j.at("scaler").at("scale").get<std::vector<double>>();
        const json& s = j.at("schedule");
        b.schedule.diffusion_steps = s.at("K").get<std::size_t>();
        b.schedule.schedule = parse_schedule_kind(s.at("kind").get<std::string>());
        b.schedule.schedule_offset = s.at("offset").get<double>();
        b.schedule.beta_min = s.at("beta_min").get<double>();
        b.schedule.beta_max = s.at("beta_max").get<double>();
        b.seed = j.at("seed").get<std::uint64_t>();
        b.model.validate();
        return b;
    } catch (const ArtifactMismatch&) {
        throw;
    } catch (const std::exception& e) {
        throw ArtifactMismatch("checkpoint " + path + " has invalid metadata: " + e.what());
    }
}

}  // namespace

ModelBundle read_model_meta(const std::string& path) {
    return parse_meta(nn::load_checkpoint(path).metadata_json, path);
}

DenoiserModel load_model(const std::string& path, ModelBundle* meta) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    ModelBundle b = parse_meta(ckpt.metadata_json, path);
    DenoiserModel model(b.model, b.seed);
    if (ckpt.tensors.size() != model.params().items().size()) {
        throw ArtifactMismatch("checkpoint " + path + " holds " + std::to_string(ckpt.tensors.size()) +
                               " tensors, model has " + std::to_string(model.params().items().size()));
    }
    nn::restore(model.params(), ckpt);
    if (meta) *meta = std::move(b);
    return model;
}

MoMConfig effective_mom(const MoMConfig& cfg, std::size_t draws) {
    MoMConfig m = cfg;
    m.groups = std::min(cfg.groups, draws);
    return m;
}

EvalReport evaluate_forecasts(std::span<const SeriesWindow> windows, const BatchForecastFn& forecast,
                              const MoMConfig& mom, std::size_t chunk) {
    if (windows.empty()) throw ConfigError("evaluate: no test windows");
    EvalAccumulator acc;
    chunk = std::max<std::size_t>(chunk, 1);
    for (std::size_t begin = 0; begin < windows.size(); begin += chunk) {
        const std::size_t end = std::min(windows.size(), begin + chunk);
        std::vector<Tensor> pasts;
        std::vector<std::uint64_t> keys;
        for (std::size_t i = begin; i < end; ++i) {
            pasts.push_back(windows[i].x);
            keys.push_back(windows[i].origin);
        }
        const std::vector<Tensor> draws = forecast(pasts, keys);
        if (draws.size() != pasts.size()) throw ShapeError("evaluate: forecaster returned wrong window count");
        for (std::size_t i = begin; i < end; ++i) {
            const Tensor& s = draws[i - begin];
            const MoMConfig m = effective_mom(mom, s.dim(0));
            acc.add(windows[i].origin, s, single_draw(s, 0), mom_grid(s, m), windows[i].y);
        }
    }
    return acc.report();
}

BatchForecastFn model_forecaster(const DenoiserModel& model, const NoiseSchedule& sched,
                                 const ReverseSamplerConfig& sampler, std::size_t draws, std::size_t max_rows) {
    return [&model, sched, sampler, draws, max_rows](std::span<const Tensor> pasts,
                                                      std::span<const std::uint64_t> keys) {
        Forecaster fc(model, sched, max_rows);
        return fc.sample_many(pasts, keys, draws, sampler);
    };
}

std::vector<AblationRow> run_ni_ablation(const RunConfig& cfg, const PreparedData& data) {
    std::vector<AblationRow> rows;
    const NoiseSchedule sched = make_schedule(cfg.train);
    for (bool ni : {true, false}) {
        DenoiserConfig mc = cfg.model;
        mc.channels = data.ds.channels();
        mc.norm = ni ? NormMode::independent : NormMode::shared;
        AblationRow row;
        row.ni = ni;
        row.seed = cfg.seed;
        row.model_seed = model_seed(cfg.seed);
        DenoiserModel model(mc, row.model_seed);
        const FitResult fr = fit(model, data.train, data.val, cfg.train);
        row.best_val_mse = fr.best_val_mse;
        row.epochs = fr.history.size();
        const EvalReport rep = evaluate_forecasts(
            data.test, model_forecaster(model, sched, cfg.sampler, cfg.draws, cfg.max_rows), cfg.mom);
        row.mse = rep.mse;
        row.mse_e = rep.mse_e;
        log::info(std::string("ablation ni=") + (ni ? "true" : "false") + " mse " + fmt_double(row.mse));
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "ni,seed,model_seed,mse,mse_e,best_val_mse,epochs\n";
    for (const auto& r : rows) {
        os << (r.ni ? "true" : "false") << ',' << r.seed << ',' << r.model_seed << ',' << fmt_double(r.mse) << ','
           << fmt_double(r.mse_e) << ',' << fmt_double(r.best_val_mse) << ',' << r.epochs << '\n';
    }
    return os.str();
}

}  // namespace simdiff
