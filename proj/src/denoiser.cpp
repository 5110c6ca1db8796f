#include "simdiff/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "simdiff/errors.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

void DenoiserConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("denoiser config: " + msg); };
    if (patch_len < 1) fail("patch_len must be >= 1");
    if (stride < 1 || stride > patch_len) fail("stride must satisfy 1 <= stride <= patch_len");
    if (n_heads < 1 || d_model % (2 * n_heads) != 0) fail("d_model must be divisible by 2 * n_heads");
    if (n_layers < 1) fail("n_layers must be >= 1");
    if (ffn_mult < 1) fail("ffn_mult must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
    if (lookback < patch_len) fail("lookback must be >= patch_len");
    if (horizon < patch_len) fail("horizon must be >= patch_len");
    if (channels < 1) fail("channels must be >= 1");
    if (!(rope_base > 1.0)) fail("rope_base must be > 1");
}

std::size_t DenoiserConfig::past_tokens() const { return token_count(lookback, patch_len, stride); }
std::size_t DenoiserConfig::future_tokens() const { return token_count(horizon, patch_len, stride); }

bool operator==(const DenoiserConfig& a, const DenoiserConfig& b) {
    return a.patch_len == b.patch_len && a.stride == b.stride && a.d_model == b.d_model &&
           a.n_heads == b.n_heads && a.n_layers == b.n_layers && a.ffn_mult == b.ffn_mult &&
           a.dropout == b.dropout && a.lookback == b.lookback && a.horizon == b.horizon &&
           a.channels == b.channels && a.norm == b.norm && a.rope_base == b.rope_base;
}

std::size_t token_count(std::size_t length, std::size_t patch_len, std::size_t stride) {
    if (length < patch_len) {
        throw ShapeError("patchify: series length " + std::to_string(length) + " shorter than patch " +
                         std::to_string(patch_len));
    }
    return (length - patch_len + stride - 1) / stride + 1;
}

std::vector<std::size_t> patch_offsets(std::size_t length, std::size_t patch_len, std::size_t stride) {
    const std::size_t n = token_count(length, patch_len, stride);
    std::vector<std::size_t> off(n);
    for (std::size_t i = 0; i < n; ++i) off[i] = std::min(i * stride, length - patch_len);
    return off;
}

Tensor patchify(std::span<const double> series, std::size_t patch_len, std::size_t stride) {
    const auto off = patch_offsets(series.size(), patch_len, stride);
    Tensor out({off.size(), patch_len});
    for (std::size_t i = 0; i < off.size(); ++i)
        std::memcpy(out.data() + i * patch_len, series.data() + off[i], patch_len * sizeof(double));
    return out;
}

Tensor patchify_rows(const Tensor& series, std::size_t patch_len, std::size_t stride) {
    if (series.rank() != 2) throw ShapeError("patchify_rows: expected [B, T], got " + shape_str(series.shape()));
    const std::size_t b = series.dim(0);
    const std::size_t t = series.dim(1);
    const auto off = patch_offsets(t, patch_len, stride);
    Tensor out({b, off.size(), patch_len});
    double* dst = out.data();
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t o : off) {
            std::memcpy(dst, series.data() + r * t + o, patch_len * sizeof(double));
            dst += patch_len;
        }
    return out;
}

namespace {

// Coverage count per time index for the overlap average.
std::vector<double> coverage(std::size_t length, std::size_t patch_len, std::size_t stride) {
    std::vector<double> cnt(length, 0.0);
    for (std::size_t o : patch_offsets(length, patch_len, stride))
        for (std::size_t j = 0; j < patch_len; ++j) cnt[o + j] += 1.0;
    return cnt;
}

}  // namespace

std::vector<double> unpatchify(const Tensor& tokens, std::size_t length, std::size_t stride) {
    const std::size_t p = tokens.dim(1);
    const auto off = patch_offsets(length, p, stride);
    if (off.size() != tokens.dim(0)) throw ShapeError("unpatchify: token count does not match length");
    const auto cnt = coverage(length, p, stride);
    std::vector<double> out(length, 0.0);
    for (std::size_t i = 0; i < off.size(); ++i)
        for (std::size_t j = 0; j < p; ++j) out[off[i] + j] += tokens[i * p + j];
    for (std::size_t t = 0; t < length; ++t) out[t] /= cnt[t];
    return out;
}

namespace {

// cos/sin tables [T, d/2]; rows with negative position get (1, 0).
void rope_tables(std::span<const double> positions, std::size_t d, double base, std::vector<double>& cs,
                 std::vector<double>& sn) {
    const std::size_t half = d / 2;
    cs.assign(positions.size() * half, 1.0);
    sn.assign(positions.size() * half, 0.0);
    for (std::size_t t = 0; t < positions.size(); ++t) {
        if (positions[t] < 0.0) continue;
        for (std::size_t i = 0; i < half; ++i) {
            const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double ang = positions[t] * theta;
            cs[t * half + i] = std::cos(ang);
            sn[t * half + i] = std::sin(ang);
        }
    }
}

// Rotates rows of [rows, T, d] in place of `out`; sign = -1 applies the inverse.
void rope_apply(const double* in, double* out, std::size_t rows, std::size_t t_len, std::size_t d,
                const std::vector<double>& cs, const std::vector<double>& sn, double sign, bool accumulate) {
    const std::size_t half = d / 2;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < t_len; ++t) {
            const double* x = in + (r * t_len + t) * d;
            double* y = out + (r * t_len + t) * d;
            for (std::size_t i = 0; i < half; ++i) {
                const double c = cs[t * half + i];
                const double s = sign * sn[t * half + i];
                const double a = x[2 * i];
                const double b = x[2 * i + 1];
                const double ya = a * c - b * s;
                const double yb = a * s + b * c;
                if (accumulate) {
                    y[2 * i] += ya;
                    y[2 * i + 1] += yb;
                } else {
                    y[2 * i] = ya;
                    y[2 * i + 1] = yb;
                }
            }
        }
}

}  // namespace

Tensor rope_rotate(const Tensor& x, std::span<const double> positions, double base) {
    if (x.rank() != 2 || x.dim(0) != positions.size()) {
        throw ShapeError("rope_rotate: expected [n, d] with n positions, got " + shape_str(x.shape()));
    }
    const std::size_t d = x.dim(1);
    if (d % 2 != 0) throw ShapeError("rope_rotate: head dimension must be even, got " + std::to_string(d));
    std::vector<double> cs, sn;
    rope_tables(positions, d, base, cs, sn);
    Tensor out(x.shape());
    rope_apply(x.data(), out.data(), 1, positions.size(), d, cs, sn, 1.0, false);
    return out;
}

namespace nn {

Var rope(const Var& x, std::span<const double> positions, double base) {
    const Shape& s = x.shape();
    if (s.size() != 3 || s[1] != positions.size() || s[2] % 2 != 0) {
        throw ShapeError("rope: expected [B, T, even d] with T positions, got " + shape_str(s));
    }
    auto cs = std::make_shared<std::vector<double>>();
    auto sn = std::make_shared<std::vector<double>>();
    rope_tables(positions, s[2], base, *cs, *sn);
    Tensor out(s);
    rope_apply(x.value().data(), out.data(), s[0], s[1], s[2], *cs, *sn, 1.0, false);
    return make_op(std::move(out), {x}, "rope", [s, cs, sn](Node& n) {
        // rotation is orthogonal: the adjoint is the inverse rotation
        rope_apply(n.grad.data(), n.parents[0]->grad_buffer().data(), s[0], s[1], s[2], *cs, *sn, -1.0, true);
    });
}

Var unpatchify(const Var& tokens, std::size_t length, std::size_t stride) {
    const Shape& s = tokens.shape();
    if (s.size() != 3) throw ShapeError("unpatchify: expected [B, n_tok, P], got " + shape_str(s));
    const std::size_t b = s[0];
    const std::size_t p = s[2];
    auto off = std::make_shared<std::vector<std::size_t>>(patch_offsets(length, p, stride));
    if (off->size() != s[1]) throw ShapeError("unpatchify: token count does not match length");
    auto inv = std::make_shared<std::vector<double>>(coverage(length, p, stride));
    for (double& c : *inv) c = 1.0 / c;
    const std::size_t n_tok = s[1];
    Tensor out({b, length}, 0.0);
    for (std::size_t r = 0; r < b; ++r) {
        const double* tok = tokens.value().data() + r * n_tok * p;
        double* y = out.data() + r * length;
        for (std::size_t i = 0; i < n_tok; ++i)
            for (std::size_t j = 0; j < p; ++j) y[(*off)[i] + j] += tok[i * p + j];
        for (std::size_t t = 0; t < length; ++t) y[t] *= (*inv)[t];
    }
    return make_op(std::move(out), {tokens}, "unpatchify", [b, n_tok, p, length, off, inv](Node& n) {
        double* dx = n.parents[0]->grad_buffer().data();
        for (std::size_t r = 0; r < b; ++r) {
            const double* dy = n.grad.data() + r * length;
            for (std::size_t i = 0; i < n_tok; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                    const std::size_t t = (*off)[i] + j;
                    dx[(r * n_tok + i) * p + j] += dy[t] * (*inv)[t];
                }
        }
    });
}

}  // namespace nn

namespace {

Tensor init_normal(Shape shape, double stddev, CounterRng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = stddev * rng.normal();
    return t;
}

std::string layer_key(std::size_t layer, const char* name) {
    return "blocks." + std::to_string(layer) + "." + name;
}

}  // namespace

DenoiserModel::DenoiserModel(DenoiserConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    CounterRng rng(substream(seed, {0x1417}));
    const std::size_t d = cfg_.d_model;
    const std::size_t p = cfg_.patch_len;
    const std::size_t f = d * cfg_.ffn_mult;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));

    params_.add("ni.log_gamma", Tensor({cfg_.channels}, 0.0));
    params_.add("ni.beta", Tensor({cfg_.channels}, 0.0));
    params_.add("embed.past.w", init_normal({p, d}, 1.0 / std::sqrt(static_cast<double>(p)), rng));
    params_.add("embed.past.b", Tensor({d}, 0.0));
    params_.add("embed.future.w", init_normal({p, d}, 1.0 / std::sqrt(static_cast<double>(p)), rng));
    params_.add("embed.future.b", Tensor({d}, 0.0));
    params_.add("embed.time.w", init_normal({1, d}, 1.0, rng));
    params_.add("embed.time.b", Tensor({d}, 0.0));
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        params_.add(layer_key(l, "ln1.g"), Tensor({d}, 1.0));
        params_.add(layer_key(l, "ln1.b"), Tensor({d}, 0.0));
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
            params_.add(layer_key(l, w), init_normal({d, d}, sd, rng));
        }
        for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
            params_.add(layer_key(l, b), Tensor({d}, 0.0));
        }
        params_.add(layer_key(l, "ln2.g"), Tensor({d}, 1.0));
        params_.add(layer_key(l, "ln2.b"), Tensor({d}, 0.0));
        params_.add(layer_key(l, "ffn.w1"), init_normal({d, f}, sd, rng));
        params_.add(layer_key(l, "ffn.b1"), Tensor({f}, 0.0));
        params_.add(layer_key(l, "ffn.w2"), init_normal({f, d}, 1.0 / std::sqrt(static_cast<double>(f)), rng));
        params_.add(layer_key(l, "ffn.b2"), Tensor({d}, 0.0));
    }
    params_.add("final_ln.g", Tensor({d}, 1.0));
    params_.add("final_ln.b", Tensor({d}, 0.0));
    params_.add("head.w", init_normal({d, p}, sd, rng));
    params_.add("head.b", Tensor({p}, 0.0));
}

std::vector<double> DenoiserModel::gamma() const {
    std::vector<double> g(params_.get("ni.log_gamma").value().storage());
    for (double& v : g) v = std::exp(v);
    return g;
}

std::vector<double> DenoiserModel::beta() const { return params_.get("ni.beta").value().storage(); }

nn::Var DenoiserModel::past_input(const Tensor& z_patches, std::span<const std::size_t> channel) const {
    if (z_patches.rank() != 3 || z_patches.dim(0) != channel.size()) {
        throw ShapeError("past_input: expected [B, Np, P] with B channel ids, got " + shape_str(z_patches.shape()));
    }
    if (cfg_.norm == NormMode::shared) return nn::Var::constant(z_patches);
    const nn::Var& lg = params_.get("ni.log_gamma");
    const nn::Var& bt = params_.get("ni.beta");
    const std::size_t rows = z_patches.dim(0);
    const std::size_t per = z_patches.numel() / std::max<std::size_t>(rows, 1);
    std::vector<std::size_t> ch(channel.begin(), channel.end());
    for (std::size_t c : ch) {
        if (c >= cfg_.channels) throw ShapeError("past_input: channel index out of range");
    }
    Tensor out(z_patches.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = std::exp(lg.value()[ch[r]]);
        const double b = bt.value()[ch[r]];
        for (std::size_t i = 0; i < per; ++i) out[r * per + i] = g * z_patches[r * per + i] + b;
    }
    auto z = std::make_shared<Tensor>(z_patches);
    return nn::make_op(std::move(out), {lg, bt}, "channel_affine", [rows, per, ch, z](nn::Node& n) {
        nn::Node* plg = n.parents[0].get();
        nn::Node* pb = n.parents[1].get();
        double* dlg = plg->grad_buffer().data();
        double* db = pb->grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double g = std::exp(plg->value[ch[r]]);
            double sz = 0.0;
            double s1 = 0.0;
            for (std::size_t i = 0; i < per; ++i) {
                sz += n.grad[r * per + i] * (*z)[r * per + i];
                s1 += n.grad[r * per + i];
            }
            dlg[ch[r]] += sz * g;
            db[ch[r]] += s1;
        }
    });
}

std::vector<double> DenoiserModel::token_positions() const {
    const std::size_t np = cfg_.past_tokens();
    const std::size_t nf = cfg_.future_tokens();
    std::vector<double> pos(np + nf + 1);
    for (std::size_t i = 0; i < np + nf; ++i) pos[i] = static_cast<double>(i);
    pos[np + nf] = -1.0;  // time token: unrotated
    return pos;
}

nn::Var DenoiserModel::block(const nn::Var& h, std::size_t layer, std::span<const double> positions, bool training,
                             std::uint64_t dropout_seed) const {
    const auto& P = params_;
    const std::size_t b = h.shape()[0];
    const std::size_t t = h.shape()[1];
    const std::size_t d = cfg_.d_model;
    const std::size_t nh = cfg_.n_heads;
    const std::size_t dh = d / nh;
    const double drop = training ? cfg_.dropout : 0.0;

    auto heads = [&](const nn::Var& x) {
        // [B, T, d] -> [B * nh, T, dh]
        return nn::reshape(nn::transpose12(nn::reshape(x, {b, t, nh, dh})), {b * nh, t, dh});
    };

    nn::Var x = nn::layer_norm(h, P.get(layer_key(layer, "ln1.g")), P.get(layer_key(layer, "ln1.b")));
    nn::Var q = nn::add(nn::matmul(x, P.get(layer_key(layer, "attn.wq"))), P.get(layer_key(layer, "attn.bq")));
    nn::Var k = nn::add(nn::matmul(x, P.get(layer_key(layer, "attn.wk"))), P.get(layer_key(layer, "attn.bk")));
    nn::Var v = nn::add(nn::matmul(x, P.get(layer_key(layer, "attn.wv"))), P.get(layer_key(layer, "attn.bv")));
    q = nn::rope(heads(q), positions, cfg_.rope_base);
    k = nn::rope(heads(k), positions, cfg_.rope_base);
    v = heads(v);
    nn::Var scores = nn::scale(nn::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
    nn::Var attn = nn::softmax(scores);
    nn::Var ctx = nn::bmm(attn, v);  // [B*nh, T, dh]
    ctx = nn::reshape(nn::transpose12(nn::reshape(ctx, {b, nh, t, dh})), {b, t, d});
    nn::Var o = nn::add(nn::matmul(ctx, P.get(layer_key(layer, "attn.wo"))), P.get(layer_key(layer, "attn.bo")));
    o = nn::dropout(o, drop, substream(dropout_seed, {layer, 1}));
    nn::Var h1 = nn::add(h, o);

    nn::Var y = nn::layer_norm(h1, P.get(layer_key(layer, "ln2.g")), P.get(layer_key(layer, "ln2.b")));
    y = nn::gelu(nn::add(nn::matmul(y, P.get(layer_key(layer, "ffn.w1"))), P.get(layer_key(layer, "ffn.b1"))));
    y = nn::add(nn::matmul(y, P.get(layer_key(layer, "ffn.w2"))), P.get(layer_key(layer, "ffn.b2")));
    y = nn::dropout(y, drop, substream(dropout_seed, {layer, 2}));
    return nn::add(h1, y);
}

nn::Var DenoiserModel::forward(const nn::Var& past, const Tensor& future_patches, std::span<const double> t_frac,
                               bool training, std::uint64_t dropout_seed) const {
    const std::size_t np = cfg_.past_tokens();
    const std::size_t nf = cfg_.future_tokens();
    const std::size_t p = cfg_.patch_len;
    const std::size_t b = past.shape().empty() ? 0 : past.shape()[0];
    if (past.shape() != Shape{b, np, p}) {
        throw ShapeError("denoiser: past patches " + shape_str(past.shape()) + ", expected " +
                         shape_str({b, np, p}));
    }
    if (future_patches.shape() != Shape{b, nf, p} || t_frac.size() != b) {
        throw ShapeError("denoiser: future patches " + shape_str(future_patches.shape()) + ", expected " +
                         shape_str({b, nf, p}));
    }
    const auto& P = params_;
    const std::vector<double> positions = token_positions();

    nn::Var past_tok = nn::add(nn::matmul(past, P.get("embed.past.w")), P.get("embed.past.b"));
    nn::Var fut_tok = nn::add(nn::matmul(nn::Var::constant(future_patches), P.get("embed.future.w")),
                              P.get("embed.future.b"));
    Tensor tt({b, 1, 1});
    for (std::size_t i = 0; i < b; ++i) tt[i] = t_frac[i];
    nn::Var time_tok = nn::add(nn::matmul(nn::Var::constant(std::move(tt)), P.get("embed.time.w")),
                               P.get("embed.time.b"));
    nn::Var h = nn::concat1({past_tok, fut_tok, time_tok});

    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        try {
            h = block(h, l, positions, training, dropout_seed);
        } catch (const NumericError& e) {
            throw NumericError("denoiser layer " + std::to_string(l) + ": " + e.what());
        }
    }
    h = nn::layer_norm(h, P.get("final_ln.g"), P.get("final_ln.b"));
    nn::Var fut = nn::slice1(h, np, nf);
    nn::Var out = nn::add(nn::matmul(fut, P.get("head.w")), P.get("head.b"));  // [B, nf, P]
    return nn::unpatchify(out, cfg_.horizon, cfg_.stride);
}

std::vector<double> DenoiserModel::forward_channel(std::span<const double> x_norm, std::span<const double> y_k,
                                                   std::size_t k, std::size_t total_steps) const {
    if (x_norm.size() != cfg_.lookback || y_k.size() != cfg_.horizon) {
        throw ShapeError("forward_channel: expected past of " + std::to_string(cfg_.lookback) + " and future of " +
                         std::to_string(cfg_.horizon) + " values");
    }
    nn::NoGradGuard guard;
    Tensor past = patchify(x_norm, cfg_.patch_len, cfg_.stride);
    Tensor fut = patchify(y_k, cfg_.patch_len, cfg_.stride);
    past = past.reshaped({1, past.dim(0), past.dim(1)});
    fut = fut.reshaped({1, fut.dim(0), fut.dim(1)});
    const double tf = static_cast<double>(k) / static_cast<double>(total_steps);
    nn::Var out = forward(nn::Var::constant(std::move(past)), fut, std::span<const double>(&tf, 1));
    return out.value().storage();
}

std::string config_to_json(const DenoiserConfig& cfg) {
    nlohmann::json j{{"patch_len", cfg.patch_len}, {"stride", cfg.stride},     {"d_model", cfg.d_model},
                     {"n_heads", cfg.n_heads},     {"n_layers", cfg.n_layers}, {"ffn_mult", cfg.ffn_mult},
                     {"dropout", cfg.dropout},     {"lookback", cfg.lookback}, {"horizon", cfg.horizon},
                     {"channels", cfg.channels},   {"norm", to_string(cfg.norm)}, {"rope_base", cfg.rope_base}};
    return j.dump();
}

DenoiserConfig config_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DenoiserConfig c;
    c.patch_len = j.at("patch_len").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.lookback = j.at("lookback").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.norm = parse_norm_mode(j.at("norm").get<std::string>());
    c.rope_base = j.at("rope_base").get<double>();
    return c;
}

}  // namespace simdiff
