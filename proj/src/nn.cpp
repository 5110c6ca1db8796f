#include "simdiff/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <unordered_set>

#include <json.hpp>

#include "simdiff/kernels.hpp"
#include "simdiff/rng.hpp"

namespace simdiff::nn {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// True when `b` equals the trailing dims of `a` (including a == b).
bool trailing_match(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

void Node::accumulate(const Tensor& g) {
    Tensor& buf = grad_buffer();
    kernels::active().add(buf.numel(), buf.data(), g.data(), buf.data());
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->op = "param";
    return Var(std::move(n));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Tensor value, std::vector<Var> parents, const char* op,
            std::function<void(Node&)> backward_fn) {
    if (!value.all_finite()) {
        throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                           shape_str(value.shape()));
    }
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    bool needs = false;
    if (g_grad_enabled) {
        for (const Var& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const Var& p : parents) n->parents.push_back(p.ptr());
        n->backward = std::move(backward_fn);
    }
    return Var(std::move(n));
}

void backward(const Var& loss) {
    if (loss.value().numel() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
}

Var matmul(const Var& a, const Var& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() != 2 || sa.back() != sb[0]) shape_fail("matmul", sa, sb);
    const std::size_t k = sb[0];
    const std::size_t m = sb[1];
    const std::size_t rows = a.value().numel() / k;
    Shape so = sa;
    so.back() = m;
    Tensor out(so);
    kernels::gemm(false, false, rows, k, m, a.value().data(), b.value().data(), out.data(), false);
    return make_op(std::move(out), {a, b}, "matmul", [rows, k, m](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            kernels::gemm(false, true, rows, m, k, n.grad.data(), pb->value.data(),
                          pa->grad_buffer().data(), true);
        }
        if (pb->requires_grad) {
            kernels::gemm(true, false, k, rows, m, pa->value.data(), n.grad.data(),
                          pb->grad_buffer().data(), true);
        }
    });
}

Var bmm(const Var& a, const Var& b, bool trans_b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) shape_fail("bmm", sa, sb);
    const std::size_t batch = sa[0];
    const std::size_t n = sa[1];
    const std::size_t k = sa[2];
    const std::size_t m = trans_b ? sb[1] : sb[2];
    if ((trans_b ? sb[2] : sb[1]) != k) shape_fail("bmm", sa, sb);
    Tensor out({batch, n, m});
    for (std::size_t i = 0; i < batch; ++i) {
        kernels::gemm(false, trans_b, n, k, m, a.value().data() + i * n * k,
                      b.value().data() + i * k * m, out.data() + i * n * m, false);
    }
    return make_op(std::move(out), {a, b}, "bmm", [batch, n, k, m, trans_b](Node& nd) {
        Node* pa = nd.parents[0].get();
        Node* pb = nd.parents[1].get();
        for (std::size_t i = 0; i < batch; ++i) {
            const double* dy = nd.grad.data() + i * n * m;
            const double* av = pa->value.data() + i * n * k;
            const double* bv = pb->value.data() + i * k * m;
            if (pa->requires_grad) {
                double* da = pa->grad_buffer().data() + i * n * k;
                // dA = dY * B^T  (or dY * B when B was used transposed)
                kernels::gemm(false, !trans_b, n, m, k, dy, bv, da, true);
            }
            if (pb->requires_grad) {
                double* db = pb->grad_buffer().data() + i * k * m;
                if (trans_b) {
                    kernels::gemm(true, false, m, n, k, dy, av, db, true);
                } else {
                    kernels::gemm(true, false, k, n, m, av, dy, db, true);
                }
            }
        }
    });
}

Var add(const Var& a, const Var& b) {
    if (!trailing_match(a.shape(), b.shape())) shape_fail("add", a.shape(), b.shape());
    const std::size_t inner = b.value().numel();
    const std::size_t reps = a.value().numel() / inner;
    Tensor out(a.shape());
    const auto& kt = kernels::active();
    for (std::size_t r = 0; r < reps; ++r) {
        kt.add(inner, a.value().data() + r * inner, b.value().data(), out.data() + r * inner);
    }
    return make_op(std::move(out), {a, b}, "add", [reps, inner](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) pa->accumulate(n.grad);
        if (pb->requires_grad) {
            double* db = pb->grad_buffer().data();
            const auto& kt = kernels::active();
            for (std::size_t r = 0; r < reps; ++r) kt.add(inner, db, n.grad.data() + r * inner, db);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_op(std::move(out), {a, b}, "sub", [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) pa->accumulate(n.grad);
        if (pb->requires_grad) kernels::active().axpy(n.grad.numel(), -1.0, n.grad.data(), pb->grad_buffer().data());
    });
}

Var mul(const Var& a, const Var& b) {
    if (!trailing_match(a.shape(), b.shape())) shape_fail("mul", a.shape(), b.shape());
    const std::size_t inner = b.value().numel();
    const std::size_t reps = a.value().numel() / inner;
    Tensor out(a.shape());
    const auto& kt = kernels::active();
    for (std::size_t r = 0; r < reps; ++r) {
        kt.mul(inner, a.value().data() + r * inner, b.value().data(), out.data() + r * inner);
    }
    return make_op(std::move(out), {a, b}, "mul", [reps, inner](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        const auto& kt = kernels::active();
        if (pa->requires_grad) {
            double* da = pa->grad_buffer().data();
            std::vector<double> tmp(inner);
            for (std::size_t r = 0; r < reps; ++r) {
                kt.mul(inner, n.grad.data() + r * inner, pb->value.data(), tmp.data());
                kt.add(inner, da + r * inner, tmp.data(), da + r * inner);
            }
        }
        if (pb->requires_grad) {
            double* db = pb->grad_buffer().data();
            std::vector<double> tmp(inner);
            for (std::size_t r = 0; r < reps; ++r) {
                kt.mul(inner, n.grad.data() + r * inner, pa->value.data() + r * inner, tmp.data());
                kt.add(inner, db, tmp.data(), db);
            }
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
    return make_op(std::move(out), {a}, "scale", [s](Node& n) {
        kernels::active().axpy(n.grad.numel(), s, n.grad.data(), n.parents[0]->grad_buffer().data());
    });
}

Var softmax(const Var& a) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.value().numel() / d;
    Tensor out(a.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.value().data() + r * d;
        double* y = out.data() + r * d;
        const double mx = *std::max_element(x, x + d);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < d; ++j) y[j] *= inv;
    }
    return make_op(std::move(out), {a}, "softmax", [rows, d](Node& n) {
        double* dx = n.parents[0]->grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = n.value.data() + r * d;
            const double* dy = n.grad.data() + r * d;
            double dotv = 0.0;
            for (std::size_t j = 0; j < d; ++j) dotv += dy[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += y[j] * (dy[j] - dotv);
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const std::size_t d = x.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) shape_fail("layer_norm", x.shape(), gamma.shape());
    const std::size_t rows = x.value().numel() / d;
    Tensor out(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.value().numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.value().data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mu) * inv;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = gamma.value()[j] * h + beta.value()[j];
        }
    }
    return make_op(std::move(out), {x, gamma, beta}, "layer_norm", [rows, d, xhat, inv_std](Node& n) {
        Node* px = n.parents[0].get();
        Node* pg = n.parents[1].get();
        Node* pb = n.parents[2].get();
        const double* g = pg->value.data();
        if (pg->requires_grad || pb->requires_grad) {
            double* dg = pg->grad_buffer().data();
            double* db = pb->grad_buffer().data();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < d; ++j) {
                    dg[j] += n.grad[r * d + j] * (*xhat)[r * d + j];
                    db[j] += n.grad[r * d + j];
                }
            }
        }
        if (px->requires_grad) {
            double* dx = px->grad_buffer().data();
            const double dd = static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                double s1 = 0.0;
                double s2 = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = n.grad[r * d + j] * g[j];
                    s1 += dh;
                    s2 += dh * (*xhat)[r * d + j];
                }
                const double inv = (*inv_std)[r];
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = n.grad[r * d + j] * g[j];
                    dx[r * d + j] += inv / dd * (dd * dh - s1 - (*xhat)[r * d + j] * s2);
                }
            }
        }
    });
}

Var gelu(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double v = x.value()[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
    }
    return make_op(std::move(out), {x}, "gelu", [](Node& n) {
        Node* px = n.parents[0].get();
        double* dx = px->grad_buffer().data();
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const double v = px->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dx[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
}

Var exp(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(x.value()[i]);
    return make_op(std::move(out), {x}, "exp", [](Node& n) {
        double* dx = n.parents[0]->grad_buffer().data();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) dx[i] += n.grad[i] * n.value[i];
    });
}

Var abs(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(x.value()[i]);
    return make_op(std::move(out), {x}, "abs", [](Node& n) {
        Node* px = n.parents[0].get();
        double* dx = px->grad_buffer().data();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const double v = px->value[i];
            const double sgn = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            dx[i] += n.grad[i] * sgn;
        }
    });
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return make_op(Tensor::scalar(s), {x}, "sum", [](Node& n) {
        Tensor& dx = n.parents[0]->grad_buffer();
        const double g = n.grad[0];
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += g;
    });
}

Var mean(const Var& x) {
    const double count = static_cast<double>(x.value().numel());
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return make_op(Tensor::scalar(s / count), {x}, "mean", [count](Node& n) {
        Tensor& dx = n.parents[0]->grad_buffer();
        const double g = n.grad[0] / count;
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += g;
    });
}

Var reshape(const Var& x, Shape shape) {
    if (shape_numel(shape) != x.value().numel()) shape_fail("reshape", x.shape(), shape);
    return make_op(x.value().reshaped(std::move(shape)), {x}, "reshape", [](Node& n) {
        Tensor& dx = n.parents[0]->grad_buffer();
        kernels::active().add(dx.numel(), dx.data(), n.grad.data(), dx.data());
    });
}

namespace {

void swap12(const double* in, double* out, std::size_t a, std::size_t b, std::size_t c, std::size_t d,
            bool accumulate) {
    // in [a, b, c, d] -> out [a, c, b, d]
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < c; ++k) {
                const double* src = in + ((i * b + j) * c + k) * d;
                double* dst = out + ((i * c + k) * b + j) * d;
                if (accumulate) {
                    for (std::size_t l = 0; l < d; ++l) dst[l] += src[l];
                } else {
                    std::memcpy(dst, src, d * sizeof(double));
                }
            }
}

}  // namespace

Var transpose12(const Var& x) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw ShapeError("transpose12: expected rank 4, got " + shape_str(s));
    Tensor out({s[0], s[2], s[1], s[3]});
    swap12(x.value().data(), out.data(), s[0], s[1], s[2], s[3], false);
    return make_op(std::move(out), {x}, "transpose12", [s](Node& n) {
        swap12(n.grad.data(), n.parents[0]->grad_buffer().data(), s[0], s[2], s[1], s[3], true);
    });
}

Var slice1(const Var& x, std::size_t start, std::size_t len) {
    const Shape& s = x.shape();
    if (s.size() != 3 || start + len > s[1] || len == 0) {
        throw ShapeError("slice1: cannot take [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") of axis 1 from " + shape_str(s));
    }
    const std::size_t b = s[0];
    const std::size_t t = s[1];
    const std::size_t d = s[2];
    Tensor out({b, len, d});
    for (std::size_t i = 0; i < b; ++i) {
        std::memcpy(out.data() + i * len * d, x.value().data() + (i * t + start) * d, len * d * sizeof(double));
    }
    return make_op(std::move(out), {x}, "slice1", [b, t, d, start, len](Node& n) {
        double* dx = n.parents[0]->grad_buffer().data();
        const auto& kt = kernels::active();
        for (std::size_t i = 0; i < b; ++i) {
            double* dst = dx + (i * t + start) * d;
            kt.add(len * d, dst, n.grad.data() + i * len * d, dst);
        }
    });
}

Var concat1(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat1: no inputs");
    const Shape& s0 = parts[0].shape();
    if (s0.size() != 3) throw ShapeError("concat1: expected rank 3, got " + shape_str(s0));
    std::size_t total = 0;
    std::vector<std::size_t> lens;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != 3 || s[0] != s0[0] || s[2] != s0[2]) shape_fail("concat1", s0, s);
        lens.push_back(s[1]);
        total += s[1];
    }
    const std::size_t b = s0[0];
    const std::size_t d = s0[2];
    Tensor out({b, total, d});
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        for (std::size_t i = 0; i < b; ++i) {
            std::memcpy(out.data() + (i * total + off) * d, parts[p].value().data() + i * lens[p] * d,
                        lens[p] * d * sizeof(double));
        }
        off += lens[p];
    }
    return make_op(std::move(out), parts, "concat1", [b, d, total, lens](Node& n) {
        std::size_t off = 0;
        const auto& kt = kernels::active();
        for (std::size_t p = 0; p < lens.size(); ++p) {
            Node* pp = n.parents[p].get();
            if (pp->requires_grad) {
                double* dx = pp->grad_buffer().data();
                for (std::size_t i = 0; i < b; ++i) {
                    double* dst = dx + i * lens[p] * d;
                    kt.add(lens[p] * d, dst, n.grad.data() + (i * total + off) * d, dst);
                }
            }
            off += lens[p];
        }
    });
}

Var dropout(const Var& x, double p, std::uint64_t seed) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    CounterRng rng(seed);
    auto mask = std::make_shared<std::vector<double>>(x.value().numel());
    const double keep = 1.0 / (1.0 - p);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : keep;
        out[i] = x.value()[i] * (*mask)[i];
    }
    return make_op(std::move(out), {x}, "dropout", [mask](Node& n) {
        double* dx = n.parents[0]->grad_buffer().data();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) dx[i] += n.grad[i] * (*mask)[i];
    });
}

// --- parameters ---

Var ParamSet::add(const std::string& name, Tensor init) {
    if (index_.count(name) != 0) throw std::invalid_argument("ParamSet: duplicate parameter " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, Var::parameter(std::move(init)));
    return items_.back().second;
}

Var& ParamSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamSet: no parameter " + name);
    return items_[it->second].second;
}

const Var& ParamSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamSet: no parameter " + name);
    return items_[it->second].second;
}

std::size_t ParamSet::count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : items_) n += v.value().numel();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& [name, v] : items_) v.zero_grad();
}

void adam_step(ParamSet& params, AdamState& state) {
    if (!(state.lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
    auto& items = params.items();
    for (const auto& [name, v] : items) {
        if (!v.grad().empty() && !v.grad().all_finite()) {
            throw NumericError("adam_step: non-finite gradient for parameter '" + name + "' at step " +
                               std::to_string(state.step + 1));
        }
    }
    if (state.m.size() != items.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& [name, v] : items) {
            state.m.emplace_back(v.shape(), 0.0);
            state.v.emplace_back(v.shape(), 0.0);
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    const auto& kt = kernels::active();
    for (std::size_t i = 0; i < items.size(); ++i) {
        Var v = items[i].second;
        if (v.grad().empty()) continue;
        Tensor& p = v.mutable_value();
        kt.adam(p.numel(), p.data(), v.grad().data(), state.m[i].data(), state.v[i].data(), state.lr,
                state.beta1, state.beta2, state.eps, bc1, bc2);
    }
}

// --- checkpoints ---

namespace {

constexpr char kMagic[] = "SIMDIFF-CKPT-1\n";

void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw ArtifactMismatch("checkpoint: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["metadata"] = ckpt.metadata_json;
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.numel();
    }
    const std::string h = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, sizeof(kMagic) - 1);
    write_u64_le(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        for (double v : t.values()) write_u64_le(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArtifactMismatch("checkpoint: cannot open " + path);
    char magic[sizeof(kMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw ArtifactMismatch("checkpoint: " + path + " is not a simdiff checkpoint");
    }
    const std::uint64_t hlen = read_u64_le(is);
    std::string h(hlen, '\0');
    is.read(h.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw ArtifactMismatch("checkpoint: truncated header in " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactMismatch(std::string("checkpoint: corrupt header: ") + e.what());
    }
    Checkpoint ckpt;
    ckpt.metadata_json = header.at("metadata").get<std::string>();
    for (const auto& entry : header.at("tensors")) {
        Shape shape = entry.at("shape").get<Shape>();
        std::vector<double> vals(shape_numel(shape));
        for (double& v : vals) v = std::bit_cast<double>(read_u64_le(is));
        ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(vals)));
    }
    return ckpt;
}

Checkpoint snapshot(const ParamSet& params, std::string metadata_json) {
    Checkpoint ckpt;
    ckpt.metadata_json = std::move(metadata_json);
    for (const auto& [name, v] : params.items()) ckpt.tensors.emplace_back(name, v.value());
    return ckpt;
}

void restore(ParamSet& params, const Checkpoint& ckpt) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
    for (const auto& [name, param] : params.items()) {
        Var v = param;
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ArtifactMismatch("checkpoint: missing parameter '" + name + "'");
        if (it->second->shape() != v.shape()) {
            throw ArtifactMismatch("checkpoint: parameter '" + name + "' has shape " +
                                   shape_str(it->second->shape()) + ", model expects " + shape_str(v.shape()));
        }
        v.mutable_value() = *it->second;
    }
}

}  // namespace simdiff::nn
