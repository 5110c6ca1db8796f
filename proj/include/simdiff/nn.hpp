#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "simdiff/errors.hpp"
#include "simdiff/tensor.hpp"

// Minimal reverse-mode autodiff over dense float64 tensors. The graph is
// rebuilt on every forward pass; parameters are long-lived leaf nodes.
namespace simdiff::nn {

struct Node {
    Tensor value;
    Tensor grad;  // empty until the first gradient arrives
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;
    const char* op = "leaf";

    Tensor& grad_buffer();
    void accumulate(const Tensor& g);
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad() { node_->grad = Tensor(); }
    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

// Graph recording is on by default; inference disables it per thread.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Builds a graph node. `backward` receives the finished node; it reads
// node.grad and accumulates into node.parents[i]. Non-finite outputs raise
// NumericError naming `op`.
Var make_op(Tensor value, std::vector<Var> parents, const char* op,
            std::function<void(Node&)> backward);

// Reverse pass from a scalar loss. Each reachable node is visited once, in
// reverse topological order.
void backward(const Var& loss);

// --- op family ---
Var matmul(const Var& a, const Var& b);                        // [..., n, k] x [k, m]
Var bmm(const Var& a, const Var& b, bool trans_b = false);     // [B, n, k] x [B, k, m]
Var add(const Var& a, const Var& b);  // b same shape as a or equal to a's trailing dims
Var sub(const Var& a, const Var& b);  // same shape
Var mul(const Var& a, const Var& b);  // b same shape as a or equal to a's trailing dims
Var scale(const Var& a, double s);
Var softmax(const Var& a);            // over the last axis
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gelu(const Var& x);
Var exp(const Var& x);
Var abs(const Var& x);                // subgradient 0 at 0
Var sum(const Var& x);                // -> shape [1]
Var mean(const Var& x);               // -> shape [1]
Var reshape(const Var& x, Shape shape);
Var transpose12(const Var& x);        // rank 4: [a, b, c, d] -> [a, c, b, d]
Var slice1(const Var& x, std::size_t start, std::size_t len);  // rank 3, axis 1
Var concat1(const std::vector<Var>& parts);                     // rank 3, axis 1
Var dropout(const Var& x, double p, std::uint64_t seed);

// Named, ordered parameter collection.
class ParamSet {
public:
    // Returns a handle sharing the stored node.
    Var add(const std::string& name, Tensor init);
    Var& get(const std::string& name);
    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    std::size_t count() const;  // total scalar parameters
    void zero_grad();

private:
    std::vector<std::pair<std::string, Var>> items_;
    std::map<std::string, std::size_t> index_;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

// One bias-corrected Adam update over every parameter that has a gradient.
// Throws NumericError (leaving parameters untouched) on a non-finite gradient.
void adam_step(ParamSet& params, AdamState& state);

// Self-describing checkpoint: magic, JSON header (metadata + tensor index),
// then raw little-endian float64 payload. Round-trips bit-exactly.
struct Checkpoint {
    std::string metadata_json;
    std::vector<std::pair<std::string, Tensor>> tensors;
};
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint snapshot(const ParamSet& params, std::string metadata_json);
// Copies tensors into matching parameters; throws ArtifactMismatch on a
// missing name or shape mismatch.
void restore(ParamSet& params, const Checkpoint& ckpt);

}  // namespace simdiff::nn
