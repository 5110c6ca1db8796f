#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simdiff/nn.hpp"
#include "simdiff/normalize.hpp"
#include "simdiff/tensor.hpp"

namespace simdiff {

struct DenoiserConfig {
    std::size_t patch_len = 8;
    std::size_t stride = 4;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t n_layers = 3;
    std::size_t ffn_mult = 4;
    double dropout = 0.0;
    std::size_t lookback = 96;  // L
    std::size_t horizon = 24;   // H
    std::size_t channels = 1;   // M, sizes the per-channel affine only
    NormMode norm = NormMode::independent;
    double rope_base = 10000.0;

    // Throws std::invalid_argument naming the violated constraint.
    void validate() const;
    std::size_t past_tokens() const;
    std::size_t future_tokens() const;
    std::size_t d_head() const { return d_model / n_heads; }
};

bool operator==(const DenoiserConfig& a, const DenoiserConfig& b);

// ceil((T - P) / St) + 1
std::size_t token_count(std::size_t length, std::size_t patch_len, std::size_t stride);
// Start index of each token: i * St, with the last token right-aligned to T - P.
std::vector<std::size_t> patch_offsets(std::size_t length, std::size_t patch_len, std::size_t stride);
// [n_tok, P]
Tensor patchify(std::span<const double> series, std::size_t patch_len, std::size_t stride);
// Row-wise patchify: [B, T] -> [B, n_tok, P].
Tensor patchify_rows(const Tensor& series, std::size_t patch_len, std::size_t stride);
// Overlap-averaged inverse of patchify: [n_tok, P] -> [T].
std::vector<double> unpatchify(const Tensor& tokens, std::size_t length, std::size_t stride);

// Rotates dimension pairs (2i, 2i+1) of each row by position * base^(-2i/d).
// Rows with a negative position are left unrotated. x is [n, d], d even.
Tensor rope_rotate(const Tensor& x, std::span<const double> positions, double base = 10000.0);

namespace nn {
// Graph versions: x is [B, T, d]; positions has T entries.
Var rope(const Var& x, std::span<const double> positions, double base);
// [B, n_tok, P] -> [B, T] overlap average.
Var unpatchify(const Var& tokens, std::size_t length, std::size_t stride);
}  // namespace nn

// Transformer that maps (past tokens, noisy future tokens, diffusion time)
// to the clean future estimate, one channel per sequence. Tokens are laid
// out [past | future | time]; the time token is not rotated.
class DenoiserModel {
public:
    DenoiserModel(DenoiserConfig cfg, std::uint64_t seed);

    const DenoiserConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    // Per-channel affine (gamma = exp(log_gamma), beta); identity at init.
    std::vector<double> gamma() const;
    std::vector<double> beta() const;

    // Normalized past patches as a graph value. `z_patches` are patches of
    // the z-scored past, [B, Np, P]; `channel[b]` picks the affine for row b.
    // Shared mode returns z_patches unchanged.
    nn::Var past_input(const Tensor& z_patches, std::span<const std::size_t> channel) const;

    // past [B, Np, P] (graph), noisy future patches [B, Nf, P], t_frac[b] = k/K.
    // Returns the clean-future estimate [B, H].
    nn::Var forward(const nn::Var& past, const Tensor& future_patches, std::span<const double> t_frac,
                    bool training = false, std::uint64_t dropout_seed = 0) const;

    // Single-channel convenience: already-normalized past (L values) and
    // noisy future (H values) at step k of K.
    std::vector<double> forward_channel(std::span<const double> x_norm, std::span<const double> y_k,
                                        std::size_t k, std::size_t total_steps) const;

    std::vector<double> token_positions() const;

private:
    nn::Var block(const nn::Var& h, std::size_t layer, std::span<const double> positions, bool training,
                  std::uint64_t dropout_seed) const;

    DenoiserConfig cfg_;
    nn::ParamSet params_;
};

std::string config_to_json(const DenoiserConfig& cfg);
DenoiserConfig config_from_json(const std::string& json);

}  // namespace simdiff
