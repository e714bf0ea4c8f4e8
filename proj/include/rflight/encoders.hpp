#pragma once

#include <vector>

#include "rflight/attack.hpp"
#include "rflight/nn.hpp"

namespace rflight {

// Mean/std latent embedding; z is the reparameterized sample (train mode
// only; eval mode uses z = mu).
struct LatentState {
    std::vector<double> mu;
    std::vector<double> sigma;
    std::vector<double> z;
};

struct EncoderConfig {
    std::size_t latent_dim = 64;
    std::vector<std::size_t> teacher_hidden{256, 256, 256, 256};
    std::vector<std::size_t> decoder_hidden{256};
    std::size_t student_hidden = 128;
    std::size_t student_layers = 4;
    std::size_t history_len = 20;
    bool policy_input_mu_only = false;
    NormScales norms;

    std::size_t policy_input_dim() const {
        return policy_input_mu_only ? latent_dim : 2 * latent_dim;
    }
};

inline constexpr double kSigmaFloor = 1e-6;

struct EncoderOutputs {
    Var mu;      // (B x d)
    Var sigma;   // (B x d), softplus + floor, strictly positive
    Var z;       // sample in train mode, mu in eval mode
    Var logits;  // (B x 6) attack classifier
    Var recon;   // (B x input_dim) reconstruction
};

// Multi-head VAE over the full state <obs, privileged>. Heads: latent
// (mu, sigma), attack classifier, and a decoder that reconstructs the input
// from z. The decoder only matters for training; deployment uses mu/sigma.
class TeacherEncoder {
public:
    TeacherEncoder() = default;
    TeacherEncoder(std::size_t input_dim, const EncoderConfig& cfg, Rng& rng);

    EncoderOutputs forward(Tape& t, Var s, Rng* rng, bool train);

    // Single-sample eval forward (deterministic, z = mu).
    LatentState encode_eval(const std::vector<double>& s) const;

    std::size_t input_dim() const { return input_dim_; }
    std::size_t latent_dim() const { return latent_dim_; }
    NamedParams named_params();

private:
    std::size_t input_dim_ = 0;
    std::size_t latent_dim_ = 0;
    Mlp trunk_;
    DenseLayer mu_head_, sigma_head_, cls_head_;
    Mlp decoder_;
};

struct TeacherLossWeights {
    double recon = 1.0;
    double kl = 1.0;
    double cls = 1.0;
};

// recon + KL + attack classification, unit weights by default.
Var teacher_loss(Tape& t, const EncoderOutputs& out, Var s_true,
                 const std::vector<int>& labels, const TeacherLossWeights& w);

// Temporal VAE: LSTM over the last N observations, heads off the final
// hidden state. The reconstruction target is the full window.
class StudentEncoder {
public:
    StudentEncoder() = default;
    StudentEncoder(const EncoderConfig& cfg, Rng& rng);

    // window_steps: N tensors of shape (B x obs_dim), oldest first.
    EncoderOutputs forward(Tape& t, const std::vector<Var>& window_steps, Rng* rng, bool train);

    // Single-sample eval forward over a flattened window (N*obs_dim).
    LatentState encode_eval(const std::vector<double>& window_flat) const;

    std::size_t history_len() const { return history_len_; }
    std::size_t latent_dim() const { return latent_dim_; }
    std::size_t window_dim() const { return history_len_ * kObsDim; }
    NamedParams named_params();

private:
    std::size_t history_len_ = 0;
    std::size_t latent_dim_ = 0;
    LstmStack lstm_;
    DenseLayer mu_head_, sigma_head_, cls_head_, recon_head_;
};

// Ring buffer of the last N observations, oldest first; until N pushes have
// happened the left side is padded with the first observation.
class HistoryWindow {
public:
    explicit HistoryWindow(std::size_t n) : cap_(n) {}

    void push(const std::array<double, kObsDim>& obs);
    void reset() { buf_.clear(); }
    bool initialized() const { return !buf_.empty(); }
    std::size_t capacity() const { return cap_; }

    // Flattened window (N * obs_dim), oldest first. Throws if never pushed.
    std::vector<double> flat() const;

private:
    std::size_t cap_;
    std::vector<std::array<double, kObsDim>> buf_;  // at most cap_, oldest first
};

// Policy input from a latent: [mu, sigma] by default, mu alone when the
// config says so.
std::vector<double> latent_for_policy(const LatentState& l, bool mu_only);
Var latent_for_policy(Tape& t, const EncoderOutputs& out, bool mu_only);

} // namespace rflight
