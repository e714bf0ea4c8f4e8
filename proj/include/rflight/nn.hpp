#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rflight/tape.hpp"

namespace rflight {

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Fully connected layer, weights (in x out), y = x*W + b.
struct DenseLayer {
    Tensor W;
    Tensor b;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_dim() const { return W.rows(); }
    std::size_t out_dim() const { return W.cols(); }

    Var forward(Tape& t, Var x) { return t.add_rowvec(t.matmul(x, t.param(W)), t.param(b)); }

    void collect(const std::string& prefix, NamedParams& out) {
        out.emplace_back(prefix + ".W", &W);
        out.emplace_back(prefix + ".b", &b);
    }
};

enum class Activation { Relu, Tanh };

// Dense stack; activation between layers, last layer linear.
struct Mlp {
    std::vector<DenseLayer> layers;
    Activation act = Activation::Relu;

    Mlp() = default;
    Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
        Activation activation, Rng& rng);

    Var forward(Tape& t, Var x);
    void collect(const std::string& prefix, NamedParams& out);
};

// Single LSTM cell. Packed gate layout [input, forget, cell, output];
// forget-gate bias initialized to 1.
struct LstmCell {
    Tensor Wx;  // (in x 4H)
    Tensor Wh;  // (H x 4H)
    Tensor b;   // (4H)
    std::size_t hidden = 0;

    LstmCell() = default;
    LstmCell(std::size_t in, std::size_t hidden_dim, Rng& rng);

    // One step: returns (h', c'). h and c are (B x H).
    std::pair<Var, Var> step(Tape& t, Var x, Var h, Var c);

    void collect(const std::string& prefix, NamedParams& out) {
        out.emplace_back(prefix + ".Wx", &Wx);
        out.emplace_back(prefix + ".Wh", &Wh);
        out.emplace_back(prefix + ".b", &b);
    }
};

// Stacked LSTM; layer k consumes layer k-1's hidden sequence.
struct LstmStack {
    std::vector<LstmCell> cells;

    LstmStack() = default;
    LstmStack(std::size_t in, std::size_t hidden, std::size_t layers, Rng& rng);

    std::size_t hidden_dim() const { return cells.empty() ? 0 : cells.back().hidden; }

    // Consumes a sequence of (B x F) inputs oldest-first; returns final
    // top-layer hidden state (B x H).
    Var forward_sequence(Tape& t, const std::vector<Var>& xs);

    void collect(const std::string& prefix, NamedParams& out);
};

// Bias-corrected Adam over a fixed set of parameter tensors.
class Adam {
public:
    Adam() = default;
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const NamedParams& params);
    void attach(Tensor* param);

    // Applies one update from gradients recorded on the tape.
    // max_grad_norm > 0 rescales the global gradient norm to at most that value.
    void step(const Tape& tape, double max_grad_norm = 0.0);

    // Explicit-gradient variant (grads aligned with attach order).
    void step_with_grads(const std::vector<Tensor>& grads);

    long step_count() const { return t_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::size_t num_params() const { return params_.size(); }

private:
    struct Slot {
        Tensor m;
        Tensor v;
    };
    std::vector<Tensor*> params_;
    std::vector<Slot> slots_;
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
};

// FNV-1a over the raw bytes of all parameters, used for freeze contracts.
std::uint64_t params_checksum(const NamedParams& params);

} // namespace rflight
