#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "rflight/rng.hpp"
#include "rflight/tensor.hpp"

namespace rflight {

// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Tensor-valued nodes.
//
// Nodes are recorded in construction order; backward() walks them in exact
// reverse order, accumulating gradients additively. Calling param() twice
// with the same underlying tensor returns the same node, so weight sharing
// (e.g. an LSTM cell applied at every unroll step) accumulates naturally.
//
// Vector convention: rank-1 = feature vector, rank-2 = batch x feature.
// Weights are stored (in x out), so dense is x * W + b.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves ------------------------------------------------------
    Var input(const Tensor& v);  // constant, no gradient tracked
    Var param(Tensor& owner);    // tracked leaf, deduplicated by address

    // ---- values & gradients ------------------------------------------
    const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    double scalar(Var v) const;
    // Gradient of the node (valid after backward; empty-shape nodes get zeros).
    const Tensor& grad(Var v) const;
    // Gradient for a parameter tensor registered via param(); zeros if unused.
    Tensor grad_for(const Tensor& owner) const;

    // Clears all gradients, seeds d(loss)/d(loss) = 1, runs the reverse pass.
    // loss must be a single-element node.
    void backward(Var loss);

    std::size_t num_nodes() const { return nodes_.size(); }

    // ---- primitives ---------------------------------------------------
    Var matmul(Var a, Var b);               // (m x k) * (k x n)
    Var add(Var a, Var b);                  // same shape
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                  // elementwise
    Var add_rowvec(Var m, Var v);           // (B x F) + (F) per row
    Var broadcast_rows(Var v, std::size_t n_rows);  // (F) -> (B x F)
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }

    Var tanh_(Var a);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var softplus(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var square(Var a);
    Var clamp(Var a, double lo, double hi);
    Var min_ew(Var a, Var b);

    Var sum_all(Var a);                     // -> scalar
    Var mean_all(Var a);                    // -> scalar
    Var sum_cols(Var a);                    // (B x F) -> (B x 1)
    Var concat_cols(Var a, Var b);          // (B x F1),(B x F2) -> (B x F1+F2)
    Var slice_cols(Var a, std::size_t lo, std::size_t hi);  // [lo, hi)
    Var softmax_rows(Var a);

    // Reparameterized draw z = mu + sigma .* eta, eta ~ N(0,1) sampled once
    // at record time. d z/d mu = 1, d z/d sigma = eta.
    Var gaussian_sample(Var mu, Var sigma, Rng& rng);

    // ---- losses -------------------------------------------------------
    Var mse(Var pred, Var target);          // mean over all elements
    // KL(N(mu, sigma^2) || N(0, 1)): sum over features, mean over batch rows.
    Var kl_gaussian(Var mu, Var sigma);
    // Stable log-softmax cross entropy, mean over batch rows.
    Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

private:
    struct Node {
        Tensor value;
        Tensor grad;           // lazily allocated during backward
        bool needs_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves/constants
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, int> param_ids_;

    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
    Tensor& grad_buf(int id);  // allocate-on-demand gradient of node id
    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
    const Tensor& v_(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

    friend struct TapeTestPeer;
};

// Plain matmul helpers shared with non-tape code paths.
void matmul_nn_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a*b
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a*b^T
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a^T*b

} // namespace rflight
