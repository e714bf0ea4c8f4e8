#include "rflight/nn.hpp"

#include <cmath>
#include <cstring>

namespace rflight {

namespace {

void xavier_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    w.fill_uniform(rng, -limit, limit);
}

} // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Rng& rng) : W(in, out), b(out) {
    xavier_init(W, in, out, rng);
}

Mlp::Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
         Activation activation, Rng& rng)
    : act(activation) {
    std::size_t prev = in;
    for (std::size_t h : hidden) {
        layers.emplace_back(prev, h, rng);
        prev = h;
    }
    layers.emplace_back(prev, out, rng);
}

Var Mlp::forward(Tape& t, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i].forward(t, x);
        if (i + 1 < layers.size()) x = (act == Activation::Relu) ? t.relu(x) : t.tanh_(x);
    }
    return x;
}

void Mlp::collect(const std::string& prefix, NamedParams& out) {
    for (std::size_t i = 0; i < layers.size(); ++i)
        layers[i].collect(prefix + ".l" + std::to_string(i), out);
}

LstmCell::LstmCell(std::size_t in, std::size_t hidden_dim, Rng& rng)
    : Wx(in, 4 * hidden_dim), Wh(hidden_dim, 4 * hidden_dim), b(4 * hidden_dim),
      hidden(hidden_dim) {
    xavier_init(Wx, in, hidden_dim, rng);
    xavier_init(Wh, hidden_dim, hidden_dim, rng);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;  // forget gate
}

std::pair<Var, Var> LstmCell::step(Tape& t, Var x, Var h, Var c) {
    Var pre = t.add_rowvec(t.add(t.matmul(x, t.param(Wx)), t.matmul(h, t.param(Wh))), t.param(b));
    const std::size_t H = hidden;
    Var gi = t.sigmoid(t.slice_cols(pre, 0, H));
    Var gf = t.sigmoid(t.slice_cols(pre, H, 2 * H));
    Var gg = t.tanh_(t.slice_cols(pre, 2 * H, 3 * H));
    Var go = t.sigmoid(t.slice_cols(pre, 3 * H, 4 * H));
    Var c_next = t.add(t.mul(gf, c), t.mul(gi, gg));
    Var h_next = t.mul(go, t.tanh_(c_next));
    return {h_next, c_next};
}

LstmStack::LstmStack(std::size_t in, std::size_t hidden, std::size_t layers, Rng& rng) {
    std::size_t prev = in;
    for (std::size_t k = 0; k < layers; ++k) {
        cells.emplace_back(prev, hidden, rng);
        prev = hidden;
    }
}

Var LstmStack::forward_sequence(Tape& t, const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("LstmStack: empty input sequence");
    const std::size_t batch = t.val(xs[0]).rows();
    std::vector<Var> seq = xs;
    Var top_h{};
    for (LstmCell& cell : cells) {
        Var h = t.input(Tensor(batch, cell.hidden));
        Var c = t.input(Tensor(batch, cell.hidden));
        std::vector<Var> out_seq;
        out_seq.reserve(seq.size());
        for (Var x : seq) {
            auto [h2, c2] = cell.step(t, x, h, c);
            h = h2;
            c = c2;
            out_seq.push_back(h);
        }
        seq = std::move(out_seq);
        top_h = h;
    }
    return top_h;
}

void LstmStack::collect(const std::string& prefix, NamedParams& out) {
    for (std::size_t k = 0; k < cells.size(); ++k)
        cells[k].collect(prefix + ".lstm" + std::to_string(k), out);
}

void Adam::attach(const NamedParams& params) {
    for (const auto& [name, p] : params) {
        (void)name;
        attach(p);
    }
}

void Adam::attach(Tensor* param) {
    params_.push_back(param);
    Slot s;
    s.m = Tensor::zeros_like(*param);
    s.v = Tensor::zeros_like(*param);
    slots_.push_back(std::move(s));
}

void Adam::step(const Tape& tape, double max_grad_norm) {
    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (Tensor* p : params_) grads.push_back(tape.grad_for(*p));
    if (max_grad_norm > 0.0) {
        double sq = 0.0;
        for (const Tensor& g : grads)
            for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
        const double norm = std::sqrt(sq);
        if (norm > max_grad_norm) {
            const double s = max_grad_norm / norm;
            for (Tensor& g : grads)
                for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
        }
    }
    step_with_grads(grads);
}

void Adam::step_with_grads(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size())
        throw ShapeError("Adam: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = *params_[k];
        const Tensor& g = grads[k];
        require_same_shape(p, g, "Adam::step");
        Slot& s = slots_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::uint64_t params_checksum(const NamedParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, t] : params) {
        mix(name.data(), name.size());
        mix(t->data(), t->size() * sizeof(double));
    }
    return h;
}

} // namespace rflight
