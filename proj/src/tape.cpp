#include "rflight/tape.hpp"

#include <algorithm>
#include <cmath>

namespace rflight {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    // log(1 + e^x) without overflow for large |x|
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

} // namespace

void matmul_nn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = ap[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = bp + kk * n;
            double* orow = op + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    // out(m x n) += a(m x k) * b(n x k)^T
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ap + i * k;
        double* orow = op + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bp + j * k;
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            orow[j] += s;
        }
    }
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    // out(k x n) += a(m x k)^T * b(m x n)
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ap + i * k;
        const double* brow = bp + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            if (aik == 0.0) continue;
            double* orow = op + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
}

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
}

Var Tape::input(const Tensor& v) { return push(v, false, nullptr); }

Var Tape::param(Tensor& owner) {
    auto it = param_ids_.find(&owner);
    if (it != param_ids_.end()) return Var{it->second};
    Var v = push(owner, true, nullptr);
    param_ids_.emplace(&owner, v.id);
    return v;
}

double Tape::scalar(Var v) const {
    const Tensor& t = v_(v);
    if (t.size() != 1) throw ShapeError("scalar: node is not a single element, shape " + t.shape_str());
    return t[0];
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.grad;
}

Tensor Tape::grad_for(const Tensor& owner) const {
    auto it = param_ids_.find(&owner);
    if (it == param_ids_.end()) return Tensor::zeros_like(owner);
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    if (n.grad.size() != n.value.size()) return Tensor::zeros_like(owner);
    return n.grad;
}

void Tape::backward(Var loss) {
    const Tensor& lv = v_(loss);
    if (lv.size() != 1)
        throw ShapeError("backward: loss must be a single element, got " + lv.shape_str());
    for (Node& n : nodes_) n.grad = Tensor();  // reset so repeated backward is identical
    grad_buf(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.back) continue;
        if (n.grad.size() != n.value.size()) continue;  // never reached by the loss
        n.back(*this);
    }
}

// ---- binary / unary primitives --------------------------------------------

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = v_(a);
    const Tensor& bv = v_(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
        throw ShapeError("matmul: incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
    Tensor out(av.rows(), bv.cols());
    matmul_nn_acc(av, bv, out);
    const bool ng = needs(a) || needs(b);
    const int aid = a.id, bid = b.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, bid, rid](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& av2 = t.nodes_[static_cast<std::size_t>(aid)].value;
        const Tensor& bv2 = t.nodes_[static_cast<std::size_t>(bid)].value;
        if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad)
            matmul_nt_acc(g, bv2, t.grad_buf(aid));  // dA += dY * B^T
        if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad)
            matmul_tn_acc(av2, g, t.grad_buf(bid));  // dB += A^T * dY
    };
    return r;
}

Var Tape::add(Var a, Var b) {
    require_same_shape(v_(a), v_(b), "add");
    Tensor out = v_(a);
    const Tensor& bv = v_(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const bool ng = needs(a) || needs(b);
    const int aid = a.id, bid = b.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, bid, rid](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) {
            Tensor& ga = t.grad_buf(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
            Tensor& gb = t.grad_buf(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    };
    return r;
}

Var Tape::sub(Var a, Var b) {
    require_same_shape(v_(a), v_(b), "sub");
    Tensor out = v_(a);
    const Tensor& bv = v_(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const bool ng = needs(a) || needs(b);
    const int aid = a.id, bid = b.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, bid, rid](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) {
            Tensor& ga = t.grad_buf(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
            Tensor& gb = t.grad_buf(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    };
    return r;
}

Var Tape::mul(Var a, Var b) {
    require_same_shape(v_(a), v_(b), "mul");
    Tensor out = v_(a);
    const Tensor& bv = v_(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const bool ng = needs(a) || needs(b);
    const int aid = a.id, bid = b.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, bid, rid](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& av = t.nodes_[static_cast<std::size_t>(aid)].value;
        const Tensor& bv2 = t.nodes_[static_cast<std::size_t>(bid)].value;
        if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) {
            Tensor& ga = t.grad_buf(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
            Tensor& gb = t.grad_buf(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    };
    return r;
}

Var Tape::add_rowvec(Var m, Var v) {
    const Tensor& mv = v_(m);
    const Tensor& vv = v_(v);
    if (mv.rank() != 2 || vv.rank() != 1 || mv.cols() != vv.size())
        throw ShapeError("add_rowvec: incompatible shapes " + mv.shape_str() + " and " + vv.shape_str());
    Tensor out = mv;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += vv[j];
    const bool ng = needs(m) || needs(v);
    const int mid = m.id, vid = v.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [mid, vid, rid](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        if (t.nodes_[static_cast<std::size_t>(mid)].needs_grad) {
            Tensor& gm = t.grad_buf(mid);
            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (t.nodes_[static_cast<std::size_t>(vid)].needs_grad) {
            Tensor& gv = t.grad_buf(vid);
            const std::size_t rows = g.rows(), cols = g.cols();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) gv[j] += g.at(i, j);
        }
    };
    return r;
}

Var Tape::broadcast_rows(Var v, std::size_t n_rows) {
    const Tensor& vv = v_(v);
    if (vv.rank() != 1) throw ShapeError("broadcast_rows: expected rank-1, got " + vv.shape_str());
    Tensor out(n_rows, vv.size());
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < vv.size(); ++j) out.at(i, j) = vv[j];
    const bool ng = needs(v);
    const int vid = v.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [vid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(vid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        Tensor& gv = t.grad_buf(vid);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gv[j] += g.at(i, j);
    };
    return r;
}

Var Tape::scale(Var a, double c) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid, c](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    };
    return r;
}

Var Tape::add_const(Var a, double c) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return r;
}

Var Tape::tanh_(Var a) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& y = t.nodes_[static_cast<std::size_t>(rid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    };
    return r;
}

Var Tape::relu(Var a) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& x = t.nodes_[static_cast<std::size_t>(aid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    };
    return r;
}

Var Tape::sigmoid(Var a) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& y = t.nodes_[static_cast<std::size_t>(rid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
    return r;
}

Var Tape::softplus(Var a) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(out[i]);
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& x = t.nodes_[static_cast<std::size_t>(aid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * stable_sigmoid(x[i]);
    };
    return r;
}

Var Tape::exp_(Var a) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& y = t.nodes_[static_cast<std::size_t>(rid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    };
    return r;
}

Var Tape::log_(Var a) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& x = t.nodes_[static_cast<std::size_t>(aid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    };
    return r;
}

Var Tape::square(Var a) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& x = t.nodes_[static_cast<std::size_t>(aid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * x[i];
    };
    return r;
}

Var Tape::clamp(Var a, double lo, double hi) {
    Tensor out = v_(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo, hi);
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid, lo, hi](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& x = t.nodes_[static_cast<std::size_t>(aid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > lo && x[i] < hi) ga[i] += g[i];
    };
    return r;
}

Var Tape::min_ew(Var a, Var b) {
    require_same_shape(v_(a), v_(b), "min_ew");
    Tensor out = v_(a);
    const Tensor& bv = v_(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], bv[i]);
    const bool ng = needs(a) || needs(b);
    const int aid = a.id, bid = b.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, bid, rid](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& av = t.nodes_[static_cast<std::size_t>(aid)].value;
        const Tensor& bv2 = t.nodes_[static_cast<std::size_t>(bid)].value;
        const bool na = t.nodes_[static_cast<std::size_t>(aid)].needs_grad;
        const bool nb = t.nodes_[static_cast<std::size_t>(bid)].needs_grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] <= bv2[i]) {  // ties route to a
                if (na) t.grad_buf(aid)[i] += g[i];
            } else if (nb) {
                t.grad_buf(bid)[i] += g[i];
            }
        }
    };
    return r;
}

Var Tape::sum_all(Var a) {
    const Tensor& av = v_(a);
    Tensor out(static_cast<std::size_t>(1));
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    out[0] = s;
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const double g = t.nodes_[static_cast<std::size_t>(rid)].grad[0];
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return r;
}

Var Tape::mean_all(Var a) {
    const std::size_t n = v_(a).size();
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var Tape::sum_cols(Var a) {
    const Tensor& av = v_(a);
    if (av.rank() != 2) throw ShapeError("sum_cols: expected rank-2, got " + av.shape_str());
    Tensor out(av.rows(), static_cast<std::size_t>(1));
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) s += av.at(i, j);
        out.at(i, 0) = s;
    }
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            const double gi = g.at(i, 0);
            for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += gi;
        }
    };
    return r;
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& av = v_(a);
    const Tensor& bv = v_(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows())
        throw ShapeError("concat_cols: incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
    Tensor out(av.rows(), av.cols() + bv.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j);
        for (std::size_t j = 0; j < bv.cols(); ++j) out.at(i, av.cols() + j) = bv.at(i, j);
    }
    const bool ng = needs(a) || needs(b);
    const int aid = a.id, bid = b.id;
    const std::size_t ac = av.cols();
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, bid, rid, ac](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) {
            Tensor& ga = t.grad_buf(aid);
            for (std::size_t i = 0; i < ga.rows(); ++i)
                for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(i, j);
        }
        if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
            Tensor& gb = t.grad_buf(bid);
            for (std::size_t i = 0; i < gb.rows(); ++i)
                for (std::size_t j = 0; j < gb.cols(); ++j) gb.at(i, j) += g.at(i, ac + j);
        }
    };
    return r;
}

Var Tape::slice_cols(Var a, std::size_t lo, std::size_t hi) {
    const Tensor& av = v_(a);
    if (av.rank() != 2 || hi > av.cols() || lo >= hi)
        throw ShapeError("slice_cols: bad range on " + av.shape_str());
    Tensor out(av.rows(), hi - lo);
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = lo; j < hi; ++j) out.at(i, j - lo) = av.at(i, j);
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid, lo](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga.at(i, lo + j) += g.at(i, j);
    };
    return r;
}

Var Tape::softmax_rows(Var a) {
    const Tensor& av = v_(a);
    if (av.rank() != 2) throw ShapeError("softmax_rows: expected rank-2, got " + av.shape_str());
    Tensor out = av;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double mx = out.at(i, 0);
        for (std::size_t j = 1; j < out.cols(); ++j) mx = std::max(mx, out.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) /= z;
    }
    const bool ng = needs(a);
    const int aid = a.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [aid, rid](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(aid)].needs_grad) return;
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        const Tensor& y = t.nodes_[static_cast<std::size_t>(rid)].value;
        Tensor& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j)
                ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    };
    return r;
}

Var Tape::gaussian_sample(Var mu, Var sigma, Rng& rng) {
    require_same_shape(v_(mu), v_(sigma), "gaussian_sample");
    Tensor eta = Tensor::zeros_like(v_(mu));
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = rng.normal();
    Tensor out = v_(mu);
    const Tensor& sv = v_(sigma);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sv[i] * eta[i];
    const bool ng = needs(mu) || needs(sigma);
    const int mid = mu.id, sid = sigma.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [mid, sid, rid, eta](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<std::size_t>(rid)].grad;
        if (t.nodes_[static_cast<std::size_t>(mid)].needs_grad) {
            Tensor& gm = t.grad_buf(mid);
            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (t.nodes_[static_cast<std::size_t>(sid)].needs_grad) {
            Tensor& gs = t.grad_buf(sid);
            for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * eta[i];
        }
    };
    return r;
}

// ---- losses ----------------------------------------------------------------

Var Tape::mse(Var pred, Var target) {
    require_same_shape(v_(pred), v_(target), "mse");
    const Tensor& pv = v_(pred);
    const Tensor& tv = v_(target);
    Tensor out(static_cast<std::size_t>(1));
    double s = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = pv[i] - tv[i];
        s += d * d;
    }
    const double n = static_cast<double>(pv.size());
    out[0] = s / n;
    const bool ng = needs(pred) || needs(target);
    const int pid = pred.id, tid = target.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [pid, tid, rid, n](Tape& t) {
        const double g = t.nodes_[static_cast<std::size_t>(rid)].grad[0];
        const Tensor& pv2 = t.nodes_[static_cast<std::size_t>(pid)].value;
        const Tensor& tv2 = t.nodes_[static_cast<std::size_t>(tid)].value;
        if (t.nodes_[static_cast<std::size_t>(pid)].needs_grad) {
            Tensor& gp = t.grad_buf(pid);
            for (std::size_t i = 0; i < gp.size(); ++i)
                gp[i] += g * 2.0 * (pv2[i] - tv2[i]) / n;
        }
        if (t.nodes_[static_cast<std::size_t>(tid)].needs_grad) {
            Tensor& gt = t.grad_buf(tid);
            for (std::size_t i = 0; i < gt.size(); ++i)
                gt[i] -= g * 2.0 * (pv2[i] - tv2[i]) / n;
        }
    };
    return r;
}

Var Tape::kl_gaussian(Var mu, Var sigma) {
    require_same_shape(v_(mu), v_(sigma), "kl_gaussian");
    const Tensor& mv = v_(mu);
    const Tensor& sv = v_(sigma);
    const double batch = mv.rank() == 2 ? static_cast<double>(mv.rows()) : 1.0;
    Tensor out(static_cast<std::size_t>(1));
    double s = 0.0;
    for (std::size_t i = 0; i < mv.size(); ++i) {
        const double m = mv[i], sg = sv[i];
        s += 0.5 * (m * m + sg * sg - 1.0 - 2.0 * std::log(sg));
    }
    out[0] = s / batch;
    const bool ng = needs(mu) || needs(sigma);
    const int mid = mu.id, sid = sigma.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    nodes_[static_cast<std::size_t>(rid)].back = [mid, sid, rid, batch](Tape& t) {
        const double g = t.nodes_[static_cast<std::size_t>(rid)].grad[0];
        const Tensor& mv2 = t.nodes_[static_cast<std::size_t>(mid)].value;
        const Tensor& sv2 = t.nodes_[static_cast<std::size_t>(sid)].value;
        if (t.nodes_[static_cast<std::size_t>(mid)].needs_grad) {
            Tensor& gm = t.grad_buf(mid);
            for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g * mv2[i] / batch;
        }
        if (t.nodes_[static_cast<std::size_t>(sid)].needs_grad) {
            Tensor& gs = t.grad_buf(sid);
            for (std::size_t i = 0; i < gs.size(); ++i)
                gs[i] += g * (sv2[i] - 1.0 / sv2[i]) / batch;
        }
    };
    return r;
}

Var Tape::softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    const Tensor& lv = v_(logits);
    if (lv.rank() != 2 || lv.rows() != labels.size())
        throw ShapeError("softmax_cross_entropy: logits " + lv.shape_str() + " vs " +
                         std::to_string(labels.size()) + " labels");
    const std::size_t cls = lv.cols();
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= cls)
            throw ShapeError("softmax_cross_entropy: label out of range");
    const double batch = static_cast<double>(lv.rows());
    Tensor out(static_cast<std::size_t>(1));
    double s = 0.0;
    for (std::size_t i = 0; i < lv.rows(); ++i) {
        double mx = lv.at(i, 0);
        for (std::size_t j = 1; j < cls; ++j) mx = std::max(mx, lv.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < cls; ++j) z += std::exp(lv.at(i, j) - mx);
        s += std::log(z) + mx - lv.at(i, static_cast<std::size_t>(labels[i]));
    }
    out[0] = s / batch;
    const bool ng = needs(logits);
    const int lid = logits.id;
    Var r = push(std::move(out), ng, nullptr);
    const int rid = r.id;
    const std::vector<int> lab = labels;
    nodes_[static_cast<std::size_t>(rid)].back = [lid, rid, lab, batch](Tape& t) {
        if (!t.nodes_[static_cast<std::size_t>(lid)].needs_grad) return;
        const double g = t.nodes_[static_cast<std::size_t>(rid)].grad[0];
        const Tensor& lv2 = t.nodes_[static_cast<std::size_t>(lid)].value;
        Tensor& gl = t.grad_buf(lid);
        const std::size_t cls2 = lv2.cols();
        for (std::size_t i = 0; i < lv2.rows(); ++i) {
            double mx = lv2.at(i, 0);
            for (std::size_t j = 1; j < cls2; ++j) mx = std::max(mx, lv2.at(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < cls2; ++j) z += std::exp(lv2.at(i, j) - mx);
            for (std::size_t j = 0; j < cls2; ++j) {
                const double p = std::exp(lv2.at(i, j) - mx) / z;
                const double onehot = (static_cast<std::size_t>(lab[i]) == j) ? 1.0 : 0.0;
                gl.at(i, j) += g * (p - onehot) / batch;
            }
        }
    };
    return r;
}

} // namespace rflight
