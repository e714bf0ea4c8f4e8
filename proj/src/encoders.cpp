#include "rflight/encoders.hpp"

namespace rflight {

namespace {

std::vector<std::size_t> drop_last(const std::vector<std::size_t>& v) {
    if (v.empty()) throw ConfigError("encoder: hidden layer list must not be empty");
    return std::vector<std::size_t>(v.begin(), v.end() - 1);
}

Tensor row_tensor(const std::vector<double>& v) {
    Tensor t(static_cast<std::size_t>(1), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) t.at(0, i) = v[i];
    return t;
}

LatentState latent_from(const Tape& tape, const EncoderOutputs& out) {
    LatentState l;
    const Tensor& mu = tape.val(out.mu);
    const Tensor& sg = tape.val(out.sigma);
    const Tensor& z = tape.val(out.z);
    l.mu.assign(mu.data(), mu.data() + mu.size());
    l.sigma.assign(sg.data(), sg.data() + sg.size());
    l.z.assign(z.data(), z.data() + z.size());
    return l;
}

} // namespace

TeacherEncoder::TeacherEncoder(std::size_t input_dim, const EncoderConfig& cfg, Rng& rng)
    : input_dim_(input_dim), latent_dim_(cfg.latent_dim) {
    const std::size_t trunk_out = cfg.teacher_hidden.back();
    trunk_ = Mlp(input_dim, drop_last(cfg.teacher_hidden), trunk_out, Activation::Relu, rng);
    mu_head_ = DenseLayer(trunk_out, latent_dim_, rng);
    sigma_head_ = DenseLayer(trunk_out, latent_dim_, rng);
    cls_head_ = DenseLayer(trunk_out, kAttackClasses, rng);
    decoder_ = Mlp(latent_dim_, cfg.decoder_hidden, input_dim, Activation::Relu, rng);
}

EncoderOutputs TeacherEncoder::forward(Tape& t, Var s, Rng* rng, bool train) {
    const Tensor& sv = t.val(s);
    if (sv.rank() != 2 || sv.cols() != input_dim_)
        throw ShapeError("teacher: expected (B x " + std::to_string(input_dim_) + "), got " +
                         sv.shape_str());
    EncoderOutputs out;
    Var h = t.relu(trunk_.forward(t, s));
    out.mu = mu_head_.forward(t, h);
    out.sigma = t.add_const(t.softplus(sigma_head_.forward(t, h)), kSigmaFloor);
    out.logits = cls_head_.forward(t, h);
    if (train) {
        if (!rng) throw NumericError("teacher: train-mode forward needs an RNG");
        out.z = t.gaussian_sample(out.mu, out.sigma, *rng);
    } else {
        out.z = out.mu;
    }
    out.recon = decoder_.forward(t, out.z);
    return out;
}

LatentState TeacherEncoder::encode_eval(const std::vector<double>& s) const {
    Tape tape;
    Var in = tape.input(row_tensor(s));
    // forward() is non-const only because Tape::param takes Tensor&.
    EncoderOutputs out = const_cast<TeacherEncoder*>(this)->forward(tape, in, nullptr, false);
    return latent_from(tape, out);
}

NamedParams TeacherEncoder::named_params() {
    NamedParams p;
    trunk_.collect("trunk", p);
    mu_head_.collect("mu", p);
    sigma_head_.collect("sigma", p);
    cls_head_.collect("cls", p);
    decoder_.collect("dec", p);
    return p;
}

Var teacher_loss(Tape& t, const EncoderOutputs& out, Var s_true,
                 const std::vector<int>& labels, const TeacherLossWeights& w) {
    Var recon = t.mse(out.recon, s_true);
    Var kl = t.kl_gaussian(out.mu, out.sigma);
    Var cls = t.softmax_cross_entropy(out.logits, labels);
    return t.add(t.add(t.scale(recon, w.recon), t.scale(kl, w.kl)), t.scale(cls, w.cls));
}

StudentEncoder::StudentEncoder(const EncoderConfig& cfg, Rng& rng)
    : history_len_(cfg.history_len), latent_dim_(cfg.latent_dim) {
    lstm_ = LstmStack(kObsDim, cfg.student_hidden, cfg.student_layers, rng);
    const std::size_t h = cfg.student_hidden;
    mu_head_ = DenseLayer(h, latent_dim_, rng);
    sigma_head_ = DenseLayer(h, latent_dim_, rng);
    cls_head_ = DenseLayer(h, kAttackClasses, rng);
    recon_head_ = DenseLayer(h, history_len_ * kObsDim, rng);
}

EncoderOutputs StudentEncoder::forward(Tape& t, const std::vector<Var>& window_steps, Rng* rng,
                                       bool train) {
    if (window_steps.size() != history_len_)
        throw ShapeError("student: window has " + std::to_string(window_steps.size()) +
                         " steps, expected " + std::to_string(history_len_));
    EncoderOutputs out;
    Var h = lstm_.forward_sequence(t, window_steps);
    out.mu = mu_head_.forward(t, h);
    out.sigma = t.add_const(t.softplus(sigma_head_.forward(t, h)), kSigmaFloor);
    out.logits = cls_head_.forward(t, h);
    if (train) {
        if (!rng) throw NumericError("student: train-mode forward needs an RNG");
        out.z = t.gaussian_sample(out.mu, out.sigma, *rng);
    } else {
        out.z = out.mu;
    }
    out.recon = recon_head_.forward(t, h);
    return out;
}

LatentState StudentEncoder::encode_eval(const std::vector<double>& window_flat) const {
    if (window_flat.size() != window_dim())
        throw ShapeError("student: window size " + std::to_string(window_flat.size()) +
                         ", expected " + std::to_string(window_dim()));
    Tape tape;
    std::vector<Var> steps;
    steps.reserve(history_len_);
    for (std::size_t k = 0; k < history_len_; ++k) {
        Tensor step(static_cast<std::size_t>(1), static_cast<std::size_t>(kObsDim));
        for (int j = 0; j < kObsDim; ++j)
            step.at(0, static_cast<std::size_t>(j)) =
                window_flat[k * kObsDim + static_cast<std::size_t>(j)];
        steps.push_back(tape.input(step));
    }
    EncoderOutputs out =
        const_cast<StudentEncoder*>(this)->forward(tape, steps, nullptr, false);
    return latent_from(tape, out);
}

NamedParams StudentEncoder::named_params() {
    NamedParams p;
    lstm_.collect("lstm", p);
    mu_head_.collect("mu", p);
    sigma_head_.collect("sigma", p);
    cls_head_.collect("cls", p);
    recon_head_.collect("recon", p);
    return p;
}

void HistoryWindow::push(const std::array<double, kObsDim>& obs) {
    if (buf_.size() == cap_) buf_.erase(buf_.begin());
    buf_.push_back(obs);
}

std::vector<double> HistoryWindow::flat() const {
    if (buf_.empty()) throw NumericError("history window: flat() before any observation");
    std::vector<double> out;
    out.reserve(cap_ * kObsDim);
    const std::size_t pad = cap_ - buf_.size();
    for (std::size_t k = 0; k < cap_; ++k) {
        const auto& o = k < pad ? buf_.front() : buf_[k - pad];
        out.insert(out.end(), o.begin(), o.end());
    }
    return out;
}

std::vector<double> latent_for_policy(const LatentState& l, bool mu_only) {
    std::vector<double> v = l.mu;
    if (!mu_only) v.insert(v.end(), l.sigma.begin(), l.sigma.end());
    return v;
}

Var latent_for_policy(Tape& t, const EncoderOutputs& out, bool mu_only) {
    if (mu_only) return out.mu;
    return t.concat_cols(out.mu, out.sigma);
}

} // namespace rflight
