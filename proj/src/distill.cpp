#include "rflight/distill.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

namespace rflight {

std::vector<std::size_t> DistillDataset::label_histogram() const {
    std::vector<std::size_t> h(kAttackClasses, 0);
    for (const auto& s : samples) h[static_cast<std::size_t>(s.label)] += 1;
    return h;
}

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_vec(std::istream& is, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

constexpr std::uint32_t kDatasetMagic = 0x52464454;  // "RFDT"
constexpr std::uint32_t kDatasetVersion = 1;

} // namespace

void DistillDataset::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingArtifactError("dataset: cannot open for write: " + path);
    put(os, kDatasetMagic);
    put(os, kDatasetVersion);
    put(os, static_cast<std::uint64_t>(samples.size()));
    put(os, static_cast<std::uint64_t>(window_dim));
    put(os, static_cast<std::uint64_t>(state_dim));
    put(os, static_cast<std::uint64_t>(latent_dim));
    const auto hist = label_histogram();
    for (std::size_t c = 0; c < static_cast<std::size_t>(kAttackClasses); ++c)
        put(os, static_cast<std::uint64_t>(hist[c]));
    for (const auto& s : samples) {
        put_vec(os, s.window);
        put_vec(os, s.full_state);
        put_vec(os, s.latent_target);
        os.write(reinterpret_cast<const char*>(s.action_target.data()),
                 sizeof(double) * kActionDim);
        put(os, static_cast<std::int32_t>(s.label));
    }
    if (!os) throw MissingArtifactError("dataset: write failed: " + path);
}

DistillDataset DistillDataset::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("dataset: cannot open: " + path);
    if (get<std::uint32_t>(is) != kDatasetMagic)
        throw MissingArtifactError("dataset: bad magic in " + path);
    if (get<std::uint32_t>(is) != kDatasetVersion)
        throw MissingArtifactError("dataset: unsupported version in " + path);
    DistillDataset d;
    const std::uint64_t n = get<std::uint64_t>(is);
    d.window_dim = static_cast<std::size_t>(get<std::uint64_t>(is));
    d.state_dim = static_cast<std::size_t>(get<std::uint64_t>(is));
    d.latent_dim = static_cast<std::size_t>(get<std::uint64_t>(is));
    for (int c = 0; c < kAttackClasses; ++c) (void)get<std::uint64_t>(is);  // histogram
    d.samples.resize(n);
    for (auto& s : d.samples) {
        get_vec(is, s.window, d.window_dim);
        get_vec(is, s.full_state, d.state_dim);
        get_vec(is, s.latent_target, d.latent_dim);
        is.read(reinterpret_cast<char*>(s.action_target.data()), sizeof(double) * kActionDim);
        s.label = static_cast<int>(get<std::int32_t>(is));
    }
    if (!is) throw MissingArtifactError("dataset: truncated file: " + path);
    return d;
}

void DistillConfig::validate() const {
    if (dataset_steps < 0) throw ConfigError("distill.dataset_steps must be >= 0");
    if (holdout_frac < 0.0 || holdout_frac >= 1.0)
        throw ConfigError("distill.holdout_frac must be in [0,1)");
    if (epochs <= 0 || minibatch <= 0) throw ConfigError("distill: epochs/minibatch must be positive");
    if (lr <= 0.0) throw ConfigError("distill.lr must be positive");
    if (recon_weight < 0.0 || action_weight < 0.0 || cls_weight < 0.0)
        throw ConfigError("distill: loss weights must be >= 0");
}

DistillDataset collect_distill_dataset(const TrainConfig& cfg, const TeacherEncoder& teacher,
                                       PolicyNet& policy, long n_steps, std::uint64_t seed,
                                       const DistillConfig& dcfg) {
    DistillDataset data;
    data.window_dim = cfg.enc.history_len * static_cast<std::size_t>(kObsDim);
    data.state_dim = kFullStateDim;
    data.latent_dim = dcfg.latent_mu_only ? cfg.enc.latent_dim : 2 * cfg.enc.latent_dim;
    if (n_steps <= 0) return data;

    Env env(cfg.env);
    Rng root(seed);
    Rng env_rng = root.child(11);
    Rng act_rng = root.child(12);
    HistoryWindow window(cfg.enc.history_len);

    StepResult sr;
    bool need_reset = true;
    for (long i = 0; i < n_steps; ++i) {
        if (need_reset) {
            std::vector<AttackSpec> specs;
            AttackSpec spec = sample_attack(env_rng, cfg.catalog, cfg.allowed_sensors,
                                            cfg.p_none, cfg.env.episode_len_s(), cfg.env.uav.dt);
            if (!spec.is_none()) specs.push_back(spec);
            sr = env.reset(env_rng, specs);
            window.reset();
            need_reset = false;
        }
        window.push(sr.norm_obs);

        DistillSample s;
        s.window = window.flat();
        s.full_state = encode_full_state(sr.norm_obs, sr.priv, cfg.env.norms);
        s.label = sr.priv.label();
        const LatentState l = teacher.encode_eval(s.full_state);
        s.latent_target = dcfg.latent_mu_only ? l.mu : latent_for_policy(l, false);

        const std::vector<double> pol_in = latent_for_policy(l, cfg.enc.policy_input_mu_only);
        const ActResult ar = act(policy, pol_in, act_rng, true);
        s.action_target = ar.action;
        data.samples.push_back(std::move(s));

        sr = env.step(ar.action);
        if (sr.done) need_reset = true;
    }
    return data;
}

Var student_loss(Tape& t, const EncoderOutputs& out, Var latent_target, Var action_target,
                 Var window_target, const std::vector<int>& labels, PolicyNet& policy,
                 const DistillConfig& cfg) {
    Var latent = cfg.latent_mu_only ? out.mu : t.concat_cols(out.mu, out.sigma);
    // ||l - l_bar||^2 summed per sample, averaged over the batch.
    Var latent_term = t.mean_all(t.sum_cols(t.square(t.sub(latent, latent_target))));
    Var action = policy.action_forward(t, latent);
    Var action_term = t.mean_all(t.sum_cols(t.square(t.sub(action, action_target))));
    Var cls_term = t.softmax_cross_entropy(out.logits, labels);
    Var recon_term = t.mse(out.recon, window_target);
    Var loss = t.add(latent_term, t.scale(action_term, cfg.action_weight));
    loss = t.add(loss, t.scale(cls_term, cfg.cls_weight));
    loss = t.add(loss, t.scale(recon_term, cfg.recon_weight));
    return loss;
}

namespace {

// Latent MSE / action disagreement / classifier accuracy on a sample index set.
DistillEpoch holdout_metrics(StudentEncoder& student, PolicyNet& policy,
                             const DistillDataset& data, const std::vector<std::size_t>& idx,
                             const DistillConfig& cfg, bool policy_mu_only) {
    DistillEpoch m;
    if (idx.empty()) return m;
    double mse = 0.0, dis = 0.0, acc = 0.0;
    std::size_t mse_n = 0;
    for (std::size_t i : idx) {
        const DistillSample& s = data.samples[i];
        const LatentState l = student.encode_eval(s.window);
        const std::vector<double> lv = cfg.latent_mu_only ? l.mu : latent_for_policy(l, false);
        for (std::size_t j = 0; j < lv.size(); ++j) {
            const double d = lv[j] - s.latent_target[j];
            mse += d * d;
        }
        mse_n += lv.size();

        Rng dummy(0);
        const ActResult ar = act(policy, latent_for_policy(l, policy_mu_only), dummy, true);
        double a2 = 0.0;
        for (int c = 0; c < kActionDim; ++c) {
            const double d = ar.action[static_cast<std::size_t>(c)] -
                             s.action_target[static_cast<std::size_t>(c)];
            a2 += d * d;
        }
        dis += std::sqrt(a2);

        // classifier head argmax
        Tape t;
        std::vector<Var> steps;
        const std::size_t N = student.history_len();
        for (std::size_t k = 0; k < N; ++k) {
            Tensor step(static_cast<std::size_t>(1), static_cast<std::size_t>(kObsDim));
            for (int j = 0; j < kObsDim; ++j)
                step.at(0, static_cast<std::size_t>(j)) = s.window[k * kObsDim + static_cast<std::size_t>(j)];
            steps.push_back(t.input(step));
        }
        EncoderOutputs out = student.forward(t, steps, nullptr, false);
        const Tensor& logits = t.val(out.logits);
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits.at(0, c) > logits.at(0, best)) best = c;
        if (static_cast<int>(best) == s.label) acc += 1.0;
    }
    m.holdout_latent_mse = mse / static_cast<double>(mse_n);
    m.holdout_action_disagreement = dis / static_cast<double>(idx.size());
    m.holdout_cls_accuracy = acc / static_cast<double>(idx.size());
    return m;
}

} // namespace

DistillResult train_student(const DistillDataset& dataset, TeacherEncoder& teacher,
                            PolicyNet& policy, const EncoderConfig& enc_cfg,
                            const DistillConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (dataset.samples.empty()) throw MissingArtifactError("distill: dataset is empty");

    NamedParams teacher_params = teacher.named_params();
    NamedParams policy_params = policy.named_params();
    const std::uint64_t teacher_sum = params_checksum(teacher_params);
    const std::uint64_t policy_sum = params_checksum(policy_params);

    Rng root(seed);
    Rng net_rng = root.child(21);
    Rng order_rng = root.child(22);

    DistillResult res;
    res.student = StudentEncoder(enc_cfg, net_rng);

    const std::size_t n = dataset.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.uniform_int(static_cast<int>(i)))]);
    const std::size_t holdout_n = static_cast<std::size_t>(cfg.holdout_frac * static_cast<double>(n));
    std::vector<std::size_t> holdout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_n));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(holdout_n), order.end());
    if (train.empty()) throw MissingArtifactError("distill: no training samples after holdout split");

    // Per-element variance of the holdout latent targets (teacher signal scale).
    {
        const auto& idx = holdout.empty() ? train : holdout;
        const std::size_t d = dataset.latent_dim;
        std::vector<double> mean(d, 0.0), sq(d, 0.0);
        for (std::size_t i : idx)
            for (std::size_t j = 0; j < d; ++j) mean[j] += dataset.samples[i].latent_target[j];
        for (double& v : mean) v /= static_cast<double>(idx.size());
        for (std::size_t i : idx)
            for (std::size_t j = 0; j < d; ++j) {
                const double dv = dataset.samples[i].latent_target[j] - mean[j];
                sq[j] += dv * dv;
            }
        double var = 0.0;
        for (double v : sq) var += v / static_cast<double>(idx.size());
        res.teacher_latent_variance = var / static_cast<double>(d);
    }

    Adam opt(cfg.lr);
    opt.attach(res.student.named_params());

    const std::size_t N = enc_cfg.history_len;
    const bool policy_mu_only = enc_cfg.policy_input_mu_only;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = train.size(); i > 1; --i)
            std::swap(train[i - 1],
                      train[static_cast<std::size_t>(order_rng.uniform_int(static_cast<int>(i)))]);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < train.size(); lo += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t hi = std::min(train.size(), lo + static_cast<std::size_t>(cfg.minibatch));
            const std::size_t b = hi - lo;

            std::vector<Tensor> step_in(N, Tensor(b, static_cast<std::size_t>(kObsDim)));
            Tensor latent_t(b, dataset.latent_dim);
            Tensor action_t(b, static_cast<std::size_t>(kActionDim));
            Tensor window_t(b, dataset.window_dim);
            std::vector<int> labels(b);
            for (std::size_t r = 0; r < b; ++r) {
                const DistillSample& s = dataset.samples[train[lo + r]];
                for (std::size_t k = 0; k < N; ++k)
                    for (int j = 0; j < kObsDim; ++j)
                        step_in[k].at(r, static_cast<std::size_t>(j)) =
                            s.window[k * kObsDim + static_cast<std::size_t>(j)];
                for (std::size_t j = 0; j < dataset.latent_dim; ++j)
                    latent_t.at(r, j) = s.latent_target[j];
                for (int c = 0; c < kActionDim; ++c)
                    action_t.at(r, static_cast<std::size_t>(c)) =
                        s.action_target[static_cast<std::size_t>(c)];
                for (std::size_t j = 0; j < dataset.window_dim; ++j)
                    window_t.at(r, j) = s.window[j];
                labels[r] = s.label;
            }

            Tape t;
            std::vector<Var> steps;
            steps.reserve(N);
            for (std::size_t k = 0; k < N; ++k) steps.push_back(t.input(step_in[k]));
            EncoderOutputs out = res.student.forward(t, steps, nullptr, false);
            Var loss = student_loss(t, out, t.input(latent_t), t.input(action_t),
                                    t.input(window_t), labels, policy, cfg);
            const double loss_v = t.scalar(loss);
            if (!std::isfinite(loss_v))
                throw NumericError("distill: student loss diverged (non-finite)");
            t.backward(loss);
            // The policy participates in the action term but stays frozen:
            // only student parameters are attached to the optimizer.
            opt.step(t, 1.0);
            epoch_loss += loss_v;
            ++batches;
        }

        DistillEpoch m = holdout_metrics(res.student, policy, dataset,
                                         holdout.empty() ? train : holdout, cfg, policy_mu_only);
        m.train_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
        res.epochs.push_back(m);
    }

    if (params_checksum(teacher_params) != teacher_sum)
        throw NumericError("distill: teacher parameters changed during stage 2");
    if (params_checksum(policy_params) != policy_sum)
        throw NumericError("distill: policy parameters changed during stage 2");
    return res;
}

} // namespace rflight
