#include "rflight/train.hpp"

#include <cmath>
#include <numeric>

namespace rflight {

void TrainConfig::validate() const {
    env.validate();
    ppo.validate();
    catalog.validate();
    if (p_none < 0.0 || p_none > 1.0) throw ConfigError("attacks.p_none must be in [0,1]");
    if (allowed_sensors.empty() && p_none < 1.0)
        throw ConfigError("attacks: allowed sensor set is empty but p_none < 1");
    if (teacher_lr <= 0.0) throw ConfigError("ppo.teacher_lr must be positive");
    if (teacher_epochs < 0) throw ConfigError("ppo.teacher_epochs must be >= 0");
    if (teacher_minibatch <= 0) throw ConfigError("ppo.teacher_minibatch must be positive");
}

namespace {

struct EpisodeTracker {
    double current = 0.0;
    std::vector<double> completed;

    void add(double r, bool done) {
        current += r;
        if (done) {
            completed.push_back(current);
            current = 0.0;
        }
    }
    double mean() const {
        if (completed.empty()) return 0.0;
        return std::accumulate(completed.begin(), completed.end(), 0.0) /
               static_cast<double>(completed.size());
    }
    double stddev() const {
        if (completed.size() < 2) return 0.0;
        const double m = mean();
        double v = 0.0;
        for (double r : completed) v += (r - m) * (r - m);
        return std::sqrt(v / static_cast<double>(completed.size()));
    }
};

// Teacher supervision batch gathered during rollouts.
struct TeacherBatch {
    std::vector<std::vector<double>> states;  // S_t rows
    std::vector<int> labels;
};

struct TeacherUpdateStats {
    double loss = 0.0, recon = 0.0, kl = 0.0, cls = 0.0, accuracy = 0.0;
};

TeacherUpdateStats update_teacher(TeacherEncoder& teacher, Adam& opt, const TeacherBatch& batch,
                                  const TrainConfig& cfg, Rng& rng) {
    TeacherUpdateStats stats;
    const std::size_t n = batch.states.size();
    if (n == 0) return stats;
    const std::size_t dim = batch.states[0].size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t batches = 0;
    for (int epoch = 0; epoch < cfg.teacher_epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
        for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg.teacher_minibatch)) {
            const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.teacher_minibatch));
            const std::size_t b = hi - lo;
            Tensor x(b, dim);
            std::vector<int> labels(b);
            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t idx = order[lo + r];
                for (std::size_t c = 0; c < dim; ++c) x.at(r, c) = batch.states[idx][c];
                labels[r] = batch.labels[idx];
            }
            Tape t;
            Var xv = t.input(x);
            EncoderOutputs out = teacher.forward(t, xv, &rng, true);
            TeacherLossWeights w;
            Var recon = t.mse(out.recon, xv);
            Var kl = t.kl_gaussian(out.mu, out.sigma);
            Var cls = t.softmax_cross_entropy(out.logits, labels);
            Var loss = t.add(t.add(t.scale(recon, w.recon), t.scale(kl, w.kl)),
                             t.scale(cls, w.cls));
            const double loss_v = t.scalar(loss);
            if (!std::isfinite(loss_v))
                throw NumericError("stage1: teacher loss diverged (non-finite)");
            t.backward(loss);
            opt.step(t, 1.0);

            stats.loss += loss_v;
            stats.recon += t.scalar(recon);
            stats.kl += t.scalar(kl);
            stats.cls += t.scalar(cls);
            const Tensor& logits = t.val(out.logits);
            double correct = 0.0;
            for (std::size_t r = 0; r < b; ++r) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < logits.cols(); ++c)
                    if (logits.at(r, c) > logits.at(r, best)) best = c;
                if (static_cast<int>(best) == labels[r]) correct += 1.0;
            }
            stats.accuracy += correct / static_cast<double>(b);
            ++batches;
        }
    }
    if (batches > 0) {
        const double inv = 1.0 / static_cast<double>(batches);
        stats.loss *= inv;
        stats.recon *= inv;
        stats.kl *= inv;
        stats.cls *= inv;
        stats.accuracy *= inv;
    }
    return stats;
}

} // namespace

Stage1Artifacts train_stage1(const TrainConfig& cfg, std::uint64_t seed, bool with_teacher,
                             const IterationSink& sink) {
    cfg.validate();
    Rng root(seed);
    Rng net_rng = root.child(1);
    Rng env_rng = root.child(2);
    Rng ppo_rng = root.child(3);
    Rng teacher_rng = root.child(4);
    Rng action_rng = root.child(5);

    Stage1Artifacts art;
    if (with_teacher) art.teacher.emplace(kFullStateDim, cfg.enc, net_rng);

    const std::size_t in_dim = with_teacher ? cfg.enc.policy_input_dim()
                                            : static_cast<std::size_t>(kObsDim);
    art.policy = PolicyNet(in_dim, cfg.ppo.policy_hidden, cfg.ppo.log_std_init, net_rng);
    art.value = ValueNet(in_dim, cfg.ppo.value_hidden, net_rng);

    Adam policy_opt(cfg.ppo.lr);
    policy_opt.attach(art.policy.named_params());
    Adam value_opt(cfg.ppo.lr);
    value_opt.attach(art.value.named_params());
    Adam teacher_opt(cfg.teacher_lr);
    if (with_teacher) teacher_opt.attach(art.teacher->named_params());

    std::unique_ptr<Controller> controller;
    if (with_teacher)
        controller = std::make_unique<TeacherLatentController>(*art.teacher, cfg.env.norms,
                                                               cfg.enc.policy_input_mu_only);
    else
        controller = std::make_unique<BaselineController>();

    Env env(cfg.env);
    RolloutBuffer buf(in_dim);
    EpisodeTracker tracker;
    StepResult sr;
    bool need_reset = true;

    auto sample_episode_attacks = [&]() {
        std::vector<AttackSpec> specs;
        AttackSpec spec = sample_attack(env_rng, cfg.catalog, cfg.allowed_sensors, cfg.p_none,
                                        cfg.env.episode_len_s(), cfg.env.uav.dt);
        if (!spec.is_none()) specs.push_back(spec);
        return specs;
    };

    long timesteps = 0;
    while (timesteps < cfg.ppo.total_steps) {
        buf.clear();
        TeacherBatch batch;
        std::vector<double> last_input;
        for (int i = 0; i < cfg.ppo.rollout_steps; ++i) {
            if (need_reset) {
                sr = env.reset(env_rng, sample_episode_attacks());
                controller->reset();
                need_reset = false;
            }
            if (with_teacher) {
                batch.states.push_back(encode_full_state(sr.norm_obs, sr.priv, cfg.env.norms));
                batch.labels.push_back(sr.priv.label());
            }
            const std::vector<double> input = controller->make_input(sr.norm_obs, sr.priv);
            const ActResult ar = act(art.policy, input, action_rng, false);
            const double v = art.value.value(input);
            sr = env.step(ar.action);
            buf.push(input, ar, sr.reward, v, sr.done);
            tracker.add(sr.reward, sr.done);
            last_input = controller->make_input(sr.norm_obs, sr.priv);
            if (sr.done) need_reset = true;
            ++timesteps;
        }
        buf.last_value = need_reset ? 0.0 : art.value.value(last_input);

        compute_gae(buf, cfg.ppo.discount, cfg.ppo.gae_lambda);
        const PpoMetrics pm = ppo_update(art.policy, art.value, policy_opt, value_opt, buf,
                                         cfg.ppo, ppo_rng);
        if (!std::isfinite(pm.policy_loss) || !std::isfinite(pm.value_loss)) {
            if (sink && !art.curve.empty()) sink(art, art.curve.back(), true);
            throw NumericError("stage1: PPO loss diverged (non-finite) at timestep " +
                               std::to_string(timesteps));
        }

        TeacherUpdateStats ts;
        if (with_teacher) {
            try {
                ts = update_teacher(*art.teacher, teacher_opt, batch, cfg, teacher_rng);
            } catch (const NumericError&) {
                if (sink && !art.curve.empty()) sink(art, art.curve.back(), true);
                throw;
            }
        }

        CurvePoint pt;
        pt.timestep = timesteps;
        pt.mean_episode_reward = tracker.mean();
        pt.std_episode_reward = tracker.stddev();
        pt.clip_fraction = pm.clip_fraction;
        pt.teacher_loss = ts.loss;
        pt.teacher_recon = ts.recon;
        pt.teacher_kl = ts.kl;
        pt.teacher_cls = ts.cls;
        pt.teacher_accuracy = ts.accuracy;
        art.curve.push_back(pt);
        art.timesteps = timesteps;
        tracker.completed.clear();

        if (sink) {
            const long iter = static_cast<long>(art.curve.size());
            const bool final = timesteps >= cfg.ppo.total_steps;
            if (final || (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0))
                sink(art, pt, final);
        }
    }
    return art;
}

EvalReward evaluate_reward(const TrainConfig& cfg, Controller& controller, PolicyNet& policy,
                           int episodes, std::uint64_t seed) {
    Env env(cfg.env);
    Rng root(seed);
    EvalReward out;
    std::vector<double> totals;
    for (int e = 0; e < episodes; ++e) {
        Rng ep = root.child(static_cast<std::uint64_t>(e) + 100);
        std::vector<AttackSpec> specs;
        AttackSpec spec = sample_attack(ep, cfg.catalog, cfg.allowed_sensors, cfg.p_none,
                                        cfg.env.episode_len_s(), cfg.env.uav.dt);
        if (!spec.is_none()) specs.push_back(spec);
        StepResult sr = env.reset(ep, specs);
        controller.reset();
        double total = 0.0;
        while (!sr.done) {
            const auto input = controller.make_input(sr.norm_obs, sr.priv);
            const ActResult ar = act(policy, input, ep, true);
            sr = env.step(ar.action);
            total += sr.reward;
        }
        totals.push_back(total);
    }
    out.episodes = episodes;
    if (!totals.empty()) {
        out.mean = std::accumulate(totals.begin(), totals.end(), 0.0) /
                   static_cast<double>(totals.size());
        double v = 0.0;
        for (double r : totals) v += (r - out.mean) * (r - out.mean);
        out.stddev = std::sqrt(v / static_cast<double>(totals.size()));
    }
    return out;
}

} // namespace rflight
