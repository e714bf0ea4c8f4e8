#include "rflight/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rflight {

namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)
constexpr double kSquashEps = 1e-8;
} // namespace

void RewardConfig::validate() const {
    if (r_goal < 0.0 || lambda_goal < 0.0 || alpha_path < 0.0 || beta_tilt < 0.0 ||
        gamma_smooth < 0.0)
        throw ConfigError("reward: all coefficients must be >= 0");
}

double reward(const Vec3& p, const Vec3& p_prev, const Vec3& goal, double tilt,
              const std::array<double, kActionDim>& a,
              const std::array<double, kActionDim>& a_prev, const RewardConfig& cfg) {
    const Vec3 to_goal{p[0] - goal[0], p[1] - goal[1], p[2] - goal[2]};
    const Vec3 step{p[0] - p_prev[0], p[1] - p_prev[1], p[2] - p_prev[2]};
    double da2 = 0.0;
    for (int i = 0; i < kActionDim; ++i) {
        const double d = a[static_cast<std::size_t>(i)] - a_prev[static_cast<std::size_t>(i)];
        da2 += d * d;
    }
    return cfg.r_goal * std::exp(-cfg.lambda_goal * norm3(to_goal)) -
           cfg.alpha_path * norm3(step) - cfg.beta_tilt * tilt - cfg.gamma_smooth * da2;
}

PolicyNet::PolicyNet(std::size_t in, const std::vector<std::size_t>& hidden,
                     double log_std_init, Rng& rng)
    : body(in, hidden, kActionDim, Activation::Tanh, rng),
      log_std(static_cast<std::size_t>(kActionDim)), input_dim(in) {
    log_std.fill(log_std_init);
}

NamedParams PolicyNet::named_params() {
    NamedParams p;
    body.collect("pi", p);
    p.emplace_back("pi.log_std", &log_std);
    return p;
}

ValueNet::ValueNet(std::size_t in, const std::vector<std::size_t>& hidden, Rng& rng)
    : body(in, hidden, 1, Activation::Tanh, rng), input_dim(in) {}

double ValueNet::value(const std::vector<double>& input) {
    Tape t;
    Tensor x(static_cast<std::size_t>(1), input.size());
    for (std::size_t i = 0; i < input.size(); ++i) x.at(0, i) = input[i];
    return t.val(forward(t, t.input(x)))[0];
}

NamedParams ValueNet::named_params() {
    NamedParams p;
    body.collect("vf", p);
    return p;
}

namespace {

std::array<double, kActionDim> policy_mean(PolicyNet& policy, const std::vector<double>& input) {
    Tape t;
    Tensor x(static_cast<std::size_t>(1), input.size());
    for (std::size_t i = 0; i < input.size(); ++i) x.at(0, i) = input[i];
    const Tensor& m = t.val(policy.mean_forward(t, t.input(x)));
    std::array<double, kActionDim> out{};
    for (int i = 0; i < kActionDim; ++i) out[static_cast<std::size_t>(i)] = m[static_cast<std::size_t>(i)];
    return out;
}

double log_prob_from(const std::array<double, kActionDim>& mean, const Tensor& log_std,
                     const std::array<double, kActionDim>& g) {
    double lp = 0.0;
    for (int i = 0; i < kActionDim; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const double ls = log_std[k];
        const double sigma = std::exp(ls);
        const double zi = (g[k] - mean[k]) / sigma;
        const double a = std::tanh(g[k]);
        lp += -0.5 * zi * zi - ls - kLogSqrt2Pi - std::log(1.0 - a * a + kSquashEps);
    }
    return lp;
}

} // namespace

ActResult act(PolicyNet& policy, const std::vector<double>& input, Rng& rng, bool deterministic) {
    if (input.size() != policy.input_dim)
        throw ShapeError("policy: input dim " + std::to_string(input.size()) + ", expected " +
                         std::to_string(policy.input_dim));
    const auto mean = policy_mean(policy, input);
    ActResult r;
    for (int i = 0; i < kActionDim; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const double sigma = std::exp(policy.log_std[k]);
        r.presquash[k] = deterministic ? mean[k] : mean[k] + sigma * rng.normal();
        r.action[k] = std::tanh(r.presquash[k]);
    }
    r.log_prob = log_prob_from(mean, policy.log_std, r.presquash);
    return r;
}

double action_log_prob(PolicyNet& policy, const std::vector<double>& input,
                       const std::array<double, kActionDim>& presquash) {
    return log_prob_from(policy_mean(policy, input), policy.log_std, presquash);
}

void RolloutBuffer::clear() {
    inputs.clear();
    actions.clear();
    presquash.clear();
    log_probs.clear();
    rewards.clear();
    values.clear();
    dones.clear();
    advantages.clear();
    returns.clear();
    last_value = 0.0;
}

void RolloutBuffer::push(const std::vector<double>& input, const ActResult& ar,
                         double reward_value, double value, bool done) {
    if (input.size() != input_dim) throw ShapeError("rollout buffer: input dim mismatch");
    inputs.insert(inputs.end(), input.begin(), input.end());
    actions.push_back(ar.action);
    presquash.push_back(ar.presquash);
    log_probs.push_back(ar.log_prob);
    rewards.push_back(reward_value);
    values.push_back(value);
    dones.push_back(done ? 1 : 0);
}

void compute_gae(RolloutBuffer& buf, double discount, double gae_lambda) {
    const std::size_t n = buf.size();
    if (n == 0) throw NumericError("compute_gae: empty buffer");
    buf.advantages.assign(n, 0.0);
    buf.returns.assign(n, 0.0);
    double next_adv = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        const bool done = buf.dones[i] != 0;
        const double next_value = done ? 0.0 : (i + 1 < n ? buf.values[i + 1] : buf.last_value);
        const double delta = buf.rewards[i] + discount * next_value - buf.values[i];
        next_adv = delta + (done ? 0.0 : discount * gae_lambda * next_adv);
        buf.advantages[i] = next_adv;
        buf.returns[i] = next_adv + buf.values[i];
    }
}

void normalize_advantages(std::vector<double>& adv) {
    if (adv.size() < 2) return;
    const double n = static_cast<double>(adv.size());
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= n;
    const double sd = std::sqrt(var) + 1e-8;
    for (double& a : adv) a = (a - mean) / sd;
}

void PpoConfig::validate() const {
    if (discount <= 0.0 || discount > 1.0) throw ConfigError("ppo.discount must be in (0,1]");
    if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("ppo.gae_lambda must be in [0,1]");
    if (clip <= 0.0) throw ConfigError("ppo.clip must be positive");
    if (epochs <= 0 || minibatch <= 0 || rollout_steps <= 0)
        throw ConfigError("ppo: epochs, minibatch and rollout_steps must be positive");
    if (lr <= 0.0) throw ConfigError("ppo.lr must be positive");
    reward.validate();
}

Var ppo_surrogate(Tape& t, Var ratio, Var advantages, double clip) {
    Var unclipped = t.mul(ratio, advantages);
    Var clipped = t.mul(t.clamp(ratio, 1.0 - clip, 1.0 + clip), advantages);
    return t.mean_all(t.min_ew(unclipped, clipped));
}

PpoMetrics ppo_update(PolicyNet& policy, ValueNet& value, Adam& policy_opt, Adam& value_opt,
                      RolloutBuffer& buf, const PpoConfig& cfg, Rng& rng) {
    const std::size_t n = buf.size();
    if (buf.advantages.size() != n)
        throw NumericError("ppo_update: advantages not computed");
    std::vector<double> adv = buf.advantages;
    normalize_advantages(adv);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    PpoMetrics metrics;
    std::size_t metric_batches = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the trainer RNG keeps updates reproducible.
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.minibatch));
            const std::size_t b = hi - lo;

            Tensor x(b, buf.input_dim);
            Tensor g(b, static_cast<std::size_t>(kActionDim));
            Tensor logp_old(b, static_cast<std::size_t>(1));
            Tensor adv_t(b, static_cast<std::size_t>(1));
            Tensor ret_t(b, static_cast<std::size_t>(1));
            Tensor squash_const(b, static_cast<std::size_t>(1));
            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t idx = order[lo + r];
                for (std::size_t c = 0; c < buf.input_dim; ++c)
                    x.at(r, c) = buf.inputs[idx * buf.input_dim + c];
                double sq = 0.0;
                for (int c = 0; c < kActionDim; ++c) {
                    const double gi = buf.presquash[idx][static_cast<std::size_t>(c)];
                    g.at(r, static_cast<std::size_t>(c)) = gi;
                    const double a = std::tanh(gi);
                    sq -= std::log(1.0 - a * a + kSquashEps);
                }
                squash_const.at(r, 0) = sq;
                logp_old.at(r, 0) = buf.log_probs[idx];
                adv_t.at(r, 0) = adv[idx];
                ret_t.at(r, 0) = buf.returns[idx];
            }

            Tape t;
            Var xv = t.input(x);
            Var gv = t.input(g);
            Var mean = policy.mean_forward(t, xv);
            Var ls = t.broadcast_rows(t.param(policy.log_std), b);
            Var inv_sigma = t.exp_(t.neg(ls));
            Var z = t.mul(t.sub(gv, mean), inv_sigma);
            // log N(g; mean, sigma) summed over action dims
            Var gauss = t.sum_cols(
                t.sub(t.scale(t.square(z), -0.5), t.add_const(ls, kLogSqrt2Pi)));
            Var logp_new = t.sub(gauss, t.input(squash_const));
            Var ratio = t.exp_(t.sub(logp_new, t.input(logp_old)));
            Var surrogate = ppo_surrogate(t, ratio, t.input(adv_t), cfg.clip);
            // Entropy of the pre-squash Gaussian; state independent.
            Var entropy = t.add_const(t.sum_all(t.param(policy.log_std)),
                                      kActionDim * (0.5 + kLogSqrt2Pi));
            Var v_pred = value.forward(t, xv);
            Var v_loss = t.mse(v_pred, t.input(ret_t));
            Var loss = t.add(t.sub(t.neg(surrogate), t.scale(entropy, cfg.entropy_coef)),
                             t.scale(v_loss, cfg.value_coef));
            t.backward(loss);
            policy_opt.step(t, cfg.max_grad_norm);
            value_opt.step(t, cfg.max_grad_norm);

            // Diagnostics on this minibatch (pre-update values).
            const Tensor& ratio_v = t.val(ratio);
            const Tensor& logp_new_v = t.val(logp_new);
            double clip_frac = 0.0, kl = 0.0;
            for (std::size_t r = 0; r < b; ++r) {
                if (std::abs(ratio_v.at(r, 0) - 1.0) > cfg.clip) clip_frac += 1.0;
                kl += logp_old.at(r, 0) - logp_new_v.at(r, 0);
            }
            metrics.policy_loss += -t.scalar(surrogate);
            metrics.value_loss += t.scalar(v_loss);
            metrics.entropy += t.scalar(entropy);
            metrics.clip_fraction += clip_frac / static_cast<double>(b);
            metrics.approx_kl += kl / static_cast<double>(b);
            ++metric_batches;
        }
    }
    if (metric_batches > 0) {
        const double inv = 1.0 / static_cast<double>(metric_batches);
        metrics.policy_loss *= inv;
        metrics.value_loss *= inv;
        metrics.entropy *= inv;
        metrics.clip_fraction *= inv;
        metrics.approx_kl *= inv;
    }
    return metrics;
}

} // namespace rflight
