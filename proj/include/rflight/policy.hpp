#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rflight/nn.hpp"
#include "rflight/sim.hpp"

namespace rflight {

inline constexpr int kActionDim = 4;

// Reward shaping coefficients:
//   r = r_goal * exp(-lambda_goal * |p - g|) - alpha_path * |p - p_prev|
//       - beta_tilt * tilt - gamma_smooth * |a - a_prev|^2
struct RewardConfig {
    double r_goal = 10.0;
    double lambda_goal = 0.5;   // 1/m
    double alpha_path = 0.05;   // 1/m
    double beta_tilt = 0.5;     // 1/rad
    double gamma_smooth = 0.1;  // per squared normalized action

    void validate() const;
};

// tilt = sqrt(phi^2 + theta^2), the combined roll/pitch deviation.
double reward(const Vec3& p, const Vec3& p_prev, const Vec3& goal, double tilt,
              const std::array<double, kActionDim>& a,
              const std::array<double, kActionDim>& a_prev, const RewardConfig& cfg);

// Gaussian policy with tanh-squashed mean and a global learnable log-std.
// Actions live in [-1,1]^4: a = tanh(g), g ~ N(mean(x), diag(exp(log_std))).
struct PolicyNet {
    Mlp body;
    Tensor log_std;  // (kActionDim)
    std::size_t input_dim = 0;

    PolicyNet() = default;
    PolicyNet(std::size_t in, const std::vector<std::size_t>& hidden, double log_std_init,
              Rng& rng);

    // Pre-squash mean (B x 4).
    Var mean_forward(Tape& t, Var x) { return body.forward(t, x); }
    // Squashed deterministic action head (B x 4), used by the distillation loss.
    Var action_forward(Tape& t, Var x) { return t.tanh_(body.forward(t, x)); }

    NamedParams named_params();
};

struct ValueNet {
    Mlp body;
    std::size_t input_dim = 0;

    ValueNet() = default;
    ValueNet(std::size_t in, const std::vector<std::size_t>& hidden, Rng& rng);

    Var forward(Tape& t, Var x) { return body.forward(t, x); }
    double value(const std::vector<double>& input);

    NamedParams named_params();
};

struct ActResult {
    std::array<double, kActionDim> action{};     // in [-1,1]
    std::array<double, kActionDim> presquash{};  // g with a = tanh(g)
    double log_prob = 0.0;                       // includes the tanh correction
};

ActResult act(PolicyNet& policy, const std::vector<double>& input, Rng& rng, bool deterministic);

// Log-density of a = tanh(g) under the current policy at input x
// (no tape; mirrors the tape-side computation in ppo_update).
double action_log_prob(PolicyNet& policy, const std::vector<double>& input,
                       const std::array<double, kActionDim>& presquash);

// One on-policy rollout: flat storage, fixed input dimension.
struct RolloutBuffer {
    std::size_t input_dim = 0;
    std::vector<double> inputs;  // size() * input_dim
    std::vector<std::array<double, kActionDim>> actions;
    std::vector<std::array<double, kActionDim>> presquash;
    std::vector<double> log_probs;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<std::uint8_t> dones;
    double last_value = 0.0;  // V(s_T) when the rollout ends mid-episode

    std::vector<double> advantages;
    std::vector<double> returns;

    explicit RolloutBuffer(std::size_t in_dim = 0) : input_dim(in_dim) {}

    std::size_t size() const { return rewards.size(); }
    void clear();
    void push(const std::vector<double>& input, const ActResult& ar, double reward_value,
              double value, bool done);
};

// Generalized advantage estimation over the buffer; terminal transitions
// bootstrap 0, the truncated tail bootstraps last_value. returns = adv + value.
void compute_gae(RolloutBuffer& buf, double discount, double gae_lambda);

// In-place normalization to zero mean / unit variance (no-op when size < 2).
void normalize_advantages(std::vector<double>& adv);

struct PpoConfig {
    double discount = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    int epochs = 4;
    int minibatch = 256;
    double lr = 3e-4;
    double entropy_coef = 1e-3;
    double value_coef = 0.5;
    double max_grad_norm = 0.5;
    int rollout_steps = 4096;
    long total_steps = 150000;
    std::vector<std::size_t> policy_hidden{64, 64};
    std::vector<std::size_t> value_hidden{64, 64};
    double log_std_init = -0.7;
    RewardConfig reward;

    void validate() const;
};

struct PpoMetrics {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

// Clipped-surrogate value for one minibatch; exposed so its ratio==1 and
// zero-advantage identities can be checked directly.
Var ppo_surrogate(Tape& t, Var ratio, Var advantages, double clip);

// Several epochs of minibatch Adam on the clipped surrogate + value MSE +
// entropy bonus. Advantages must have been computed (compute_gae).
PpoMetrics ppo_update(PolicyNet& policy, ValueNet& value, Adam& policy_opt, Adam& value_opt,
                      RolloutBuffer& buf, const PpoConfig& cfg, Rng& rng);

} // namespace rflight
