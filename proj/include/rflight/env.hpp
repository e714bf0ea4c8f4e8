#pragma once

#include <memory>
#include <vector>

#include "rflight/attack.hpp"
#include "rflight/encoders.hpp"
#include "rflight/policy.hpp"
#include "rflight/sim.hpp"

namespace rflight {

// Goal-reach task: fly from a noisy start pose to a sampled goal while the
// attack injector corrupts the observations. Rewards and termination use the
// true state; controllers only ever see the observation stream.
struct EnvConfig {
    UavParams uav;
    CrashBounds crash;
    NormScales norms;
    RewardConfig reward;
    int horizon_steps = 1500;
    Vec3 start{0.0, 0.0, 1.5};
    double init_noise_pos = 0.05;  // m
    double init_noise_vel = 0.05;  // m/s
    Vec3 goal_min{-2.0, -2.0, 1.0};
    Vec3 goal_max{2.0, 2.0, 2.0};
    double goal_radius = 0.1;    // m, terminates the episode
    double safety_radius = 5.0;  // m, mission success bound
    double transit_time = 0.0;   // s; 0 pins the reference at the goal

    double episode_len_s() const { return horizon_steps * uav.dt; }
    void validate() const;
};

struct StepResult {
    Observation obs;                        // raw sensor view (absolute units)
    std::array<double, kObsDim> norm_obs{}; // normalized, position relative to reference
    PrivilegedInfo priv;
    double reward = 0.0;
    bool done = false;
    bool crashed = false;
    bool reached_goal = false;
};

class Env {
public:
    explicit Env(EnvConfig cfg);

    // Starts an episode: noisy initial state, sampled goal, given attacks.
    StepResult reset(Rng& rng, std::vector<AttackSpec> attacks);
    // Fixed-goal variant used by twin replays and scripted tests.
    StepResult reset_fixed(const UavState& init, const Vec3& goal,
                           std::vector<AttackSpec> attacks);

    StepResult step(const std::array<double, kActionDim>& action);

    const EnvConfig& config() const { return cfg_; }
    const UavState& state() const { return state_; }
    const ReferenceTrajectory& trajectory() const { return traj_; }
    const std::vector<AttackSpec>& attacks() const { return attacks_; }
    int steps_taken() const { return step_count_; }
    bool done() const { return done_; }
    double time() const { return state_.t; }

private:
    StepResult make_observation(double reward_value, bool done, bool crashed, bool reached);

    EnvConfig cfg_;
    std::vector<AttackSpec> attacks_;
    UavState state_;
    ReferenceTrajectory traj_;
    std::array<double, kActionDim> prev_action_{};
    Vec3 prev_pos_{};
    int step_count_ = 0;
    bool done_ = true;
};

// A controller variant turns (normalized observation, privileged info) into
// the policy input vector. The shared PPO policy consumes that input.
struct Controller {
    virtual ~Controller() = default;
    virtual void reset() {}
    virtual std::vector<double> make_input(const std::array<double, kObsDim>& norm_obs,
                                           const PrivilegedInfo& priv) = 0;
    virtual std::size_t input_dim() const = 0;
    virtual const char* id() const = 0;
};

// Raw normalized observation, no encoder (the ablation).
struct BaselineController final : Controller {
    std::vector<double> make_input(const std::array<double, kObsDim>& norm_obs,
                                   const PrivilegedInfo&) override {
        return std::vector<double>(norm_obs.begin(), norm_obs.end());
    }
    std::size_t input_dim() const override { return kObsDim; }
    const char* id() const override { return "baseline"; }
};

// Teacher latent from <obs, privileged>; simulation only.
struct TeacherLatentController final : Controller {
    const TeacherEncoder* encoder = nullptr;
    NormScales norms;
    bool mu_only = false;

    TeacherLatentController(const TeacherEncoder& enc, const NormScales& n, bool mu)
        : encoder(&enc), norms(n), mu_only(mu) {}

    std::vector<double> make_input(const std::array<double, kObsDim>& norm_obs,
                                   const PrivilegedInfo& priv) override {
        const LatentState l = encoder->encode_eval(encode_full_state(norm_obs, priv, norms));
        return latent_for_policy(l, mu_only);
    }
    std::size_t input_dim() const override {
        return mu_only ? encoder->latent_dim() : 2 * encoder->latent_dim();
    }
    const char* id() const override { return "teacher"; }
};

// Student latent from the observation history; ignores privileged info.
struct StudentLatentController final : Controller {
    const StudentEncoder* encoder = nullptr;
    HistoryWindow window;
    bool mu_only = false;

    StudentLatentController(const StudentEncoder& enc, bool mu)
        : encoder(&enc), window(enc.history_len()), mu_only(mu) {}

    void reset() override { window.reset(); }

    std::vector<double> make_input(const std::array<double, kObsDim>& norm_obs,
                                   const PrivilegedInfo&) override {
        window.push(norm_obs);
        const LatentState l = encoder->encode_eval(window.flat());
        return latent_for_policy(l, mu_only);
    }
    std::size_t input_dim() const override {
        return mu_only ? encoder->latent_dim() : 2 * encoder->latent_dim();
    }
    const char* id() const override { return "student"; }
};

} // namespace rflight
