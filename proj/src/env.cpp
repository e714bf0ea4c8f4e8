#include "rflight/env.hpp"

#include <cmath>

namespace rflight {

void EnvConfig::validate() const {
    uav.validate();
    reward.validate();
    if (horizon_steps <= 0) throw ConfigError("sim.horizon_steps must be positive");
    if (goal_radius <= 0.0) throw ConfigError("sim.goal_radius must be positive");
    if (safety_radius < goal_radius)
        throw ConfigError("sim.safety_radius must be >= sim.goal_radius");
    for (int i = 0; i < 3; ++i)
        if (goal_min[i] > goal_max[i]) throw ConfigError("sim: goal box is inverted");
    if (init_noise_pos < 0.0 || init_noise_vel < 0.0)
        throw ConfigError("sim: init noise must be >= 0");
    if (transit_time < 0.0) throw ConfigError("sim.transit_time must be >= 0");
}

Env::Env(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

StepResult Env::reset(Rng& rng, std::vector<AttackSpec> attacks) {
    Vec3 goal;
    for (int i = 0; i < 3; ++i) goal[i] = rng.uniform(cfg_.goal_min[i], cfg_.goal_max[i]);
    UavState init;
    for (int i = 0; i < 3; ++i) {
        init.pos[i] = cfg_.start[i] + rng.uniform(-cfg_.init_noise_pos, cfg_.init_noise_pos);
        init.vel[i] = rng.uniform(-cfg_.init_noise_vel, cfg_.init_noise_vel);
    }
    return reset_fixed(init, goal, std::move(attacks));
}

StepResult Env::reset_fixed(const UavState& init, const Vec3& goal,
                            std::vector<AttackSpec> attacks) {
    state_ = init;
    state_.t = 0.0;
    attacks_ = std::move(attacks);
    traj_ = cfg_.transit_time > 0.0
                ? ReferenceTrajectory::transit(init.pos, goal, cfg_.transit_time,
                                               cfg_.goal_radius, cfg_.safety_radius)
                : ReferenceTrajectory::hold_at(goal, cfg_.goal_radius, cfg_.safety_radius);
    prev_action_.fill(0.0);
    prev_pos_ = state_.pos;
    step_count_ = 0;
    done_ = false;
    return make_observation(0.0, false, false, false);
}

StepResult Env::step(const std::array<double, kActionDim>& action) {
    if (done_) throw NumericError("env: step() after episode end");
    const Thrusts u = clamp_action(action, cfg_.uav);
    prev_pos_ = state_.pos;
    state_ = step_dynamics(state_, u, cfg_.uav);
    ++step_count_;

    const double tilt = std::sqrt(state_.ang[0] * state_.ang[0] + state_.ang[1] * state_.ang[1]);
    const Vec3 goal_t = reference_position(traj_, state_.t);
    double r = reward(state_.pos, prev_pos_, goal_t, tilt, action, prev_action_, cfg_.reward);
    prev_action_ = action;

    const Vec3 to_goal{state_.pos[0] - traj_.goal[0], state_.pos[1] - traj_.goal[1],
                       state_.pos[2] - traj_.goal[2]};
    const bool reached = norm3(to_goal) <= cfg_.goal_radius;
    const bool crashed = detect_crash(state_, cfg_.crash);
    if (reached && !crashed) r += cfg_.reward.r_goal;  // terminal bonus
    const bool horizon = step_count_ >= cfg_.horizon_steps;
    done_ = reached || crashed || horizon;
    return make_observation(r, done_, crashed, reached && !crashed);
}

StepResult Env::make_observation(double reward_value, bool done, bool crashed, bool reached) {
    StepResult out;
    out.obs = observe(state_, attacks_, state_.t);
    out.priv = privileged_info(attacks_, state_.t);
    out.norm_obs = normalize_obs(out.obs, reference_position(traj_, state_.t), cfg_.norms);
    out.reward = reward_value;
    out.done = done;
    out.crashed = crashed;
    out.reached_goal = reached;
    return out;
}

} // namespace rflight
