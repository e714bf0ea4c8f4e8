#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rflight/env.hpp"

namespace rflight {

struct TrainConfig {
    EnvConfig env;
    EncoderConfig enc;
    PpoConfig ppo;
    AttackCatalog catalog;
    std::vector<SensorId> allowed_sensors;
    double p_none = 0.2;
    double teacher_lr = 3e-4;
    int teacher_epochs = 1;  // per PPO iteration
    int teacher_minibatch = 256;
    int checkpoint_every = 10;  // iterations

    void validate() const;
};

// One learning-curve row, appended per PPO iteration.
struct CurvePoint {
    long timestep = 0;
    double mean_episode_reward = 0.0;
    double std_episode_reward = 0.0;
    double clip_fraction = 0.0;
    double teacher_loss = 0.0;
    double teacher_recon = 0.0;
    double teacher_kl = 0.0;
    double teacher_cls = 0.0;
    double teacher_accuracy = 0.0;  // classifier accuracy on rollout data
};

struct Stage1Artifacts {
    std::optional<TeacherEncoder> teacher;  // absent for the baseline run
    PolicyNet policy;
    ValueNet value;
    std::vector<CurvePoint> curve;
    long timesteps = 0;
};

// Called after each iteration with the current artifacts; `final` marks the
// last call (normal completion or pre-abort snapshot).
using IterationSink =
    std::function<void(const Stage1Artifacts&, const CurvePoint&, bool final)>;

// Joint stage-1 loop: rollout collection with the teacher-latent (or raw
// observation) input, PPO updates on the policy/value pair, and supervised
// teacher updates on the collected full-state batches. Aborts with
// NumericError on a non-finite loss after sinking the last good snapshot.
Stage1Artifacts train_stage1(const TrainConfig& cfg, std::uint64_t seed, bool with_teacher,
                             const IterationSink& sink = nullptr);

// Mean/std episodic reward of a controller variant over eval episodes
// (deterministic actions, fresh attacks per episode).
struct EvalReward {
    double mean = 0.0;
    double stddev = 0.0;
    int episodes = 0;
};
EvalReward evaluate_reward(const TrainConfig& cfg, Controller& controller, PolicyNet& policy,
                           int episodes, std::uint64_t seed);

} // namespace rflight
