#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rflight/env.hpp"

namespace rflight {

enum class Outcome { Success, Failure, Crash };
const char* outcome_name(Outcome o);

struct StepLog {
    double t = 0.0;
    UavState state;  // true state
    Observation obs;
    Vec3 ref{};
    std::array<double, kActionDim> action{};
    double reward = 0.0;
    bool attack_active = false;
    bool safe = true;
};

struct DriftStats {
    SensorId sensor = SensorId::None;
    double mean = 0.0;
    double stddev = 0.0;
    int steps = 0;
};

struct EpisodeResult {
    int episode_id = 0;
    std::uint64_t seed = 0;
    std::string controller_id;
    std::vector<AttackSpec> attacks;
    std::vector<StepLog> steps;
    Outcome outcome = Outcome::Failure;
    double final_goal_distance = 0.0;  // m
    double total_reward = 0.0;
    std::optional<DriftStats> drift;  // absent when no attack ran
};

// Closed-loop episode: observe -> controller input -> policy -> clamp ->
// dynamics, until goal / crash / horizon. Deterministic given the seed.
EpisodeResult run_episode(const EnvConfig& env_cfg, Controller& controller, PolicyNet& policy,
                          const std::vector<AttackSpec>& attacks, std::uint64_t seed,
                          bool deterministic_actions = true);

// Mean +- std of the per-step deviation between the attacked episode and its
// twin over the attack window, in the attacked sensor's channel group
// (position: m, velocity: m/s, attitude: deg). Absent when no attack ran.
std::optional<DriftStats> state_drift(const EpisodeResult& attacked, const EpisodeResult& twin,
                                      SensorId sensor);

// Runs the attacked episode plus an attack-free twin with the same seed and
// attaches the drift statistics.
EpisodeResult run_episode_with_drift(const EnvConfig& env_cfg, Controller& controller,
                                     PolicyNet& policy, const std::vector<AttackSpec>& attacks,
                                     std::uint64_t seed, bool deterministic_actions = true);

struct MetricsSummary {
    std::string controller_id;
    std::string scenario_id;
    int episodes = 0;
    double success_rate = 0.0;
    double failure_rate = 0.0;
    double crash_rate = 0.0;
    std::optional<double> drift_mean;  // across episodes with drift
    std::optional<double> drift_std;
    double mean_reward = 0.0;
    double median_drift = 0.0;
};

// Pure fold over episode results, ordered by episode id.
MetricsSummary aggregate(std::vector<EpisodeResult> results, const std::string& controller_id,
                         const std::string& scenario_id);

// A named attack scenario: the sensors attacked during each episode
// (empty = attack-free). Two sensors give concurrent independent specs.
struct AttackScenario {
    std::string id;
    std::vector<SensorId> sensors;
};

struct EvalOptions {
    int episodes = 100;
    int seeds = 5;
    bool deterministic_actions = true;
    int parallelism = 1;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

// Episodes x seeds evaluation of one controller under one scenario; attacks
// sampled per episode from the catalog restricted to the scenario sensors.
// Episodes run in parallel when options.parallelism > 1; aggregation order is
// fixed by episode id either way.
MetricsSummary evaluate_scenario(const EnvConfig& env_cfg, const AttackCatalog& catalog,
                                 const AttackScenario& scenario,
                                 const ControllerFactory& controller_factory, PolicyNet& policy,
                                 const EvalOptions& options, std::uint64_t base_seed,
                                 std::vector<EpisodeResult>* episodes_out = nullptr);

// Zero-shot protocol: evaluates on scenarios whose sensors are disjoint from
// the training set; overlap is a configuration error.
std::vector<MetricsSummary> zero_shot_eval(const EnvConfig& env_cfg, const AttackCatalog& catalog,
                                           const std::vector<SensorId>& trained_on,
                                           const std::vector<AttackScenario>& test_scenarios,
                                           const ControllerFactory& controller_factory,
                                           PolicyNet& policy, const EvalOptions& options,
                                           std::uint64_t base_seed);

} // namespace rflight
