#include "rflight/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <thread>

namespace rflight {

const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Success: return "success";
        case Outcome::Failure: return "failure";
        case Outcome::Crash: return "crash";
    }
    return "?";
}

EpisodeResult run_episode(const EnvConfig& env_cfg, Controller& controller, PolicyNet& policy,
                          const std::vector<AttackSpec>& attacks, std::uint64_t seed,
                          bool deterministic_actions) {
    if (controller.input_dim() != policy.input_dim)
        throw ConfigError("eval: controller input dim " + std::to_string(controller.input_dim()) +
                          " does not match policy input dim " + std::to_string(policy.input_dim));

    Env env(env_cfg);
    Rng root(seed);
    Rng env_rng = root.child(1);
    Rng act_rng = root.child(2);

    EpisodeResult res;
    res.seed = seed;
    res.controller_id = controller.id();
    res.attacks = attacks;

    StepResult sr = env.reset(env_rng, attacks);
    controller.reset();
    while (!sr.done) {
        const std::vector<double> input = controller.make_input(sr.norm_obs, sr.priv);
        const ActResult ar = act(policy, input, act_rng, deterministic_actions);
        sr = env.step(ar.action);

        StepLog log;
        log.t = env.time();
        log.state = env.state();
        log.obs = sr.obs;
        log.ref = reference_position(env.trajectory(), env.time());
        log.action = ar.action;
        log.reward = sr.reward;
        log.attack_active = sr.priv.sensor != SensorId::None;
        log.safe = safety_verdict(env.state(), env.trajectory(), env.time());
        res.steps.push_back(log);
        res.total_reward += sr.reward;
    }

    const Vec3 d{env.state().pos[0] - env.trajectory().goal[0],
                 env.state().pos[1] - env.trajectory().goal[1],
                 env.state().pos[2] - env.trajectory().goal[2]};
    res.final_goal_distance = norm3(d);
    if (sr.crashed)
        res.outcome = Outcome::Crash;
    else if (res.final_goal_distance <= env_cfg.safety_radius)
        res.outcome = Outcome::Success;
    else
        res.outcome = Outcome::Failure;
    return res;
}

namespace {

// Deviation between two true states over the attacked sensor's channels.
double channel_deviation(const UavState& a, const UavState& b, SensorId sensor) {
    constexpr double kRad2Deg = 57.29577951308232;
    switch (sensor) {
        case SensorId::Gps:
        case SensorId::OptFlow: {
            const Vec3 d{a.pos[0] - b.pos[0], a.pos[1] - b.pos[1], a.pos[2] - b.pos[2]};
            return norm3(d);
        }
        case SensorId::Accel: {
            const Vec3 d{a.vel[0] - b.vel[0], a.vel[1] - b.vel[1], a.vel[2] - b.vel[2]};
            return norm3(d);
        }
        case SensorId::Gyro: {
            const double dr = a.ang[0] - b.ang[0], dp = a.ang[1] - b.ang[1];
            return std::sqrt(dr * dr + dp * dp) * kRad2Deg;
        }
        case SensorId::Mag:
            return std::abs(a.ang[2] - b.ang[2]) * kRad2Deg;
        case SensorId::None:
            break;
    }
    return 0.0;
}

} // namespace

std::optional<DriftStats> state_drift(const EpisodeResult& attacked, const EpisodeResult& twin,
                                      SensorId sensor) {
    const AttackSpec* spec = nullptr;
    for (const auto& a : attacked.attacks)
        if (a.sensor == sensor) spec = &a;
    if (!spec) return std::nullopt;

    const std::size_t n = std::min(attacked.steps.size(), twin.steps.size());
    DriftStats d;
    d.sensor = sensor;
    std::vector<double> devs;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = attacked.steps[i].t;
        if (!spec->active_at(t)) continue;
        devs.push_back(channel_deviation(attacked.steps[i].state, twin.steps[i].state, sensor));
    }
    if (devs.empty()) return std::nullopt;
    d.steps = static_cast<int>(devs.size());
    double s = 0.0;
    for (double v : devs) s += v;
    d.mean = s / static_cast<double>(devs.size());
    double var = 0.0;
    for (double v : devs) var += (v - d.mean) * (v - d.mean);
    d.stddev = std::sqrt(var / static_cast<double>(devs.size()));
    return d;
}

EpisodeResult run_episode_with_drift(const EnvConfig& env_cfg, Controller& controller,
                                     PolicyNet& policy, const std::vector<AttackSpec>& attacks,
                                     std::uint64_t seed, bool deterministic_actions) {
    EpisodeResult res = run_episode(env_cfg, controller, policy, attacks, seed,
                                    deterministic_actions);
    if (!attacks.empty()) {
        EpisodeResult twin =
            run_episode(env_cfg, controller, policy, {}, seed, deterministic_actions);
        res.drift = state_drift(res, twin, attacks.front().sensor);
    }
    return res;
}

MetricsSummary aggregate(std::vector<EpisodeResult> results, const std::string& controller_id,
                         const std::string& scenario_id) {
    if (results.empty()) throw NumericError("aggregate: no episode results");
    std::sort(results.begin(), results.end(),
              [](const EpisodeResult& a, const EpisodeResult& b) {
                  return a.episode_id < b.episode_id;
              });
    MetricsSummary m;
    m.controller_id = controller_id;
    m.scenario_id = scenario_id;
    m.episodes = static_cast<int>(results.size());
    int success = 0, failure = 0, crash = 0;
    std::vector<double> drifts;
    double reward_sum = 0.0;
    for (const auto& r : results) {
        switch (r.outcome) {
            case Outcome::Success: ++success; break;
            case Outcome::Failure: ++failure; break;
            case Outcome::Crash: ++crash; break;
        }
        reward_sum += r.total_reward;
        if (r.drift) drifts.push_back(r.drift->mean);
    }
    const double n = static_cast<double>(m.episodes);
    m.success_rate = success / n;
    m.failure_rate = failure / n;
    m.crash_rate = crash / n;
    m.mean_reward = reward_sum / n;
    if (!drifts.empty()) {
        double s = 0.0;
        for (double v : drifts) s += v;
        const double mean = s / static_cast<double>(drifts.size());
        double var = 0.0;
        for (double v : drifts) var += (v - mean) * (v - mean);
        m.drift_mean = mean;
        m.drift_std = std::sqrt(var / static_cast<double>(drifts.size()));
        std::sort(drifts.begin(), drifts.end());
        const std::size_t k = drifts.size() / 2;
        m.median_drift = drifts.size() % 2 ? drifts[k] : 0.5 * (drifts[k - 1] + drifts[k]);
    }
    return m;
}

namespace {

std::vector<AttackSpec> sample_scenario_attacks(Rng& rng, const AttackCatalog& catalog,
                                                const AttackScenario& scenario,
                                                const EnvConfig& env_cfg) {
    std::vector<AttackSpec> specs;
    for (SensorId s : scenario.sensors) {
        AttackSpec spec = sample_attack(rng, catalog, {s}, 0.0, env_cfg.episode_len_s(),
                                        env_cfg.uav.dt);
        specs.push_back(spec);
    }
    return specs;
}

} // namespace

MetricsSummary evaluate_scenario(const EnvConfig& env_cfg, const AttackCatalog& catalog,
                                 const AttackScenario& scenario,
                                 const ControllerFactory& controller_factory, PolicyNet& policy,
                                 const EvalOptions& options, std::uint64_t base_seed,
                                 std::vector<EpisodeResult>* episodes_out) {
    const int total = options.episodes * options.seeds;
    std::vector<EpisodeResult> results(static_cast<std::size_t>(total));

    auto run_one = [&](int idx) {
        const int seed_idx = idx / options.episodes;
        const std::uint64_t ep_seed =
            splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(idx) + 7919) ^
                       splitmix64(static_cast<std::uint64_t>(seed_idx)));
        Rng attack_rng(splitmix64(ep_seed ^ 0x5ca1ab1eULL));
        const auto specs = sample_scenario_attacks(attack_rng, catalog, scenario, env_cfg);
        auto controller = controller_factory();
        EpisodeResult r = run_episode_with_drift(env_cfg, *controller, policy, specs, ep_seed,
                                                 options.deterministic_actions);
        r.episode_id = idx;
        results[static_cast<std::size_t>(idx)] = std::move(r);
    };

    const int workers = std::max(1, options.parallelism);
    if (workers == 1) {
        for (int i = 0; i < total; ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < total; i = next.fetch_add(1)) run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    std::string controller_id = results.empty() ? "" : results.front().controller_id;
    if (episodes_out) *episodes_out = results;
    return aggregate(std::move(results), controller_id, scenario.id);
}

std::vector<MetricsSummary> zero_shot_eval(const EnvConfig& env_cfg, const AttackCatalog& catalog,
                                           const std::vector<SensorId>& trained_on,
                                           const std::vector<AttackScenario>& test_scenarios,
                                           const ControllerFactory& controller_factory,
                                           PolicyNet& policy, const EvalOptions& options,
                                           std::uint64_t base_seed) {
    for (const auto& sc : test_scenarios)
        for (SensorId s : sc.sensors)
            for (SensorId t : trained_on)
                if (s == t)
                    throw ConfigError("zero-shot: scenario '" + sc.id + "' overlaps training sensor '" +
                                      sensor_name(s) + "'");
    std::vector<MetricsSummary> out;
    std::uint64_t salt = 0;
    for (const auto& sc : test_scenarios) {
        out.push_back(evaluate_scenario(env_cfg, catalog, sc, controller_factory, policy, options,
                                        splitmix64(base_seed ^ ++salt)));
    }
    return out;
}

} // namespace rflight
