#include <doctest.h>

#include <cmath>

#include "rflight/eval.hpp"
#include "rflight/logio.hpp"

using namespace rflight;

namespace {

EnvConfig tiny_env() {
    EnvConfig cfg;
    cfg.horizon_steps = 300;
    cfg.start = {0.0, 0.0, 1.5};
    cfg.goal_min = {-0.5, -0.5, 1.3};
    cfg.goal_max = {0.5, 0.5, 1.7};
    cfg.init_noise_pos = 0.02;
    cfg.init_noise_vel = 0.0;
    return cfg;
}

// Policy whose mean head is a constant: zero weights, fixed bias.
PolicyNet constant_policy(std::size_t in_dim, double bias) {
    Rng rng(1);
    PolicyNet p(in_dim, {4}, -0.7, rng);
    for (auto& layer : p.body.layers) {
        layer.W.fill(0.0);
        layer.b.fill(0.0);
    }
    p.body.layers.back().b.fill(bias);
    return p;
}

} // namespace

TEST_CASE("hover policy starting at the goal succeeds with no drift") {
    EnvConfig cfg = tiny_env();
    // action 0 -> thrust_max/2 per rotor = 4.9 N total vs mg = 4.905 N:
    // a slow sink of ~4 mm over the episode, well within the 5 m ball.
    cfg.goal_min = cfg.goal_max = cfg.start;
    cfg.init_noise_pos = 0.0;
    PolicyNet policy = constant_policy(kObsDim, 0.0);
    BaselineController controller;
    const EpisodeResult r = run_episode(cfg, controller, policy, {}, 42);
    CHECK(r.outcome == Outcome::Success);
    CHECK(r.final_goal_distance < 0.5);
    CHECK_FALSE(r.drift.has_value());  // no attack ran
}

TEST_CASE("zero-thrust policy crashes through the floor within a second") {
    EnvConfig cfg = tiny_env();
    PolicyNet policy = constant_policy(kObsDim, -50.0);  // tanh -> -1 -> zero thrust
    BaselineController controller;
    const EpisodeResult r = run_episode(cfg, controller, policy, {}, 7);
    CHECK(r.outcome == Outcome::Crash);
    CHECK(r.steps.back().t < 1.0);
}

TEST_CASE("same seed twice gives a bitwise identical episode") {
    EnvConfig cfg = tiny_env();
    PolicyNet policy = constant_policy(kObsDim, 0.05);
    BaselineController c1, c2;
    Rng sampler(3);
    AttackCatalog cat;
    const AttackSpec spec = sample_attack(sampler, cat, {SensorId::Gps}, 0.0,
                                          cfg.episode_len_s(), cfg.uav.dt);
    const EpisodeResult a = run_episode(cfg, c1, policy, {spec}, 99);
    const EpisodeResult b = run_episode(cfg, c2, policy, {spec}, 99);
    CHECK(episodes_bit_identical(a, b));
}

TEST_CASE("controller and policy dimensions must agree") {
    EnvConfig cfg = tiny_env();
    PolicyNet policy = constant_policy(kObsDim + 3, 0.0);
    BaselineController controller;
    CHECK_THROWS_AS(run_episode(cfg, controller, policy, {}, 1), ConfigError);
}

TEST_CASE("state drift") {
    SUBCASE("attack-ignoring controller: attacked and twin trajectories identical, drift 0") {
        EnvConfig cfg = tiny_env();
        PolicyNet policy = constant_policy(kObsDim, 0.0);
        // Constant policy ignores observations entirely, so the attacked
        // episode's true trajectory equals the twin's.
        AttackSpec spec;
        spec.sensor = SensorId::Gps;
        spec.pattern = BiasPattern::Drift;
        spec.magnitude = 10.0;
        spec.start_time = 0.1;
        spec.duration = 5.0;
        spec.channels = {0};
        spec.signs = {1.0};
        BaselineController controller;
        const EpisodeResult r = run_episode_with_drift(cfg, controller, policy, {spec}, 11);
        REQUIRE(r.drift.has_value());
        CHECK(r.drift->mean == 0.0);
        CHECK(r.drift->stddev == 0.0);
    }
    SUBCASE("constant 2 m offset gives drift 2 +- 0") {
        EpisodeResult attacked, twin;
        AttackSpec spec;
        spec.sensor = SensorId::Gps;
        spec.pattern = BiasPattern::Drift;
        spec.magnitude = 2.0;
        spec.start_time = 0.0;
        spec.duration = 10.0;
        spec.channels = {0};
        spec.signs = {1.0};
        attacked.attacks = {spec};
        for (int i = 0; i < 50; ++i) {
            StepLog s;
            s.t = 0.1 * (i + 1);
            s.state.pos = {2.0, 0.0, 1.0};
            StepLog tw = s;
            tw.state.pos = {0.0, 0.0, 1.0};
            attacked.steps.push_back(s);
            twin.steps.push_back(tw);
        }
        const auto d = state_drift(attacked, twin, SensorId::Gps);
        REQUIRE(d.has_value());
        CHECK(d->mean == 2.0);
        CHECK(d->stddev == 0.0);
        CHECK(d->steps == 50);
    }
    SUBCASE("sawtooth offset matches a hand-computed mean") {
        EpisodeResult attacked, twin;
        AttackSpec spec;
        spec.sensor = SensorId::Accel;
        spec.pattern = BiasPattern::Oscillatory;
        spec.magnitude = 1.0;
        spec.start_time = 0.0;
        spec.duration = 100.0;
        spec.channels = {3};
        spec.signs = {1.0};
        attacked.attacks = {spec};
        double acc = 0.0;
        const int n = 40;
        for (int i = 0; i < n; ++i) {
            const double saw = (i % 4) * 0.5;  // 0, .5, 1, 1.5 repeating
            StepLog s;
            s.t = 0.05 * (i + 1);
            s.state.vel = {saw, 0.0, 0.0};
            StepLog tw = s;
            tw.state.vel = {0.0, 0.0, 0.0};
            attacked.steps.push_back(s);
            twin.steps.push_back(tw);
            acc += saw;
        }
        const auto d = state_drift(attacked, twin, SensorId::Accel);
        REQUIRE(d.has_value());
        CHECK(std::abs(d->mean - acc / n) < 1e-9);
    }
    SUBCASE("gyro drift is reported in degrees") {
        EpisodeResult attacked, twin;
        AttackSpec spec;
        spec.sensor = SensorId::Gyro;
        spec.pattern = BiasPattern::Oscillatory;
        spec.magnitude = 0.5;
        spec.start_time = 0.0;
        spec.duration = 10.0;
        spec.channels = {6};
        spec.signs = {1.0};
        attacked.attacks = {spec};
        StepLog s;
        s.t = 1.0;
        s.state.ang = {0.017453292519943295, 0.0, 0.0};  // 1 degree of roll
        StepLog tw = s;
        tw.state.ang = {0.0, 0.0, 0.0};
        attacked.steps.push_back(s);
        twin.steps.push_back(tw);
        const auto d = state_drift(attacked, twin, SensorId::Gyro);
        REQUIRE(d.has_value());
        CHECK(d->mean == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("aggregate") {
    auto ep = [](int id, Outcome o, double drift_mean = -1.0) {
        EpisodeResult r;
        r.episode_id = id;
        r.outcome = o;
        if (drift_mean >= 0.0) {
            DriftStats d;
            d.mean = drift_mean;
            r.drift = d;
        }
        return r;
    };

    SUBCASE("ten successes out of ten") {
        std::vector<EpisodeResult> rs;
        for (int i = 0; i < 10; ++i) rs.push_back(ep(i, Outcome::Success));
        const MetricsSummary m = aggregate(rs, "student", "gps");
        CHECK(m.success_rate == 1.0);
        CHECK(m.crash_rate == 0.0);
        CHECK(m.episodes == 10);
    }
    SUBCASE("mixed outcomes: proportions sum to one") {
        std::vector<EpisodeResult> rs;
        int id = 0;
        for (int i = 0; i < 3; ++i) rs.push_back(ep(id++, Outcome::Success, 0.5));
        for (int i = 0; i < 5; ++i) rs.push_back(ep(id++, Outcome::Failure, 1.5));
        for (int i = 0; i < 2; ++i) rs.push_back(ep(id++, Outcome::Crash, 3.0));
        const MetricsSummary m = aggregate(rs, "baseline", "gps");
        CHECK(m.success_rate == doctest::Approx(0.3));
        CHECK(m.failure_rate == doctest::Approx(0.5));
        CHECK(m.crash_rate == doctest::Approx(0.2));
        CHECK(m.success_rate + m.failure_rate + m.crash_rate == doctest::Approx(1.0));
        REQUIRE(m.drift_mean.has_value());
        CHECK(*m.drift_mean == doctest::Approx((3 * 0.5 + 5 * 1.5 + 2 * 3.0) / 10.0));
    }
    SUBCASE("order independence via episode-id sort") {
        std::vector<EpisodeResult> rs{ep(2, Outcome::Crash, 1.0), ep(0, Outcome::Success, 2.0),
                                      ep(1, Outcome::Failure, 3.0)};
        const MetricsSummary a = aggregate(rs, "c", "s");
        std::swap(rs[0], rs[2]);
        const MetricsSummary b = aggregate(rs, "c", "s");
        CHECK(a.success_rate == b.success_rate);
        CHECK(*a.drift_mean == *b.drift_mean);
        CHECK(a.median_drift == b.median_drift);
    }
    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS(aggregate({}, "c", "s"), NumericError);
    }
}

TEST_CASE("evaluate_scenario runs episodes x seeds and parallel matches serial") {
    EnvConfig cfg = tiny_env();
    cfg.horizon_steps = 150;
    PolicyNet policy = constant_policy(kObsDim, 0.02);
    AttackCatalog cat;
    AttackScenario sc;
    sc.id = "gps";
    sc.sensors = {SensorId::Gps};
    EvalOptions opt;
    opt.episodes = 6;
    opt.seeds = 2;
    opt.parallelism = 1;
    const ControllerFactory factory = [] { return std::make_unique<BaselineController>(); };

    std::vector<EpisodeResult> serial_eps;
    const MetricsSummary serial = evaluate_scenario(cfg, cat, sc, factory, policy, opt, 5,
                                                    &serial_eps);
    CHECK(serial.episodes == 12);
    CHECK(serial.success_rate + serial.failure_rate + serial.crash_rate ==
          doctest::Approx(1.0));

    opt.parallelism = 4;
    std::vector<EpisodeResult> par_eps;
    const MetricsSummary par = evaluate_scenario(cfg, cat, sc, factory, policy, opt, 5, &par_eps);
    REQUIRE(par_eps.size() == serial_eps.size());
    for (std::size_t i = 0; i < par_eps.size(); ++i)
        CHECK(episodes_bit_identical(par_eps[i], serial_eps[i]));
    CHECK(par.success_rate == serial.success_rate);
}

TEST_CASE("zero-shot protocol rejects overlapping train/test sensors") {
    EnvConfig cfg = tiny_env();
    PolicyNet policy = constant_policy(kObsDim, 0.0);
    AttackCatalog cat;
    const ControllerFactory factory = [] { return std::make_unique<BaselineController>(); };
    EvalOptions opt;
    opt.episodes = 1;
    opt.seeds = 1;

    AttackScenario gyro;
    gyro.id = "gyro";
    gyro.sensors = {SensorId::Gyro};
    AttackScenario combo;
    combo.id = "gyro+accel";
    combo.sensors = {SensorId::Gyro, SensorId::Accel};

    CHECK_THROWS_AS(zero_shot_eval(cfg, cat, {SensorId::Gyro}, {gyro}, factory, policy, opt, 1),
                    ConfigError);

    const auto res =
        zero_shot_eval(cfg, cat, {SensorId::Gps}, {gyro, combo}, factory, policy, opt, 1);
    REQUIRE(res.size() == 2);
    CHECK(res[0].scenario_id == "gyro");
    CHECK(res[1].scenario_id == "gyro+accel");
    CHECK(res[0].episodes == 1);
}

TEST_CASE("multi-sensor scenario biases both sensor groups") {
    EnvConfig cfg = tiny_env();
    cfg.horizon_steps = 100;
    PolicyNet policy = constant_policy(kObsDim, 0.0);
    AttackCatalog cat;
    cat.start_max_frac = 0.05;
    Rng rng(17);
    std::vector<AttackSpec> specs;
    for (SensorId s : {SensorId::Gyro, SensorId::Accel}) {
        AttackSpec spec = sample_attack(rng, cat, {s}, 0.0, cfg.episode_len_s(), cfg.uav.dt);
        spec.duration = cfg.episode_len_s();
        specs.push_back(spec);
    }
    BaselineController controller;
    const EpisodeResult r = run_episode(cfg, controller, policy, specs, 23);
    bool saw_gyro_bias = false, saw_accel_bias = false;
    for (const auto& st : r.steps) {
        const Observation truth = Observation::from_state(st.state);
        for (int c : specs[0].channels)
            if (st.obs.v[static_cast<std::size_t>(c)] != truth.v[static_cast<std::size_t>(c)])
                saw_gyro_bias = true;
        for (int c : specs[1].channels)
            if (st.obs.v[static_cast<std::size_t>(c)] != truth.v[static_cast<std::size_t>(c)])
                saw_accel_bias = true;
    }
    CHECK(saw_gyro_bias);
    CHECK(saw_accel_bias);
}
