#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "rflight/policy.hpp"

using namespace rflight;

TEST_CASE("reward closed forms") {
    RewardConfig cfg;  // r_goal 10, lambda 0.5, alpha 0.05, beta 0.5, gamma 0.1

    SUBCASE("at the goal, stationary, level, constant action: exactly r_goal") {
        const Vec3 g{1.0, 2.0, 3.0};
        const std::array<double, 4> a{0.1, 0.2, 0.3, 0.4};
        CHECK(reward(g, g, g, 0.0, a, a, cfg) == cfg.r_goal);
    }
    SUBCASE("distance 1/lambda with no penalties: r_goal / e") {
        const Vec3 g{0.0, 0.0, 0.0};
        const Vec3 p{1.0 / cfg.lambda_goal, 0.0, 0.0};
        const std::array<double, 4> a{};
        const double r = reward(p, p, g, 0.0, a, a, cfg);
        CHECK(std::abs(r - cfg.r_goal * std::exp(-1.0)) < 1e-12);
    }
    SUBCASE("all four terms vs an independently coded evaluation") {
        Rng rng(41);
        for (int i = 0; i < 100; ++i) {
            const Vec3 p{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, 3.0)};
            const Vec3 pp{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, 3.0)};
            const Vec3 g{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, 3.0)};
            const double tilt = rng.uniform(0.0, 1.0);
            std::array<double, 4> a, ap;
            for (int k = 0; k < 4; ++k) {
                a[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
                ap[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
            }
            // hand-expanded arithmetic, no shared helpers
            const double dg = std::sqrt((p[0] - g[0]) * (p[0] - g[0]) +
                                        (p[1] - g[1]) * (p[1] - g[1]) +
                                        (p[2] - g[2]) * (p[2] - g[2]));
            const double dp = std::sqrt((p[0] - pp[0]) * (p[0] - pp[0]) +
                                        (p[1] - pp[1]) * (p[1] - pp[1]) +
                                        (p[2] - pp[2]) * (p[2] - pp[2]));
            double da2 = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double d = a[static_cast<std::size_t>(k)] - ap[static_cast<std::size_t>(k)];
                da2 += d * d;
            }
            const double expected = cfg.r_goal * std::exp(-cfg.lambda_goal * dg) -
                                    cfg.alpha_path * dp - cfg.beta_tilt * tilt -
                                    cfg.gamma_smooth * da2;
            CHECK(std::abs(reward(p, pp, g, tilt, a, ap, cfg) - expected) < 1e-12);
        }
    }
    SUBCASE("maximized over position exactly at the goal") {
        Rng rng(43);
        const Vec3 g{0.5, -0.5, 1.0};
        const std::array<double, 4> a{};
        const double at_goal = reward(g, g, g, 0.0, a, a, cfg);
        for (int i = 0; i < 50; ++i) {
            Vec3 p{g[0] + rng.uniform(-2.0, 2.0), g[1] + rng.uniform(-2.0, 2.0),
                   g[2] + rng.uniform(-2.0, 2.0)};
            if (p[0] == g[0] && p[1] == g[1] && p[2] == g[2]) continue;
            CHECK(reward(p, p, g, 0.0, a, a, cfg) < at_goal);
        }
    }
    SUBCASE("negative coefficients rejected") {
        RewardConfig bad;
        bad.alpha_path = -0.1;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("act") {
    Rng rng(5);
    PolicyNet policy(6, {16, 16}, -0.5, rng);

    SUBCASE("deterministic mode repeats exactly") {
        const std::vector<double> in(6, 0.3);
        Rng r1(1), r2(1);
        const ActResult a = act(policy, in, r1, true);
        const ActResult b = act(policy, in, r2, true);
        for (int i = 0; i < kActionDim; ++i)
            CHECK(a.action[static_cast<std::size_t>(i)] == b.action[static_cast<std::size_t>(i)]);
    }
    SUBCASE("actions always inside [-1,1]^4") {
        Rng r(2);
        const std::vector<double> in(6, -0.7);
        for (int i = 0; i < 100000; ++i) {
            const ActResult a = act(policy, in, r, false);
            for (double v : a.action) {
                CHECK(v >= -1.0);
                CHECK(v <= 1.0);
            }
        }
    }
    SUBCASE("log-prob agrees with a Monte-Carlo density estimate (1-D reduction)") {
        // Histogram the first action dimension around a reference point and
        // compare against exp of that dimension's log-density term.
        Rng r(3);
        const std::vector<double> in(6, 0.1);
        const ActResult ref = act(policy, in, r, true);  // a0 = tanh(mean0)
        const double a0 = ref.action[0];

        const double halfwidth = 0.004;
        const int n = 1000000;
        int hits = 0;
        for (int i = 0; i < n; ++i) {
            const ActResult s = act(policy, in, r, false);
            if (std::abs(s.action[0] - a0) <= halfwidth) ++hits;
        }
        const double density_mc = hits / (2.0 * halfwidth * n);

        // per-dimension analytic density at g0 = mean0 (tanh correction included)
        const double lp0 = [&] {
            const double sigma = std::exp(policy.log_std[0]);
            const double gauss = -std::log(sigma) - 0.5 * std::log(2.0 * 3.141592653589793);
            const double squash = -std::log(1.0 - a0 * a0 + 1e-8);
            return gauss + squash;
        }();
        const double density_formula = std::exp(lp0);
        CHECK(std::abs(density_mc - density_formula) / density_formula < 0.01);
    }
    SUBCASE("total log-prob equals the sum of per-dimension terms") {
        Rng r(7);
        const std::vector<double> in(6, 0.2);
        const ActResult s = act(policy, in, r, false);
        const double again = action_log_prob(policy, in, s.presquash);
        CHECK(std::abs(s.log_prob - again) < 1e-12);
    }
}

TEST_CASE("compute_gae") {
    SUBCASE("all zero rewards and values give zero advantages") {
        RolloutBuffer buf(2);
        ActResult ar;
        for (int i = 0; i < 10; ++i) buf.push({0.0, 0.0}, ar, 0.0, 0.0, i == 9);
        compute_gae(buf, 0.99, 0.95);
        for (double a : buf.advantages) CHECK(a == 0.0);
    }
    SUBCASE("single-step episode: advantage = r - V(s)") {
        RolloutBuffer buf(1);
        ActResult ar;
        buf.push({0.0}, ar, 2.5, 0.7, true);
        compute_gae(buf, 0.99, 0.95);
        CHECK(buf.advantages[0] == doctest::Approx(2.5 - 0.7));
        CHECK(buf.returns[0] == doctest::Approx(2.5));
    }
    SUBCASE("empty buffer is an error") {
        RolloutBuffer buf(1);
        CHECK_THROWS_AS(compute_gae(buf, 0.99, 0.95), NumericError);
    }
    SUBCASE("matches the O(T^2) definition on random buffers") {
        Rng rng(19);
        for (int trial = 0; trial < 10; ++trial) {
            RolloutBuffer buf(1);
            const int T = 50;
            ActResult ar;
            for (int i = 0; i < T; ++i) {
                const bool done = rng.bernoulli(0.08);
                buf.push({0.0}, ar, rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), done);
            }
            buf.last_value = rng.uniform(-1.0, 1.0);
            compute_gae(buf, 0.99, 0.95);
            const auto brute = oracle::gae_bruteforce(buf.rewards, buf.values, buf.dones,
                                                      buf.last_value, 0.99, 0.95);
            for (int i = 0; i < T; ++i)
                CHECK(std::abs(buf.advantages[static_cast<std::size_t>(i)] -
                               brute[static_cast<std::size_t>(i)]) < 1e-10);
        }
    }
}

TEST_CASE("advantage normalization") {
    Rng rng(23);
    std::vector<double> adv(257);
    for (double& a : adv) a = rng.uniform(-5.0, 3.0);
    normalize_advantages(adv);
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(adv.size());
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(adv.size());
    CHECK(std::abs(mean) < 1e-8);
    CHECK(std::abs(var - 1.0) < 1e-6);
}

TEST_CASE("ppo surrogate identities") {
    Tape t;
    SUBCASE("ratio identically 1 gives the mean advantage") {
        Tensor ones(static_cast<std::size_t>(4), static_cast<std::size_t>(1));
        ones.fill(1.0);
        Tensor adv = Tensor(static_cast<std::size_t>(4), static_cast<std::size_t>(1));
        adv.at(0, 0) = 1.0;
        adv.at(1, 0) = -2.0;
        adv.at(2, 0) = 0.5;
        adv.at(3, 0) = 4.5;
        const double s = t.scalar(ppo_surrogate(t, t.input(ones), t.input(adv), 0.2));
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));  // mean of adv
    }
    SUBCASE("ratios beyond the clip band are held at the band edge") {
        Tensor ratio(static_cast<std::size_t>(2), static_cast<std::size_t>(1));
        ratio.at(0, 0) = 2.0;   // would over-reward positive advantage
        ratio.at(1, 0) = 0.1;   // would over-penalize negative advantage
        Tensor adv(static_cast<std::size_t>(2), static_cast<std::size_t>(1));
        adv.at(0, 0) = 1.0;
        adv.at(1, 0) = -1.0;
        const double s = t.scalar(ppo_surrogate(t, t.input(ratio), t.input(adv), 0.2));
        // min(2.0*1, 1.2*1) = 1.2 ; min(0.1*-1, 0.8*-1) = -0.8 (pessimistic bound)
        CHECK(s == doctest::Approx(0.5 * (1.2 - 0.8)).epsilon(1e-12));
    }
}

namespace {

PpoConfig bandit_cfg() {
    PpoConfig cfg;
    cfg.rollout_steps = 256;
    cfg.minibatch = 64;
    cfg.epochs = 4;
    cfg.lr = 5e-3;
    cfg.entropy_coef = 1e-4;
    cfg.discount = 0.99;
    cfg.gae_lambda = 0.95;
    cfg.policy_hidden = {16, 16};
    cfg.value_hidden = {16, 16};
    cfg.log_std_init = -0.5;
    return cfg;
}

} // namespace

TEST_CASE("ppo_update with zero advantages leaves the policy unchanged (no entropy bonus)") {
    Rng rng(29);
    PpoConfig cfg = bandit_cfg();
    cfg.entropy_coef = 0.0;
    PolicyNet policy(3, cfg.policy_hidden, cfg.log_std_init, rng);
    ValueNet value(3, cfg.value_hidden, rng);
    Adam popt(cfg.lr), vopt(cfg.lr);
    popt.attach(policy.named_params());
    vopt.attach(value.named_params());

    const std::uint64_t before = params_checksum(policy.named_params());

    RolloutBuffer buf(3);
    Rng actor(31);
    for (int i = 0; i < cfg.rollout_steps; ++i) {
        const std::vector<double> in{0.1, -0.2, 0.3};
        const ActResult ar = act(policy, in, actor, false);
        const double v = value.value(in);
        buf.push(in, ar, v, v, true);  // reward == value, terminal every step
    }
    compute_gae(buf, cfg.discount, cfg.gae_lambda);
    for (double a : buf.advantages) REQUIRE(a == doctest::Approx(0.0));
    ppo_update(policy, value, popt, vopt, buf, cfg, rng);
    CHECK(params_checksum(policy.named_params()) == before);
}

TEST_CASE("ppo converges on an analytic one-dimensional bandit") {
    // reward = -(a0 - 0.5)^2, optimum at a0 = 0.5
    Rng rng(37);
    PpoConfig cfg = bandit_cfg();
    PolicyNet policy(2, cfg.policy_hidden, cfg.log_std_init, rng);
    ValueNet value(2, cfg.value_hidden, rng);
    Adam popt(cfg.lr), vopt(cfg.lr);
    popt.attach(policy.named_params());
    vopt.attach(value.named_params());

    Rng actor(38);
    const std::vector<double> input{0.5, -0.5};
    double mean_action = 0.0;
    int updates = 0;
    for (; updates < 200; ++updates) {
        RolloutBuffer buf(2);
        for (int i = 0; i < cfg.rollout_steps; ++i) {
            const ActResult ar = act(policy, input, actor, false);
            const double r = -(ar.action[0] - 0.5) * (ar.action[0] - 0.5);
            buf.push(input, ar, r, value.value(input), true);
        }
        compute_gae(buf, cfg.discount, cfg.gae_lambda);
        ppo_update(policy, value, popt, vopt, buf, cfg, rng);

        Rng det(1);
        mean_action = act(policy, input, det, true).action[0];
        if (std::abs(mean_action - 0.5) <= 0.02 && updates > 10) break;
    }
    INFO("updates: ", updates, " final mean action: ", mean_action);
    CHECK(std::abs(mean_action - 0.5) <= 0.05);
    CHECK(updates < 200);
}
