#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rflight/attack.hpp"

using namespace rflight;

namespace {

AttackSpec gps_drift(double magnitude, double start, double duration, double sign = 1.0) {
    AttackSpec s;
    s.sensor = SensorId::Gps;
    s.pattern = BiasPattern::Drift;
    s.magnitude = magnitude;
    s.start_time = start;
    s.duration = duration;
    s.channels = {0};
    s.signs = {sign};
    s.seed = 42;
    return s;
}

UavState some_state() {
    UavState s;
    s.pos = {3.0, -1.0, 2.0};
    s.vel = {0.4, 0.1, -0.2};
    s.ang = {0.05, -0.02, 1.2};
    s.rates = {0.3, -0.1, 0.02};
    s.t = 5.0;
    return s;
}

} // namespace

TEST_CASE("drift ramps linearly to the sampled magnitude") {
    const AttackSpec s = gps_drift(20.0, 2.0, 10.0);
    CHECK(bias_at(s, 2.0)[0] == 0.0);
    CHECK(bias_at(s, 7.0)[0] == doctest::Approx(10.0));
    CHECK(bias_at(s, 12.0)[0] == doctest::Approx(20.0));  // tau == duration
}

TEST_CASE("oscillatory bias is zero at the window start and bounded by the magnitude") {
    AttackSpec s;
    s.sensor = SensorId::Gyro;
    s.pattern = BiasPattern::Oscillatory;
    s.magnitude = 0.5;
    s.freq_hz = 2.0;
    s.start_time = 1.0;
    s.duration = 10.0;
    s.channels = {6, 7};
    s.signs = {1.0, -1.0};
    CHECK(bias_at(s, 1.0)[6] == 0.0);
    for (double tau = 0.0; tau <= 10.0; tau += 0.013) {
        const auto b = bias_at(s, 1.0 + tau);
        CHECK(std::abs(b[6]) <= 0.5 + 1e-15);
        CHECK(std::abs(b[7]) <= 0.5 + 1e-15);
        CHECK(b[7] == -b[6]);  // per-channel sign flips the phase
    }
}

TEST_CASE("random bias statistics over 1e5 draws") {
    AttackSpec s;
    s.sensor = SensorId::OptFlow;
    s.pattern = BiasPattern::Random;
    s.magnitude = 0.5;
    s.start_time = 0.0;
    s.duration = 1e9;
    s.channels = {0};
    s.signs = {1.0};
    s.seed = 2024;
    s.redraw_dt = 1.0;

    const int n = 100000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
        const double b = bias_at(s, static_cast<double>(i))[0];
        CHECK(b >= -0.5);
        CHECK(b <= 0.5);
        mean += b;
    }
    mean /= n;
    const double sigma = 0.5 / std::sqrt(3.0);  // std of U(-m, m)
    CHECK(std::abs(mean) < 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("bias is identically zero outside the attack window") {
    const AttackSpec drift = gps_drift(5.0, 2.0, 3.0);
    for (double t : {0.0, 1.999, 5.001, 100.0}) {
        const auto b = bias_at(drift, t);
        for (double v : b) CHECK(v == 0.0);
    }
}

TEST_CASE("drift magnitude is non-decreasing in tau") {
    const AttackSpec s = gps_drift(7.5, 0.0, 4.0, -1.0);
    double prev = -1.0;
    for (double tau = 0.0; tau <= 4.0; tau += 0.01) {
        const double mag = std::abs(bias_at(s, tau)[0]);
        CHECK(mag >= prev);
        prev = mag;
    }
}

TEST_CASE("observe") {
    const UavState truth = some_state();

    SUBCASE("no attack: observation equals the true state exactly") {
        AttackSpec none;
        const Observation o = observe(truth, none, 5.0);
        const Observation direct = Observation::from_state(truth);
        for (int i = 0; i < kObsDim; ++i) CHECK(o.v[i] == direct.v[i]);
    }
    SUBCASE("GPS drift at full ramp: observed x shifted by -5, others untouched") {
        const AttackSpec s = gps_drift(5.0, 0.0, 4.0, -1.0);
        const Observation o = observe(truth, s, 4.0);  // tau == duration
        CHECK(o.v[0] == doctest::Approx(truth.pos[0] - 5.0));
        const Observation direct = Observation::from_state(truth);
        for (int i = 1; i < kObsDim; ++i) CHECK(o.v[i] == direct.v[i]);
    }
    SUBCASE("gyro oscillatory 45 deg at peak phase offsets attitude channels") {
        AttackSpec s;
        s.sensor = SensorId::Gyro;
        s.pattern = BiasPattern::Oscillatory;
        s.magnitude = 45.0 * 0.017453292519943295;
        s.freq_hz = 1.0;
        s.start_time = 0.0;
        s.duration = 10.0;
        s.channels = {6};
        s.signs = {1.0};
        const double peak = 0.25;  // sin(2*pi*f*tau) == 1
        const Observation o = observe(truth, s, peak);
        CHECK(o.v[6] == doctest::Approx(truth.ang[0] + 45.0 * 0.017453292519943295));
    }
    SUBCASE("channel isolation for every sampled spec") {
        Rng rng(31337);
        AttackCatalog cat;
        const std::vector<SensorId> all{SensorId::Gps, SensorId::Gyro, SensorId::Accel,
                                        SensorId::Mag, SensorId::OptFlow};
        for (int i = 0; i < 200; ++i) {
            const AttackSpec s = sample_attack(rng, cat, all, 0.0, 10.0, 0.004);
            const double t = rng.uniform(0.0, 10.0);
            const Observation o = observe(truth, s, t);
            const Observation direct = Observation::from_state(truth);
            for (int c = 0; c < kObsDim; ++c) {
                const bool owned =
                    std::find(s.channels.begin(), s.channels.end(), c) != s.channels.end();
                if (!owned) CHECK(o.v[static_cast<std::size_t>(c)] == direct.v[static_cast<std::size_t>(c)]);
            }
        }
    }
}

TEST_CASE("privileged info mirrors the injected bias bit for bit") {
    const UavState truth = some_state();
    Rng rng(99);
    AttackCatalog cat;
    const std::vector<SensorId> all{SensorId::Gps, SensorId::Gyro, SensorId::Accel, SensorId::Mag,
                                    SensorId::OptFlow};
    for (int i = 0; i < 200; ++i) {
        const AttackSpec s = sample_attack(rng, cat, all, 0.0, 10.0, 0.004);
        const double t = rng.uniform(0.0, 12.0);
        const Observation o = observe(truth, s, t);
        const PrivilegedInfo p = privileged_info(s, t);
        const Observation direct = Observation::from_state(truth);
        // The bias reported must be the exact value observe added: re-adding
        // it to the truth reproduces the observation bitwise.
        const auto reported = bias_at(s, t);
        for (int c = 0; c < kObsDim; ++c) {
            const std::size_t k = static_cast<std::size_t>(c);
            CHECK(std::memcmp(&reported[k], &p.bias[k], sizeof(double)) == 0);
            const bool owned = s.active_at(t) &&
                std::find(s.channels.begin(), s.channels.end(), c) != s.channels.end();
            const double expect = owned ? direct.v[k] + p.bias[k] : direct.v[k];
            CHECK(std::memcmp(&o.v[k], &expect, sizeof(double)) == 0);
            CHECK(p.mask[k] == owned);
        }
        if (!s.active_at(t)) {
            CHECK(p.sensor == SensorId::None);
            CHECK(p.label() == 0);
        } else {
            CHECK(p.sensor == s.sensor);
            CHECK(p.elapsed == doctest::Approx(t - s.start_time));
            CHECK(p.duration == s.duration);
        }
    }
}

TEST_CASE("attack ended: label none, zero bias") {
    const AttackSpec s = gps_drift(5.0, 1.0, 2.0);
    const PrivilegedInfo p = privileged_info(s, 3.5);
    CHECK(p.sensor == SensorId::None);
    for (double b : p.bias) CHECK(b == 0.0);
    for (bool m : p.mask) CHECK_FALSE(m);
}

TEST_CASE("determinism: same spec and seed give identical streams") {
    AttackSpec s;
    s.sensor = SensorId::Mag;
    s.pattern = BiasPattern::Random;
    s.magnitude = 0.8;
    s.start_time = 0.0;
    s.duration = 100.0;
    s.channels = {8};
    s.signs = {1.0};
    s.seed = 777;
    s.redraw_dt = 0.004;
    for (int i = 0; i < 1000; ++i) {
        const double t = 0.004 * i;
        const double a = bias_at(s, t)[8];
        const double b = bias_at(s, t)[8];
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
}

TEST_CASE("held random keeps one draw for the whole window") {
    AttackSpec s;
    s.sensor = SensorId::Mag;
    s.pattern = BiasPattern::Random;
    s.magnitude = 0.8;
    s.start_time = 0.0;
    s.duration = 100.0;
    s.channels = {8};
    s.signs = {1.0};
    s.seed = 777;
    s.held_random = true;
    const double first = bias_at(s, 0.0)[8];
    for (double t : {0.4, 7.0, 99.0}) CHECK(bias_at(s, t)[8] == first);
}

TEST_CASE("sample_attack") {
    AttackCatalog cat;

    SUBCASE("p_none = 1 always yields no attack") {
        Rng rng(1);
        for (int i = 0; i < 100; ++i)
            CHECK(sample_attack(rng, cat, {SensorId::Gps}, 1.0, 10.0, 0.004).is_none());
    }
    SUBCASE("empty allowed set with p_none < 1 is a configuration error") {
        Rng rng(2);
        CHECK_THROWS_AS(sample_attack(rng, cat, {}, 0.5, 10.0, 0.004), ConfigError);
    }
    SUBCASE("GPS-only sampling stays inside the catalog row") {
        Rng rng(3);
        for (int i = 0; i < 1000; ++i) {
            const AttackSpec s = sample_attack(rng, cat, {SensorId::Gps}, 0.0, 10.0, 0.004);
            CHECK(s.sensor == SensorId::Gps);
            CHECK(s.pattern == BiasPattern::Drift);
            CHECK(s.magnitude >= 1.0);
            CHECK(s.magnitude <= 20.0);
            CHECK(s.duration <= 60.0);
            CHECK(s.duration >= cat.dur_min);
            CHECK(s.start_time >= 0.0);
            CHECK(s.start_time < 10.0);
            for (int c : s.channels) CHECK((c == 0 || c == 1));  // horizontal axes
        }
    }
    SUBCASE("gyro magnitudes arrive converted to radians") {
        Rng rng(4);
        for (int i = 0; i < 500; ++i) {
            const AttackSpec s = sample_attack(rng, cat, {SensorId::Gyro}, 0.0, 10.0, 0.004);
            CHECK(s.magnitude >= 1.0 * 0.017453292519943295);
            CHECK(s.magnitude <= 90.0 * 0.017453292519943295);
            CHECK(s.freq_hz >= cat.freq_min);
            CHECK(s.freq_hz <= cat.freq_max);
            for (int c : s.channels) CHECK((c == 6 || c == 7));
        }
    }
    SUBCASE("five-sensor frequencies within 5 sigma of uniform over 1e4 samples") {
        Rng rng(5);
        const std::vector<SensorId> all{SensorId::Gps, SensorId::Gyro, SensorId::Accel,
                                        SensorId::Mag, SensorId::OptFlow};
        std::array<int, 6> counts{};
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const AttackSpec s = sample_attack(rng, cat, all, 0.0, 10.0, 0.004);
            counts[static_cast<std::size_t>(s.sensor)] += 1;
        }
        const double expect = n / 5.0;
        const double sigma = std::sqrt(n * 0.2 * 0.8);
        for (int k = 1; k <= 5; ++k)
            CHECK(std::abs(counts[static_cast<std::size_t>(k)] - expect) < 5.0 * sigma);
    }
}

TEST_CASE("catalog validation rejects out-of-envelope parameters") {
    AttackCatalog cat;
    cat.gps.mag_max = 25.0;  // beyond the 1-20 m window
    CHECK_THROWS_WITH_AS(cat.validate(), doctest::Contains("1-20 m"), ConfigError);

    AttackCatalog cat2;
    cat2.accel.dur_cap = 45.0;  // beyond the 30 s cap
    CHECK_THROWS_AS(cat2.validate(), ConfigError);

    AttackCatalog ok;
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("full state encoding layout") {
    NormScales scales;
    std::array<double, kObsDim> norm_obs{};
    for (int i = 0; i < kObsDim; ++i) norm_obs[static_cast<std::size_t>(i)] = 0.01 * i;

    PrivilegedInfo p;
    p.sensor = SensorId::Gyro;
    p.bias[6] = 0.5;
    p.mask[6] = true;
    p.elapsed = 3.0;
    p.duration = 12.0;

    const std::vector<double> s = encode_full_state(norm_obs, p, scales);
    REQUIRE(s.size() == static_cast<std::size_t>(kFullStateDim));
    for (int i = 0; i < kObsDim; ++i) CHECK(s[static_cast<std::size_t>(i)] == norm_obs[static_cast<std::size_t>(i)]);
    CHECK(s[12 + 2] == 1.0);                    // one-hot gyro
    CHECK(s[12 + 0] == 0.0);
    CHECK(s[18 + 6] == doctest::Approx(0.5 / scales.ang));  // bias scaled like its channel
    CHECK(s[30] == doctest::Approx(0.25));      // elapsed / duration
    CHECK(s[31] == doctest::Approx(0.2));       // duration / 60
}

TEST_CASE("normalized observation is goal-relative in position") {
    UavState truth = some_state();
    NormScales scales;
    const Vec3 ref{1.0, -2.0, 2.0};
    const auto n = normalize_obs(Observation::from_state(truth), ref, scales);
    CHECK(n[0] == doctest::Approx((truth.pos[0] - ref[0]) / scales.pos));
    CHECK(n[3] == doctest::Approx(truth.vel[0] / scales.vel));
    CHECK(n[8] == doctest::Approx(truth.ang[2] / scales.ang));
    CHECK(n[9] == doctest::Approx(truth.rates[0] / scales.rate));
}
