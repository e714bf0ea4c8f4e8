#include "rflight/attack.hpp"

#include <cmath>

#include "rflight/errors.hpp"

namespace rflight {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kDeg = 0.017453292519943295;
} // namespace

const char* sensor_name(SensorId s) {
    switch (s) {
        case SensorId::None: return "none";
        case SensorId::Gps: return "gps";
        case SensorId::Gyro: return "gyro";
        case SensorId::Accel: return "accel";
        case SensorId::Mag: return "mag";
        case SensorId::OptFlow: return "optflow";
    }
    return "?";
}

SensorId sensor_from_name(const std::string& name) {
    if (name == "none") return SensorId::None;
    if (name == "gps") return SensorId::Gps;
    if (name == "gyro" || name == "gyroscope") return SensorId::Gyro;
    if (name == "accel" || name == "accelerometer") return SensorId::Accel;
    if (name == "mag" || name == "magnetometer") return SensorId::Mag;
    if (name == "optflow" || name == "optical_flow") return SensorId::OptFlow;
    throw ConfigError("unknown sensor name '" + name + "'");
}

const char* pattern_name(BiasPattern p) {
    switch (p) {
        case BiasPattern::Drift: return "drift";
        case BiasPattern::Oscillatory: return "oscillatory";
        case BiasPattern::Random: return "random";
    }
    return "?";
}

Observation Observation::from_state(const UavState& s) {
    Observation o;
    for (int i = 0; i < 3; ++i) {
        o.v[static_cast<std::size_t>(i)] = s.pos[i];
        o.v[static_cast<std::size_t>(3 + i)] = s.vel[i];
        o.v[static_cast<std::size_t>(6 + i)] = s.ang[i];
        o.v[static_cast<std::size_t>(9 + i)] = s.rates[i];
    }
    return o;
}

std::array<double, kObsDim> bias_at(const AttackSpec& spec, double t) {
    std::array<double, kObsDim> bias{};
    if (!spec.active_at(t)) return bias;
    const double tau = t - spec.start_time;

    switch (spec.pattern) {
        case BiasPattern::Drift: {
            const double frac = spec.duration > 0.0 ? tau / spec.duration : 1.0;
            const double env = spec.magnitude * frac;
            for (std::size_t i = 0; i < spec.channels.size(); ++i)
                bias[static_cast<std::size_t>(spec.channels[i])] = spec.signs[i] * env;
            break;
        }
        case BiasPattern::Oscillatory: {
            const double env = spec.magnitude * std::sin(kTwoPi * spec.freq_hz * tau);
            for (std::size_t i = 0; i < spec.channels.size(); ++i)
                bias[static_cast<std::size_t>(spec.channels[i])] = spec.signs[i] * env;
            break;
        }
        case BiasPattern::Random: {
            // Draw keyed on (seed, step index): observe, privileged_info and
            // replay reconstruct the identical stream with no shared state.
            const std::uint64_t step =
                spec.held_random
                    ? 0
                    : static_cast<std::uint64_t>(std::floor(tau / spec.redraw_dt + 0.5));
            Rng draw(splitmix64(spec.seed ^ splitmix64(step + 1)));
            for (std::size_t i = 0; i < spec.channels.size(); ++i)
                bias[static_cast<std::size_t>(spec.channels[i])] =
                    draw.uniform(-spec.magnitude, spec.magnitude);
            break;
        }
    }
    return bias;
}

Observation observe(const UavState& true_state, const AttackSpec& spec, double t) {
    Observation o = Observation::from_state(true_state);
    if (spec.active_at(t)) {
        const auto bias = bias_at(spec, t);
        for (int c : spec.channels) o.v[static_cast<std::size_t>(c)] += bias[static_cast<std::size_t>(c)];
    }
    return o;
}

Observation observe(const UavState& true_state, const std::vector<AttackSpec>& specs, double t) {
    Observation o = Observation::from_state(true_state);
    for (const AttackSpec& spec : specs) {
        if (!spec.active_at(t)) continue;
        const auto bias = bias_at(spec, t);
        for (int c : spec.channels) o.v[static_cast<std::size_t>(c)] += bias[static_cast<std::size_t>(c)];
    }
    return o;
}

PrivilegedInfo privileged_info(const AttackSpec& spec, double t) {
    PrivilegedInfo p;
    if (!spec.active_at(t)) return p;
    p.sensor = spec.sensor;
    p.bias = bias_at(spec, t);
    for (int c : spec.channels) p.mask[static_cast<std::size_t>(c)] = true;
    p.elapsed = t - spec.start_time;
    p.duration = spec.duration;
    return p;
}

PrivilegedInfo privileged_info(const std::vector<AttackSpec>& specs, double t) {
    // Multi-sensor episodes are labeled by the first active spec.
    PrivilegedInfo p;
    bool first = true;
    for (const AttackSpec& spec : specs) {
        if (!spec.active_at(t)) continue;
        const auto bias = bias_at(spec, t);
        for (int c : spec.channels) {
            p.bias[static_cast<std::size_t>(c)] += bias[static_cast<std::size_t>(c)];
            p.mask[static_cast<std::size_t>(c)] = true;
        }
        if (first) {
            p.sensor = spec.sensor;
            p.elapsed = t - spec.start_time;
            p.duration = spec.duration;
            first = false;
        }
    }
    return p;
}

const SensorRanges& AttackCatalog::ranges_for(SensorId s) const {
    switch (s) {
        case SensorId::Gps: return gps;
        case SensorId::Gyro: return gyro;
        case SensorId::Accel: return accel;
        case SensorId::Mag: return mag;
        case SensorId::OptFlow: return optflow;
        case SensorId::None: break;
    }
    throw ConfigError("attack catalog: no ranges for sensor 'none'");
}

void AttackCatalog::validate() const {
    struct Bound {
        SensorId sensor;
        double lo, hi, dur;
        const char* what;
    };
    // Evaluation envelope per sensor: magnitude window and duration cap.
    const Bound bounds[] = {
        {SensorId::Gps, 1.0, 20.0, 60.0, "gps bias 1-20 m, duration <= 60 s"},
        {SensorId::Gyro, 1.0 * kDeg, 90.0 * kDeg, 60.0, "gyro bias 1-90 deg, duration <= 60 s"},
        {SensorId::Accel, 0.5, 1.0, 30.0, "accel bias 0.5-1 m/s, duration <= 30 s"},
        {SensorId::Mag, 10.0 * kDeg, 90.0 * kDeg, 60.0, "mag bias 10-90 deg, duration <= 60 s"},
        {SensorId::OptFlow, 0.1, 0.5, 30.0, "optflow bias 0.1-0.5 m, duration <= 30 s"},
    };
    const double eps = 1e-9;
    for (const Bound& b : bounds) {
        const SensorRanges& r = ranges_for(b.sensor);
        if (r.mag_min > r.mag_max)
            throw ConfigError(std::string("attacks.") + sensor_name(b.sensor) +
                              ": magnitude range is inverted");
        if (r.mag_min < b.lo - eps || r.mag_max > b.hi + eps || r.dur_cap > b.dur + eps)
            throw ConfigError(std::string("attacks.") + sensor_name(b.sensor) +
                              ": outside the allowed envelope (" + b.what + ")");
        if (r.dur_cap <= 0.0)
            throw ConfigError(std::string("attacks.") + sensor_name(b.sensor) +
                              ": duration cap must be positive");
    }
    if (dur_min <= 0.0) throw ConfigError("attacks.dur_min must be positive");
    if (start_max_frac <= 0.0 || start_max_frac > 1.0)
        throw ConfigError("attacks.start_max_frac must be in (0,1]");
    if (freq_min <= 0.0 || freq_max < freq_min)
        throw ConfigError("attacks: oscillation frequency range invalid");
}

namespace {

// Non-empty random subset of `pool`.
std::vector<int> pick_subset(Rng& rng, const std::vector<int>& pool) {
    std::vector<int> out;
    while (out.empty()) {
        for (int c : pool)
            if (rng.bernoulli(0.5)) out.push_back(c);
    }
    return out;
}

} // namespace

AttackSpec sample_attack(Rng& rng, const AttackCatalog& catalog,
                         const std::vector<SensorId>& allowed, double p_none,
                         double episode_len_s, double sim_dt) {
    if (allowed.empty() && p_none < 1.0)
        throw ConfigError("attacks: allowed sensor set is empty but p_none < 1");
    AttackSpec spec;
    spec.redraw_dt = sim_dt;
    if (p_none >= 1.0 || rng.uniform() < p_none) return spec;

    spec.sensor = allowed[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(allowed.size())))];
    const SensorRanges& r = catalog.ranges_for(spec.sensor);
    spec.pattern = r.pattern;
    spec.magnitude = rng.uniform(r.mag_min, r.mag_max);
    spec.duration = rng.uniform(std::min(catalog.dur_min, r.dur_cap), r.dur_cap);
    spec.start_time = rng.uniform(0.0, episode_len_s * catalog.start_max_frac);
    if (spec.pattern == BiasPattern::Oscillatory)
        spec.freq_hz = rng.uniform(catalog.freq_min, catalog.freq_max);
    if (spec.sensor == SensorId::Mag && catalog.mag_held_random) spec.held_random = true;

    switch (spec.sensor) {
        case SensorId::Gps:
        case SensorId::OptFlow:
            spec.channels = pick_subset(rng, {0, 1});  // horizontal position axes
            break;
        case SensorId::Gyro:
            spec.channels = pick_subset(rng, {6, 7});  // roll / pitch
            break;
        case SensorId::Accel:
            spec.channels = pick_subset(rng, {3, 4, 5});
            break;
        case SensorId::Mag:
            spec.channels = {8};
            break;
        case SensorId::None:
            break;
    }
    for (std::size_t i = 0; i < spec.channels.size(); ++i)
        spec.signs.push_back(rng.bernoulli(0.5) ? 1.0 : -1.0);
    spec.seed = rng.next_u64();
    return spec;
}

std::array<double, kObsDim> NormScales::channel_scales() const {
    return {pos, pos, pos, vel, vel, vel, ang, ang, ang, rate, rate, rate};
}

std::array<double, kObsDim> normalize_obs(const Observation& obs, const Vec3& ref_pos,
                                          const NormScales& scales) {
    std::array<double, kObsDim> out{};
    const auto s = scales.channel_scales();
    for (int i = 0; i < kObsDim; ++i) {
        double v = obs.v[static_cast<std::size_t>(i)];
        if (i < 3) v -= ref_pos[i];
        out[static_cast<std::size_t>(i)] = v / s[static_cast<std::size_t>(i)];
    }
    return out;
}

std::vector<double> encode_full_state(const std::array<double, kObsDim>& norm_obs,
                                      const PrivilegedInfo& priv, const NormScales& scales) {
    std::vector<double> s(kFullStateDim, 0.0);
    for (int i = 0; i < kObsDim; ++i) s[static_cast<std::size_t>(i)] = norm_obs[static_cast<std::size_t>(i)];
    s[static_cast<std::size_t>(kObsDim + priv.label())] = 1.0;
    const auto ch = scales.channel_scales();
    for (int i = 0; i < kObsDim; ++i)
        s[static_cast<std::size_t>(kObsDim + kAttackClasses + i)] =
            priv.bias[static_cast<std::size_t>(i)] / ch[static_cast<std::size_t>(i)];
    const std::size_t tail = static_cast<std::size_t>(kObsDim + kAttackClasses + kObsDim);
    s[tail] = priv.duration > 0.0 ? priv.elapsed / priv.duration : 0.0;
    s[tail + 1] = priv.duration / scales.dur;
    return s;
}

} // namespace rflight
