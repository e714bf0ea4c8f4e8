#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rflight/rng.hpp"
#include "rflight/sim.hpp"

namespace rflight {

// Observation channel layout (12 channels, SI units):
//   0..2  position x, y, z        (GPS; optical flow corrects 0..1)
//   3..5  velocity vx, vy, vz     (accelerometer)
//   6..7  roll, pitch             (gyroscope, integrated)
//   8     yaw / heading           (magnetometer)
//   9..11 body rates p, q, r      (gyroscope)
inline constexpr int kObsDim = 12;
inline constexpr int kAttackClasses = 6;  // none + 5 sensors
inline constexpr int kPrivDim = kAttackClasses + kObsDim + 2;
inline constexpr int kFullStateDim = kObsDim + kPrivDim;

enum class SensorId : int { None = 0, Gps = 1, Gyro = 2, Accel = 3, Mag = 4, OptFlow = 5 };
enum class BiasPattern : int { Drift = 0, Oscillatory = 1, Random = 2 };

const char* sensor_name(SensorId s);
SensorId sensor_from_name(const std::string& name);
const char* pattern_name(BiasPattern p);

struct Observation {
    std::array<double, kObsDim> v{};

    static Observation from_state(const UavState& s);
};

// One injected attack. Magnitudes are stored in SI units (degrees from the
// catalog are converted at construction). `seed` pins the random-pattern
// stream so observe / privileged_info / replay all see identical draws.
struct AttackSpec {
    SensorId sensor = SensorId::None;
    BiasPattern pattern = BiasPattern::Drift;
    double magnitude = 0.0;   // m, m/s or rad depending on sensor
    double freq_hz = 0.0;     // oscillatory only
    double start_time = 0.0;  // s
    double duration = 0.0;    // s
    std::uint64_t seed = 0;
    std::vector<int> channels;    // observation indices hit
    std::vector<double> signs;    // per-channel direction, +-1
    double redraw_dt = 0.004;     // random pattern redraw interval (sim dt)
    bool held_random = false;     // random pattern: one held draw instead of per-step

    bool is_none() const { return sensor == SensorId::None; }
    bool active_at(double t) const {
        return !is_none() && t >= start_time && t <= start_time + duration;
    }
};

// Ground-truth attack description available only inside the simulator.
struct PrivilegedInfo {
    SensorId sensor = SensorId::None;
    std::array<double, kObsDim> bias{};  // currently injected per-channel bias
    std::array<bool, kObsDim> mask{};    // corrupted channel mask
    double elapsed = 0.0;                // s since attack start
    double duration = 0.0;               // total attack duration, s

    int label() const { return static_cast<int>(sensor); }
};

// Bias vector injected by `spec` at time t (zeros when outside the window).
// Pure: the random pattern derives its draw from (seed, step index) so the
// same (spec, t) always yields the same bias.
std::array<double, kObsDim> bias_at(const AttackSpec& spec, double t);

// Sensor observation of the true state; channels owned by the attacked
// sensor carry the injected bias while the attack window is active.
Observation observe(const UavState& true_state, const AttackSpec& spec, double t);
Observation observe(const UavState& true_state, const std::vector<AttackSpec>& specs, double t);

// Exact description of what observe() injected at the same instant.
PrivilegedInfo privileged_info(const AttackSpec& spec, double t);
PrivilegedInfo privileged_info(const std::vector<AttackSpec>& specs, double t);

// Per-sensor sampling ranges; defaults are the full evaluation envelope and
// validation rejects anything outside it (see validate()).
struct SensorRanges {
    double mag_min = 0.0;
    double mag_max = 0.0;
    double dur_cap = 0.0;  // s
    BiasPattern pattern = BiasPattern::Drift;
};

struct AttackCatalog {
    SensorRanges gps{1.0, 20.0, 60.0, BiasPattern::Drift};                  // m
    SensorRanges gyro{0.017453292519943295, 1.5707963267948966, 60.0,
                      BiasPattern::Oscillatory};                            // 1..90 deg
    SensorRanges accel{0.5, 1.0, 30.0, BiasPattern::Oscillatory};           // m/s
    SensorRanges mag{0.17453292519943295, 1.5707963267948966, 60.0,
                     BiasPattern::Random};                                  // 10..90 deg
    SensorRanges optflow{0.1, 0.5, 30.0, BiasPattern::Random};              // m
    double dur_min = 1.0;       // s
    double start_max_frac = 1.0;  // start time uniform in [0, frac * episode]
    double freq_min = 0.5;      // Hz, oscillatory
    double freq_max = 4.0;      // Hz
    bool mag_held_random = false;  // magnetometer random bias held instead of redrawn

    const SensorRanges& ranges_for(SensorId s) const;
    // Rejects any range outside the evaluation envelope; error names the bound.
    void validate() const;
};

// Draws an attack for one episode: no-attack with probability p_none,
// otherwise a uniform sensor from `allowed` with magnitude/duration/start
// uniform in the catalog ranges. Throws ConfigError when `allowed` is empty
// and p_none < 1.
AttackSpec sample_attack(Rng& rng, const AttackCatalog& catalog,
                         const std::vector<SensorId>& allowed, double p_none,
                         double episode_len_s, double sim_dt);

// Fixed per-channel normalization used for every network input.
struct NormScales {
    double pos = 10.0;   // m
    double vel = 5.0;    // m/s
    double ang = 3.141592653589793;  // rad
    double rate = 10.0;  // rad/s
    double dur = 60.0;   // s, privileged duration scale

    std::array<double, kObsDim> channel_scales() const;
};

// Normalized observation; position channels are expressed relative to the
// current reference so the policy is translation invariant.
std::array<double, kObsDim> normalize_obs(const Observation& obs, const Vec3& ref_pos,
                                          const NormScales& scales);

// S_t layout: [normalized obs (12) | one-hot sensor (6) | bias per channel,
// scaled like its state channel (12) | elapsed/duration | duration/dur].
std::vector<double> encode_full_state(const std::array<double, kObsDim>& norm_obs,
                                      const PrivilegedInfo& priv, const NormScales& scales);

} // namespace rflight
