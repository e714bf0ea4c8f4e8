#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rflight/distill.hpp"
#include "rflight/eval.hpp"
#include "rflight/train.hpp"

namespace rflight {

// Full experiment configuration. Every knob lives here; the parser rejects
// unknown keys, duplicate keys, and attack parameters outside the allowed
// envelope, each with a section.key diagnostic. Values are stored in the
// file's native units (degrees where marked) so the resolved text round-trips
// bitwise; SI conversions happen in the build helpers below.
struct ExperimentConfig {
    // [sim]
    UavParams uav;
    double floor_z = 0.0;
    double tilt_max_deg = 60.0;
    double arena_half_extent = 50.0;
    int horizon_steps = 1500;
    Vec3 start{0.0, 0.0, 1.5};
    double init_noise_pos = 0.05;
    double init_noise_vel = 0.05;
    Vec3 goal_min{-2.0, -2.0, 1.0};
    Vec3 goal_max{2.0, 2.0, 2.0};
    double goal_radius = 0.1;
    double safety_radius = 5.0;
    double transit_time = 0.0;

    // [attacks] — magnitude ranges in file units (deg for gyro/mag)
    double p_none = 0.2;
    std::vector<SensorId> allowed_sensors{SensorId::Gps, SensorId::Gyro, SensorId::Accel,
                                          SensorId::Mag, SensorId::OptFlow};
    double gps_mag_min = 1.0, gps_mag_max = 20.0, gps_dur_cap = 60.0;
    double gyro_mag_min_deg = 1.0, gyro_mag_max_deg = 90.0, gyro_dur_cap = 60.0;
    double accel_mag_min = 0.5, accel_mag_max = 1.0, accel_dur_cap = 30.0;
    double mag_mag_min_deg = 10.0, mag_mag_max_deg = 90.0, mag_dur_cap = 60.0;
    double optflow_mag_min = 0.1, optflow_mag_max = 0.5, optflow_dur_cap = 30.0;
    double attack_dur_min = 1.0;
    double attack_start_max_frac = 1.0;  // start sampled in [0, frac * episode]
    double freq_min = 0.5, freq_max = 4.0;
    bool mag_held_random = false;

    // [encoders]
    std::size_t latent_dim = 64;
    std::size_t history_len = 20;
    std::vector<std::size_t> teacher_hidden{256, 256, 256, 256};
    std::vector<std::size_t> decoder_hidden{256};
    std::size_t student_hidden = 128;
    std::size_t student_layers = 4;
    bool policy_latent_mu_only = false;
    double norm_pos = 10.0, norm_vel = 5.0, norm_ang = 3.141592653589793, norm_rate = 10.0,
           norm_dur = 60.0;

    // [ppo] (includes the reward coefficients via ppo.reward)
    PpoConfig ppo;
    double teacher_lr = 3e-4;
    int teacher_epochs = 1;
    int teacher_minibatch = 256;
    int checkpoint_every = 10;

    // [distill]
    DistillConfig distill;

    // [eval]
    EvalOptions eval;

    // [io]
    std::string out_dir = "runs";
    std::uint64_t seed = 1;

    void validate() const;

    CrashBounds crash_bounds() const;
    AttackCatalog attack_catalog() const;
    NormScales norm_scales() const;
    EncoderConfig encoder_config() const;
    EnvConfig env_config() const;
    TrainConfig train_config() const;

    // Canonical text with every resolved value; reparsing it reproduces this
    // config bitwise, and its hash is the fingerprint stored in
    // checkpoints/logs.
    std::string resolved_text() const;
    std::uint64_t fingerprint() const;
};

// Parses and validates; ConfigError diagnostics carry origin and key path.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::string& path);

std::uint64_t text_fingerprint(const std::string& text);

} // namespace rflight
