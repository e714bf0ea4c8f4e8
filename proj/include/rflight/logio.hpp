#pragma once

#include <string>
#include <vector>

#include "rflight/eval.hpp"
#include "rflight/train.hpp"

namespace rflight {

// Episode step logs as CSV with a versioned header comment and a JSON meta
// line (controller id, seed, config fingerprint, attack specs, outcome).
// Doubles are printed with 17 significant digits so parsing is bit exact.
void write_episode_csv(const std::string& path, const EpisodeResult& episode,
                       std::uint64_t config_fingerprint);

struct EpisodeLogFile {
    EpisodeResult episode;
    std::uint64_t config_fingerprint = 0;
};

EpisodeLogFile read_episode_csv(const std::string& path);

// Per-iteration learning curve rows.
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

// Metric summaries keyed by (controller, scenario) as a JSON report.
void write_summary_json(const std::string& path, const std::vector<MetricsSummary>& summaries,
                        std::uint64_t config_fingerprint, std::uint64_t seed);

std::string attack_specs_to_json(const std::vector<AttackSpec>& specs);
std::vector<AttackSpec> attack_specs_from_json(const std::string& json_text);

// True when every logged step of `a` and `b` is bitwise identical.
bool episodes_bit_identical(const EpisodeResult& a, const EpisodeResult& b);

} // namespace rflight
