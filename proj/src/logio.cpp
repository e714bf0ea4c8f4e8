#include "rflight/logio.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rflight {

namespace {

using nlohmann::json;

std::string d17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json spec_to_json(const AttackSpec& s) {
    json j;
    j["sensor"] = sensor_name(s.sensor);
    j["pattern"] = pattern_name(s.pattern);
    j["magnitude"] = s.magnitude;
    j["freq_hz"] = s.freq_hz;
    j["start_time"] = s.start_time;
    j["duration"] = s.duration;
    j["seed"] = s.seed;
    j["channels"] = s.channels;
    j["signs"] = s.signs;
    j["redraw_dt"] = s.redraw_dt;
    j["held_random"] = s.held_random;
    return j;
}

AttackSpec spec_from_json(const json& j) {
    AttackSpec s;
    s.sensor = sensor_from_name(j.at("sensor").get<std::string>());
    const std::string pat = j.at("pattern").get<std::string>();
    if (pat == "drift")
        s.pattern = BiasPattern::Drift;
    else if (pat == "oscillatory")
        s.pattern = BiasPattern::Oscillatory;
    else if (pat == "random")
        s.pattern = BiasPattern::Random;
    else
        throw ConfigError("episode log: unknown bias pattern '" + pat + "'");
    s.magnitude = j.at("magnitude").get<double>();
    s.freq_hz = j.at("freq_hz").get<double>();
    s.start_time = j.at("start_time").get<double>();
    s.duration = j.at("duration").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.channels = j.at("channels").get<std::vector<int>>();
    s.signs = j.at("signs").get<std::vector<double>>();
    s.redraw_dt = j.at("redraw_dt").get<double>();
    s.held_random = j.at("held_random").get<bool>();
    return s;
}

constexpr const char* kEpisodeHeader = "# rflight-episode v1";
constexpr const char* kColumns =
    "t,px,py,pz,vx,vy,vz,roll,pitch,yaw,p,q,r,"
    "ox,oy,oz,ovx,ovy,ovz,oroll,opitch,oyaw,op,oq,or,"
    "refx,refy,refz,a0,a1,a2,a3,reward,attack_active,safe";
constexpr int kNumCols = 35;

} // namespace

std::string attack_specs_to_json(const std::vector<AttackSpec>& specs) {
    json arr = json::array();
    for (const auto& s : specs) arr.push_back(spec_to_json(s));
    return arr.dump();
}

std::vector<AttackSpec> attack_specs_from_json(const std::string& json_text) {
    std::vector<AttackSpec> out;
    for (const auto& j : json::parse(json_text)) out.push_back(spec_from_json(j));
    return out;
}

void write_episode_csv(const std::string& path, const EpisodeResult& episode,
                       std::uint64_t config_fingerprint) {
    std::ofstream os(path);
    if (!os) throw MissingArtifactError("episode log: cannot open for write: " + path);
    json meta;
    meta["controller"] = episode.controller_id;
    meta["episode_id"] = episode.episode_id;
    meta["seed"] = episode.seed;
    meta["config_fingerprint"] = config_fingerprint;
    meta["outcome"] = outcome_name(episode.outcome);
    meta["final_goal_distance"] = episode.final_goal_distance;
    meta["total_reward"] = episode.total_reward;
    meta["attacks"] = json::parse(attack_specs_to_json(episode.attacks));
    if (episode.drift) {
        meta["drift"] = {{"sensor", sensor_name(episode.drift->sensor)},
                         {"mean", episode.drift->mean},
                         {"stddev", episode.drift->stddev},
                         {"steps", episode.drift->steps}};
    }
    os << kEpisodeHeader << "\n";
    os << "# meta " << meta.dump() << "\n";
    os << kColumns << "\n";
    for (const auto& st : episode.steps) {
        os << d17(st.t);
        for (int i = 0; i < 3; ++i) os << "," << d17(st.state.pos[i]);
        for (int i = 0; i < 3; ++i) os << "," << d17(st.state.vel[i]);
        for (int i = 0; i < 3; ++i) os << "," << d17(st.state.ang[i]);
        for (int i = 0; i < 3; ++i) os << "," << d17(st.state.rates[i]);
        for (int i = 0; i < kObsDim; ++i) os << "," << d17(st.obs.v[static_cast<std::size_t>(i)]);
        for (int i = 0; i < 3; ++i) os << "," << d17(st.ref[i]);
        for (int i = 0; i < kActionDim; ++i)
            os << "," << d17(st.action[static_cast<std::size_t>(i)]);
        os << "," << d17(st.reward);
        os << "," << (st.attack_active ? 1 : 0);
        os << "," << (st.safe ? 1 : 0);
        os << "\n";
    }
    if (!os) throw MissingArtifactError("episode log: write failed: " + path);
}

EpisodeLogFile read_episode_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MissingArtifactError("episode log: missing file: " + path);
    std::string line;
    if (!std::getline(is, line) || line != kEpisodeHeader)
        throw MissingArtifactError("episode log: bad header in " + path);
    if (!std::getline(is, line) || line.rfind("# meta ", 0) != 0)
        throw MissingArtifactError("episode log: missing meta line in " + path);
    const json meta = json::parse(line.substr(7));

    EpisodeLogFile out;
    out.config_fingerprint = meta.at("config_fingerprint").get<std::uint64_t>();
    EpisodeResult& ep = out.episode;
    ep.controller_id = meta.at("controller").get<std::string>();
    ep.episode_id = meta.at("episode_id").get<int>();
    ep.seed = meta.at("seed").get<std::uint64_t>();
    ep.final_goal_distance = meta.at("final_goal_distance").get<double>();
    ep.total_reward = meta.at("total_reward").get<double>();
    const std::string oc = meta.at("outcome").get<std::string>();
    ep.outcome = oc == "success" ? Outcome::Success
                                 : (oc == "crash" ? Outcome::Crash : Outcome::Failure);
    ep.attacks = attack_specs_from_json(meta.at("attacks").dump());
    if (meta.contains("drift")) {
        DriftStats d;
        d.sensor = sensor_from_name(meta["drift"].at("sensor").get<std::string>());
        d.mean = meta["drift"].at("mean").get<double>();
        d.stddev = meta["drift"].at("stddev").get<double>();
        d.steps = meta["drift"].at("steps").get<int>();
        ep.drift = d;
    }

    if (!std::getline(is, line) || line != kColumns)
        throw MissingArtifactError("episode log: column header mismatch in " + path);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> f;
        f.reserve(kNumCols);
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(std::strtod(cell.c_str(), nullptr));
        if (static_cast<int>(f.size()) != kNumCols)
            throw MissingArtifactError("episode log: malformed row in " + path);
        StepLog st;
        std::size_t k = 0;
        st.t = f[k++];
        for (int i = 0; i < 3; ++i) st.state.pos[i] = f[k++];
        for (int i = 0; i < 3; ++i) st.state.vel[i] = f[k++];
        for (int i = 0; i < 3; ++i) st.state.ang[i] = f[k++];
        for (int i = 0; i < 3; ++i) st.state.rates[i] = f[k++];
        st.state.t = st.t;
        for (int i = 0; i < kObsDim; ++i) st.obs.v[static_cast<std::size_t>(i)] = f[k++];
        for (int i = 0; i < 3; ++i) st.ref[i] = f[k++];
        for (int i = 0; i < kActionDim; ++i) st.action[static_cast<std::size_t>(i)] = f[k++];
        st.reward = f[k++];
        st.attack_active = f[k++] != 0.0;
        st.safe = f[k++] != 0.0;
        ep.steps.push_back(st);
    }
    return out;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::ofstream os(path);
    if (!os) throw MissingArtifactError("curve log: cannot open for write: " + path);
    os << "# rflight-curve v1\n";
    os << "timestep,mean_episode_reward,std_episode_reward,clip_fraction,"
          "teacher_loss,teacher_recon,teacher_kl,teacher_cls,teacher_accuracy\n";
    for (const auto& p : curve) {
        os << p.timestep << "," << d17(p.mean_episode_reward) << "," << d17(p.std_episode_reward)
           << "," << d17(p.clip_fraction) << "," << d17(p.teacher_loss) << ","
           << d17(p.teacher_recon) << "," << d17(p.teacher_kl) << "," << d17(p.teacher_cls)
           << "," << d17(p.teacher_accuracy) << "\n";
    }
}

void write_summary_json(const std::string& path, const std::vector<MetricsSummary>& summaries,
                        std::uint64_t config_fingerprint, std::uint64_t seed) {
    json root;
    root["config_fingerprint"] = config_fingerprint;
    root["seed"] = seed;
    json arr = json::array();
    for (const auto& m : summaries) {
        json j;
        j["controller"] = m.controller_id;
        j["scenario"] = m.scenario_id;
        j["episodes"] = m.episodes;
        j["success_rate"] = m.success_rate;
        j["failure_rate"] = m.failure_rate;
        j["crash_rate"] = m.crash_rate;
        j["mean_reward"] = m.mean_reward;
        if (m.drift_mean) {
            j["drift_mean"] = *m.drift_mean;
            j["drift_std"] = *m.drift_std;
            j["drift_median"] = m.median_drift;
        }
        arr.push_back(j);
    }
    root["summaries"] = arr;
    std::ofstream os(path);
    if (!os) throw MissingArtifactError("summary: cannot open for write: " + path);
    os << root.dump(2) << "\n";
}

bool episodes_bit_identical(const EpisodeResult& a, const EpisodeResult& b) {
    if (a.steps.size() != b.steps.size()) return false;
    auto same = [](double x, double y) {
        return std::memcmp(&x, &y, sizeof(double)) == 0;
    };
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        const StepLog& s = a.steps[i];
        const StepLog& t = b.steps[i];
        if (!same(s.t, t.t) || !same(s.reward, t.reward)) return false;
        for (int k = 0; k < 3; ++k)
            if (!same(s.state.pos[k], t.state.pos[k]) || !same(s.state.vel[k], t.state.vel[k]) ||
                !same(s.state.ang[k], t.state.ang[k]) || !same(s.state.rates[k], t.state.rates[k]) ||
                !same(s.ref[k], t.ref[k]))
                return false;
        for (int k = 0; k < kObsDim; ++k)
            if (!same(s.obs.v[static_cast<std::size_t>(k)], t.obs.v[static_cast<std::size_t>(k)]))
                return false;
        for (int k = 0; k < kActionDim; ++k)
            if (!same(s.action[static_cast<std::size_t>(k)], t.action[static_cast<std::size_t>(k)]))
                return false;
        if (s.attack_active != t.attack_active || s.safe != t.safe) return false;
    }
    return true;
}

} // namespace rflight
