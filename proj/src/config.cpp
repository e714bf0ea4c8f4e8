#include "rflight/config.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace rflight {

namespace {

constexpr double kDeg = 0.017453292519943295;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& path) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(path + ": expected a number, got '" + v + "'");
    }
}

long parse_long(const std::string& v, const std::string& path) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(path + ": expected an integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& path) {
    try {
        std::size_t pos = 0;
        const unsigned long long d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(path + ": expected an unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& path) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(path + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& path) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) {
        const long n = parse_long(item, path);
        if (n <= 0) throw ConfigError(path + ": sizes must be positive");
        out.push_back(static_cast<std::size_t>(n));
    }
    if (out.empty()) throw ConfigError(path + ": list must not be empty");
    return out;
}

std::string fmt_size_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<SensorId> parse_sensors(const std::string& v, const std::string& path) {
    std::vector<SensorId> out;
    if (trim(v) == "none") return out;
    for (const auto& item : split_list(v)) {
        try {
            const SensorId s = sensor_from_name(item);
            if (s == SensorId::None) throw ConfigError("");
            out.push_back(s);
        } catch (const ConfigError&) {
            throw ConfigError(path + ": unknown sensor '" + item + "'");
        }
    }
    return out;
}

std::string fmt_sensors(const std::vector<SensorId>& v) {
    if (v.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += sensor_name(v[i]);
    }
    return out;
}

struct FieldBinding {
    std::string section;
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

using C = ExperimentConfig;

FieldBinding bind_double(const char* sec, const char* key,
                         std::function<double&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string& p) { ref(c) = parse_double(v, p); },
            [ref](const C& c) { return fmt_double(ref(const_cast<C&>(c))); }};
}

FieldBinding bind_int(const char* sec, const char* key, std::function<int&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string& p) {
                ref(c) = static_cast<int>(parse_long(v, p));
            },
            [ref](const C& c) { return std::to_string(ref(const_cast<C&>(c))); }};
}

FieldBinding bind_long(const char* sec, const char* key, std::function<long&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string& p) { ref(c) = parse_long(v, p); },
            [ref](const C& c) { return std::to_string(ref(const_cast<C&>(c))); }};
}

FieldBinding bind_size(const char* sec, const char* key, std::function<std::size_t&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string& p) {
                const long n = parse_long(v, p);
                if (n <= 0) throw ConfigError(p + ": must be positive");
                ref(c) = static_cast<std::size_t>(n);
            },
            [ref](const C& c) { return std::to_string(ref(const_cast<C&>(c))); }};
}

FieldBinding bind_u64(const char* sec, const char* key, std::function<std::uint64_t&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string& p) { ref(c) = parse_u64(v, p); },
            [ref](const C& c) { return std::to_string(ref(const_cast<C&>(c))); }};
}

FieldBinding bind_bool(const char* sec, const char* key, std::function<bool&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string& p) { ref(c) = parse_bool(v, p); },
            [ref](const C& c) { return ref(const_cast<C&>(c)) ? "true" : "false"; }};
}

FieldBinding bind_string(const char* sec, const char* key, std::function<std::string&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string&) { ref(c) = v; },
            [ref](const C& c) { return ref(const_cast<C&>(c)); }};
}

FieldBinding bind_sizes(const char* sec, const char* key,
                        std::function<std::vector<std::size_t>&(C&)> ref) {
    return {sec, key,
            [ref](C& c, const std::string& v, const std::string& p) { ref(c) = parse_size_list(v, p); },
            [ref](const C& c) { return fmt_size_list(ref(const_cast<C&>(c))); }};
}

#define DREF(expr) [](C& c) -> double& { return expr; }
#define IREF(expr) [](C& c) -> int& { return expr; }
#define LREF(expr) [](C& c) -> long& { return expr; }
#define ZREF(expr) [](C& c) -> std::size_t& { return expr; }
#define BREF(expr) [](C& c) -> bool& { return expr; }

const std::vector<FieldBinding>& bindings() {
    static const std::vector<FieldBinding> b = [] {
        std::vector<FieldBinding> v;
        // [sim]
        v.push_back(bind_double("sim", "mass", DREF(c.uav.mass)));
        v.push_back(bind_double("sim", "arm_length", DREF(c.uav.arm_length)));
        v.push_back(bind_double("sim", "inertia_xx", DREF(c.uav.inertia_xx)));
        v.push_back(bind_double("sim", "inertia_yy", DREF(c.uav.inertia_yy)));
        v.push_back(bind_double("sim", "inertia_zz", DREF(c.uav.inertia_zz)));
        v.push_back(bind_double("sim", "gravity", DREF(c.uav.gravity)));
        v.push_back(bind_double("sim", "torque_coeff", DREF(c.uav.torque_coeff)));
        v.push_back(bind_double("sim", "thrust_max", DREF(c.uav.thrust_max)));
        v.push_back(bind_double("sim", "dt", DREF(c.uav.dt)));
        v.push_back(bind_double("sim", "omega_max", DREF(c.uav.omega_max)));
        v.push_back(bind_double("sim", "rate_ramp_time", DREF(c.uav.rate_ramp_time)));
        v.push_back(bind_double("sim", "floor_z", DREF(c.floor_z)));
        v.push_back(bind_double("sim", "tilt_max_deg", DREF(c.tilt_max_deg)));
        v.push_back(bind_double("sim", "arena_half_extent", DREF(c.arena_half_extent)));
        v.push_back(bind_int("sim", "horizon_steps", IREF(c.horizon_steps)));
        v.push_back(bind_double("sim", "start_x", DREF(c.start[0])));
        v.push_back(bind_double("sim", "start_y", DREF(c.start[1])));
        v.push_back(bind_double("sim", "start_z", DREF(c.start[2])));
        v.push_back(bind_double("sim", "init_noise_pos", DREF(c.init_noise_pos)));
        v.push_back(bind_double("sim", "init_noise_vel", DREF(c.init_noise_vel)));
        v.push_back(bind_double("sim", "goal_min_x", DREF(c.goal_min[0])));
        v.push_back(bind_double("sim", "goal_min_y", DREF(c.goal_min[1])));
        v.push_back(bind_double("sim", "goal_min_z", DREF(c.goal_min[2])));
        v.push_back(bind_double("sim", "goal_max_x", DREF(c.goal_max[0])));
        v.push_back(bind_double("sim", "goal_max_y", DREF(c.goal_max[1])));
        v.push_back(bind_double("sim", "goal_max_z", DREF(c.goal_max[2])));
        v.push_back(bind_double("sim", "goal_radius", DREF(c.goal_radius)));
        v.push_back(bind_double("sim", "safety_radius", DREF(c.safety_radius)));
        v.push_back(bind_double("sim", "transit_time", DREF(c.transit_time)));
        // [attacks]
        v.push_back(bind_double("attacks", "p_none", DREF(c.p_none)));
        v.push_back({"attacks", "allowed_sensors",
                     [](C& c, const std::string& val, const std::string& p) {
                         c.allowed_sensors = parse_sensors(val, p);
                     },
                     [](const C& c) { return fmt_sensors(c.allowed_sensors); }});
        v.push_back(bind_double("attacks", "gps_mag_min", DREF(c.gps_mag_min)));
        v.push_back(bind_double("attacks", "gps_mag_max", DREF(c.gps_mag_max)));
        v.push_back(bind_double("attacks", "gps_dur_cap", DREF(c.gps_dur_cap)));
        v.push_back(bind_double("attacks", "gyro_mag_min_deg", DREF(c.gyro_mag_min_deg)));
        v.push_back(bind_double("attacks", "gyro_mag_max_deg", DREF(c.gyro_mag_max_deg)));
        v.push_back(bind_double("attacks", "gyro_dur_cap", DREF(c.gyro_dur_cap)));
        v.push_back(bind_double("attacks", "accel_mag_min", DREF(c.accel_mag_min)));
        v.push_back(bind_double("attacks", "accel_mag_max", DREF(c.accel_mag_max)));
        v.push_back(bind_double("attacks", "accel_dur_cap", DREF(c.accel_dur_cap)));
        v.push_back(bind_double("attacks", "mag_mag_min_deg", DREF(c.mag_mag_min_deg)));
        v.push_back(bind_double("attacks", "mag_mag_max_deg", DREF(c.mag_mag_max_deg)));
        v.push_back(bind_double("attacks", "mag_dur_cap", DREF(c.mag_dur_cap)));
        v.push_back(bind_double("attacks", "optflow_mag_min", DREF(c.optflow_mag_min)));
        v.push_back(bind_double("attacks", "optflow_mag_max", DREF(c.optflow_mag_max)));
        v.push_back(bind_double("attacks", "optflow_dur_cap", DREF(c.optflow_dur_cap)));
        v.push_back(bind_double("attacks", "dur_min", DREF(c.attack_dur_min)));
        v.push_back(bind_double("attacks", "start_max_frac", DREF(c.attack_start_max_frac)));
        v.push_back(bind_double("attacks", "freq_min", DREF(c.freq_min)));
        v.push_back(bind_double("attacks", "freq_max", DREF(c.freq_max)));
        v.push_back(bind_bool("attacks", "mag_held_random", BREF(c.mag_held_random)));
        // [encoders]
        v.push_back(bind_size("encoders", "latent_dim", ZREF(c.latent_dim)));
        v.push_back(bind_size("encoders", "history_len", ZREF(c.history_len)));
        v.push_back(bind_sizes("encoders", "teacher_hidden",
                               [](C& c) -> std::vector<std::size_t>& { return c.teacher_hidden; }));
        v.push_back(bind_sizes("encoders", "decoder_hidden",
                               [](C& c) -> std::vector<std::size_t>& { return c.decoder_hidden; }));
        v.push_back(bind_size("encoders", "student_hidden", ZREF(c.student_hidden)));
        v.push_back(bind_size("encoders", "student_layers", ZREF(c.student_layers)));
        v.push_back({"encoders", "policy_latent",
                     [](C& c, const std::string& val, const std::string& p) {
                         if (val == "mu_sigma")
                             c.policy_latent_mu_only = false;
                         else if (val == "mu")
                             c.policy_latent_mu_only = true;
                         else
                             throw ConfigError(p + ": expected mu_sigma or mu, got '" + val + "'");
                     },
                     [](const C& c) { return c.policy_latent_mu_only ? "mu" : "mu_sigma"; }});
        v.push_back(bind_double("encoders", "norm_pos", DREF(c.norm_pos)));
        v.push_back(bind_double("encoders", "norm_vel", DREF(c.norm_vel)));
        v.push_back(bind_double("encoders", "norm_ang", DREF(c.norm_ang)));
        v.push_back(bind_double("encoders", "norm_rate", DREF(c.norm_rate)));
        v.push_back(bind_double("encoders", "norm_dur", DREF(c.norm_dur)));
        // [ppo]
        v.push_back(bind_double("ppo", "r_goal", DREF(c.ppo.reward.r_goal)));
        v.push_back(bind_double("ppo", "lambda_goal", DREF(c.ppo.reward.lambda_goal)));
        v.push_back(bind_double("ppo", "alpha_path", DREF(c.ppo.reward.alpha_path)));
        v.push_back(bind_double("ppo", "beta_tilt", DREF(c.ppo.reward.beta_tilt)));
        v.push_back(bind_double("ppo", "gamma_smooth", DREF(c.ppo.reward.gamma_smooth)));
        v.push_back(bind_double("ppo", "discount", DREF(c.ppo.discount)));
        v.push_back(bind_double("ppo", "gae_lambda", DREF(c.ppo.gae_lambda)));
        v.push_back(bind_double("ppo", "clip", DREF(c.ppo.clip)));
        v.push_back(bind_int("ppo", "epochs", IREF(c.ppo.epochs)));
        v.push_back(bind_int("ppo", "minibatch", IREF(c.ppo.minibatch)));
        v.push_back(bind_int("ppo", "rollout_steps", IREF(c.ppo.rollout_steps)));
        v.push_back(bind_double("ppo", "lr", DREF(c.ppo.lr)));
        v.push_back(bind_double("ppo", "entropy_coef", DREF(c.ppo.entropy_coef)));
        v.push_back(bind_double("ppo", "value_coef", DREF(c.ppo.value_coef)));
        v.push_back(bind_double("ppo", "max_grad_norm", DREF(c.ppo.max_grad_norm)));
        v.push_back(bind_long("ppo", "total_steps", LREF(c.ppo.total_steps)));
        v.push_back(bind_sizes("ppo", "policy_hidden",
                               [](C& c) -> std::vector<std::size_t>& { return c.ppo.policy_hidden; }));
        v.push_back(bind_sizes("ppo", "value_hidden",
                               [](C& c) -> std::vector<std::size_t>& { return c.ppo.value_hidden; }));
        v.push_back(bind_double("ppo", "log_std_init", DREF(c.ppo.log_std_init)));
        v.push_back(bind_double("ppo", "teacher_lr", DREF(c.teacher_lr)));
        v.push_back(bind_int("ppo", "teacher_epochs", IREF(c.teacher_epochs)));
        v.push_back(bind_int("ppo", "teacher_minibatch", IREF(c.teacher_minibatch)));
        v.push_back(bind_int("ppo", "checkpoint_every", IREF(c.checkpoint_every)));
        // [distill]
        v.push_back(bind_long("distill", "dataset_steps", LREF(c.distill.dataset_steps)));
        v.push_back(bind_double("distill", "holdout_frac", DREF(c.distill.holdout_frac)));
        v.push_back(bind_int("distill", "epochs", IREF(c.distill.epochs)));
        v.push_back(bind_int("distill", "minibatch", IREF(c.distill.minibatch)));
        v.push_back(bind_double("distill", "lr", DREF(c.distill.lr)));
        v.push_back(bind_double("distill", "recon_weight", DREF(c.distill.recon_weight)));
        v.push_back(bind_double("distill", "action_weight", DREF(c.distill.action_weight)));
        v.push_back(bind_double("distill", "cls_weight", DREF(c.distill.cls_weight)));
        v.push_back({"distill", "latent_match",
                     [](C& c, const std::string& val, const std::string& p) {
                         if (val == "mu_sigma")
                             c.distill.latent_mu_only = false;
                         else if (val == "mu")
                             c.distill.latent_mu_only = true;
                         else
                             throw ConfigError(p + ": expected mu_sigma or mu, got '" + val + "'");
                     },
                     [](const C& c) { return c.distill.latent_mu_only ? "mu" : "mu_sigma"; }});
        // [eval]
        v.push_back(bind_int("eval", "episodes", IREF(c.eval.episodes)));
        v.push_back(bind_int("eval", "seeds", IREF(c.eval.seeds)));
        v.push_back(bind_bool("eval", "deterministic", BREF(c.eval.deterministic_actions)));
        v.push_back(bind_int("eval", "parallelism", IREF(c.eval.parallelism)));
        // [io]
        v.push_back(bind_string("io", "out_dir", [](C& c) -> std::string& { return c.out_dir; }));
        v.push_back(bind_u64("io", "seed", [](C& c) -> std::uint64_t& { return c.seed; }));
        return v;
    }();
    return b;
}

#undef DREF
#undef IREF
#undef LREF
#undef ZREF
#undef BREF

} // namespace

void ExperimentConfig::validate() const {
    train_config().validate();
    distill.validate();
    if (eval.episodes <= 0 || eval.seeds <= 0) throw ConfigError("eval: episodes and seeds must be positive");
    if (eval.parallelism < 1) throw ConfigError("eval.parallelism must be >= 1");
    if (latent_dim == 0) throw ConfigError("encoders.latent_dim must be positive");
    if (history_len == 0) throw ConfigError("encoders.history_len must be positive");
    if (norm_pos <= 0.0 || norm_vel <= 0.0 || norm_ang <= 0.0 || norm_rate <= 0.0 ||
        norm_dur <= 0.0)
        throw ConfigError("encoders: normalization scales must be positive");
}

CrashBounds ExperimentConfig::crash_bounds() const {
    CrashBounds b;
    b.floor_z = floor_z;
    b.tilt_max = tilt_max_deg * kDeg;
    b.arena_half_extent = arena_half_extent;
    return b;
}

AttackCatalog ExperimentConfig::attack_catalog() const {
    AttackCatalog cat;
    cat.gps = {gps_mag_min, gps_mag_max, gps_dur_cap, BiasPattern::Drift};
    cat.gyro = {gyro_mag_min_deg * kDeg, gyro_mag_max_deg * kDeg, gyro_dur_cap,
                BiasPattern::Oscillatory};
    cat.accel = {accel_mag_min, accel_mag_max, accel_dur_cap, BiasPattern::Oscillatory};
    cat.mag = {mag_mag_min_deg * kDeg, mag_mag_max_deg * kDeg, mag_dur_cap, BiasPattern::Random};
    cat.optflow = {optflow_mag_min, optflow_mag_max, optflow_dur_cap, BiasPattern::Random};
    cat.dur_min = attack_dur_min;
    cat.start_max_frac = attack_start_max_frac;
    cat.freq_min = freq_min;
    cat.freq_max = freq_max;
    cat.mag_held_random = mag_held_random;
    return cat;
}

NormScales ExperimentConfig::norm_scales() const {
    NormScales n;
    n.pos = norm_pos;
    n.vel = norm_vel;
    n.ang = norm_ang;
    n.rate = norm_rate;
    n.dur = norm_dur;
    return n;
}

EncoderConfig ExperimentConfig::encoder_config() const {
    EncoderConfig e;
    e.latent_dim = latent_dim;
    e.history_len = history_len;
    e.teacher_hidden = teacher_hidden;
    e.decoder_hidden = decoder_hidden;
    e.student_hidden = student_hidden;
    e.student_layers = student_layers;
    e.policy_input_mu_only = policy_latent_mu_only;
    e.norms = norm_scales();
    return e;
}

EnvConfig ExperimentConfig::env_config() const {
    EnvConfig e;
    e.uav = uav;
    e.crash = crash_bounds();
    e.norms = norm_scales();
    e.reward = ppo.reward;
    e.horizon_steps = horizon_steps;
    e.start = start;
    e.init_noise_pos = init_noise_pos;
    e.init_noise_vel = init_noise_vel;
    e.goal_min = goal_min;
    e.goal_max = goal_max;
    e.goal_radius = goal_radius;
    e.safety_radius = safety_radius;
    e.transit_time = transit_time;
    return e;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.env = env_config();
    t.enc = encoder_config();
    t.ppo = ppo;
    t.catalog = attack_catalog();
    t.allowed_sensors = allowed_sensors;
    t.p_none = p_none;
    t.teacher_lr = teacher_lr;
    t.teacher_epochs = teacher_epochs;
    t.teacher_minibatch = teacher_minibatch;
    t.checkpoint_every = checkpoint_every;
    return t;
}

std::string ExperimentConfig::resolved_text() const {
    std::ostringstream os;
    os << "# resolved experiment configuration\n";
    std::string section;
    for (const auto& b : bindings()) {
        if (b.section != section) {
            section = b.section;
            os << "\n[" << section << "]\n";
        }
        os << b.key << " = " << b.get(*this) << "\n";
    }
    return os.str();
}

std::uint64_t text_fingerprint(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t ExperimentConfig::fingerprint() const { return text_fingerprint(resolved_text()); }

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    static const std::set<std::string> known_sections = {"sim",     "attacks", "encoders",
                                                         "ppo",     "distill", "eval",
                                                         "io"};
    std::map<std::pair<std::string, std::string>, const FieldBinding*> index;
    for (const auto& b : bindings()) index[{b.section, b.key}] = &b;

    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!known_sections.count(section))
                throw ConfigError(where + ": unknown section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(where + ": key '" + key + "' outside any section");
        const std::string path = section + "." + key;
        auto it = index.find({section, key});
        if (it == index.end()) throw ConfigError(where + ": unknown key '" + path + "'");
        if (!seen.insert(path).second)
            throw ConfigError(where + ": duplicate key '" + path + "'");
        it->second->set(cfg, value, path);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path);
}

} // namespace rflight
