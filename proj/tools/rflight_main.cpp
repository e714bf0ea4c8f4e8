// Command-line driver: two-stage training, distillation, evaluation,
// zero-shot protocols and bit-exact episode replay.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "rflight/checkpoint.hpp"
#include "rflight/config.hpp"
#include "rflight/distill.hpp"
#include "rflight/eval.hpp"
#include "rflight/logio.hpp"

namespace fs = std::filesystem;
using namespace rflight;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitNumeric = 4;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool serial = false;
};

ExperimentConfig load_and_override(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (const char* env_seed = std::getenv("RFLIGHT_SEED"))
        cfg.seed = std::strtoull(env_seed, nullptr, 10);
    if (args.seed) cfg.seed = *args.seed;
    if (args.serial) cfg.eval.parallelism = 1;
    return cfg;
}

std::string make_run_dir(const ExperimentConfig& cfg, const CommonArgs& args) {
    std::string dir = args.out_dir;
    if (dir.empty()) {
        char stamp[32];
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&now, &tm);
        std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
        dir = cfg.out_dir + "/" + stamp + "-seed" + std::to_string(cfg.seed);
    }
    fs::create_directories(dir);
    fs::create_directories(dir + "/episodes");
    std::ofstream os(dir + "/resolved_config.cfg");
    os << cfg.resolved_text();
    return dir;
}

// ---- artifact loading ------------------------------------------------------

TeacherEncoder load_teacher(const ExperimentConfig& cfg, const std::string& dir) {
    const std::string path = dir + "/teacher.ckpt";
    if (!fs::exists(path))
        throw MissingArtifactError("missing " + path +
                                   "; run `rflight train-teacher-policy` first");
    Rng dummy(0);
    TeacherEncoder teacher(kFullStateDim, cfg.encoder_config(), dummy);
    load_checkpoint(path, teacher.named_params(), cfg.fingerprint());
    return teacher;
}

StudentEncoder load_student(const ExperimentConfig& cfg, const std::string& dir) {
    const std::string path = dir + "/student.ckpt";
    if (!fs::exists(path))
        throw MissingArtifactError("missing " + path + "; run `rflight distill` first");
    Rng dummy(0);
    StudentEncoder student(cfg.encoder_config(), dummy);
    load_checkpoint(path, student.named_params(), cfg.fingerprint());
    return student;
}

PolicyNet load_policy(const ExperimentConfig& cfg, const std::string& dir, bool baseline) {
    const std::string path = dir + (baseline ? "/policy_baseline.ckpt" : "/policy_teacher.ckpt");
    const std::string stage = baseline ? "train-baseline" : "train-teacher-policy";
    if (!fs::exists(path))
        throw MissingArtifactError("missing " + path + "; run `rflight " + stage + "` first");
    const std::size_t in_dim =
        baseline ? static_cast<std::size_t>(kObsDim) : cfg.encoder_config().policy_input_dim();
    Rng dummy(0);
    PolicyNet policy(in_dim, cfg.ppo.policy_hidden, cfg.ppo.log_std_init, dummy);
    load_checkpoint(path, policy.named_params(), cfg.fingerprint());
    return policy;
}

void save_stage1(const ExperimentConfig& cfg, const std::string& dir, Stage1Artifacts& art,
                 bool baseline) {
    const std::string suffix = baseline ? "baseline" : "teacher";
    const std::uint64_t fp = cfg.fingerprint();
    const std::uint64_t step = static_cast<std::uint64_t>(art.timesteps);
    if (art.teacher)
        save_checkpoint(dir + "/teacher.ckpt", "teacher", fp, step, art.teacher->named_params());
    save_checkpoint(dir + "/policy_" + suffix + ".ckpt", "policy", fp, step,
                    art.policy.named_params());
    save_checkpoint(dir + "/value_" + suffix + ".ckpt", "value", fp, step,
                    art.value.named_params());
    write_curve_csv(dir + "/curve_" + suffix + ".csv", art.curve);
}

struct LoadedController {
    std::optional<TeacherEncoder> teacher;
    std::optional<StudentEncoder> student;
    PolicyNet policy;
    ControllerFactory factory;
};

LoadedController make_controller(const ExperimentConfig& cfg, const std::string& dir,
                                 const std::string& kind) {
    LoadedController lc;
    const EncoderConfig enc = cfg.encoder_config();
    if (kind == "baseline") {
        lc.policy = load_policy(cfg, dir, true);
        lc.factory = [] { return std::make_unique<BaselineController>(); };
    } else if (kind == "teacher") {
        lc.teacher = load_teacher(cfg, dir);
        lc.policy = load_policy(cfg, dir, false);
        const NormScales norms = cfg.norm_scales();
        const TeacherEncoder* t = &*lc.teacher;
        const bool mu_only = enc.policy_input_mu_only;
        lc.factory = [t, norms, mu_only] {
            return std::make_unique<TeacherLatentController>(*t, norms, mu_only);
        };
    } else if (kind == "student") {
        lc.student = load_student(cfg, dir);
        lc.policy = load_policy(cfg, dir, false);
        const StudentEncoder* s = &*lc.student;
        const bool mu_only = enc.policy_input_mu_only;
        lc.factory = [s, mu_only] {
            return std::make_unique<StudentLatentController>(*s, mu_only);
        };
    } else {
        throw ConfigError("unknown controller '" + kind + "' (baseline|teacher|student)");
    }
    return lc;
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_train(const CommonArgs& common, bool baseline) {
    ExperimentConfig cfg = load_and_override(common);
    const std::string dir = make_run_dir(cfg, common);
    std::cout << (baseline ? "training baseline policy" : "training teacher encoder + policy")
              << " (seed " << cfg.seed << ", " << cfg.ppo.total_steps << " steps) -> " << dir
              << "\n";
    IterationSink sink = [&](const Stage1Artifacts& art, const CurvePoint& pt, bool final) {
        save_stage1(cfg, dir, const_cast<Stage1Artifacts&>(art), baseline);
        std::cout << "  step " << pt.timestep << "  reward " << pt.mean_episode_reward
                  << (final ? "  (final)" : "") << "\n";
    };
    Stage1Artifacts art = train_stage1(cfg.train_config(), cfg.seed, !baseline, sink);
    save_stage1(cfg, dir, art, baseline);
    std::cout << "done; artifacts in " << dir << "\n";
    return kExitOk;
}

int cmd_distill(const CommonArgs& common, const std::string& dataset_in,
                const std::string& dataset_out) {
    ExperimentConfig cfg = load_and_override(common);
    const std::string dir = make_run_dir(cfg, common);
    TeacherEncoder teacher = load_teacher(cfg, dir);
    PolicyNet policy = load_policy(cfg, dir, false);

    DistillDataset data;
    if (!dataset_in.empty()) {
        data = DistillDataset::load(dataset_in);
        std::cout << "loaded dataset: " << data.samples.size() << " samples\n";
    } else {
        std::cout << "collecting " << cfg.distill.dataset_steps << " distillation steps\n";
        data = collect_distill_dataset(cfg.train_config(), teacher, policy,
                                       cfg.distill.dataset_steps, cfg.seed, cfg.distill);
        const std::string out = dataset_out.empty() ? dir + "/distill_dataset.bin" : dataset_out;
        data.save(out);
        std::cout << "dataset saved to " << out << " (" << data.samples.size() << " samples)\n";
    }

    DistillResult res =
        train_student(data, teacher, policy, cfg.encoder_config(), cfg.distill, cfg.seed);
    save_checkpoint(dir + "/student.ckpt", "student", cfg.fingerprint(),
                    static_cast<std::uint64_t>(data.samples.size()), res.student.named_params());
    std::ofstream os(dir + "/distill_metrics.csv");
    os << "epoch,train_loss,holdout_latent_mse,holdout_action_disagreement,holdout_cls_accuracy\n";
    for (std::size_t e = 0; e < res.epochs.size(); ++e) {
        const auto& m = res.epochs[e];
        os << e << "," << m.train_loss << "," << m.holdout_latent_mse << ","
           << m.holdout_action_disagreement << "," << m.holdout_cls_accuracy << "\n";
    }
    const auto& last = res.epochs.back();
    std::cout << "student trained: holdout latent mse " << last.holdout_latent_mse
              << " (teacher latent variance " << res.teacher_latent_variance << ")"
              << ", action disagreement " << last.holdout_action_disagreement << "\n";
    return kExitOk;
}

AttackScenario scenario_from_name(const std::string& name) {
    AttackScenario sc;
    sc.id = name;
    if (name == "none") return sc;
    std::size_t pos = 0;
    while (pos != std::string::npos) {
        const std::size_t plus = name.find('+', pos);
        const std::string part =
            plus == std::string::npos ? name.substr(pos) : name.substr(pos, plus - pos);
        sc.sensors.push_back(sensor_from_name(part));
        pos = plus == std::string::npos ? std::string::npos : plus + 1;
    }
    return sc;
}

int cmd_eval(const CommonArgs& common, const std::string& controller, const std::string& attack,
             int episodes_override, int log_episodes) {
    ExperimentConfig cfg = load_and_override(common);
    const std::string dir = make_run_dir(cfg, common);
    EvalOptions opt = cfg.eval;
    if (episodes_override > 0) opt.episodes = episodes_override;
    if (common.serial) opt.parallelism = 1;

    LoadedController lc = make_controller(cfg, dir, controller);
    const AttackScenario sc = scenario_from_name(attack);
    std::vector<EpisodeResult> episodes;
    MetricsSummary m = evaluate_scenario(cfg.env_config(), cfg.attack_catalog(), sc, lc.factory,
                                         lc.policy, opt, cfg.seed, &episodes);
    for (int i = 0; i < log_episodes && i < static_cast<int>(episodes.size()); ++i)
        write_episode_csv(dir + "/episodes/" + controller + "_" + sc.id + "_" +
                              std::to_string(i) + ".csv",
                          episodes[static_cast<std::size_t>(i)], cfg.fingerprint());
    write_summary_json(dir + "/summary.json", {m}, cfg.fingerprint(), cfg.seed);
    std::cout << controller << " under '" << sc.id << "': success " << m.success_rate
              << ", crash " << m.crash_rate << ", failure " << m.failure_rate;
    if (m.drift_mean) std::cout << ", drift " << *m.drift_mean << " +- " << *m.drift_std;
    std::cout << " (" << m.episodes << " episodes)\n";
    return kExitOk;
}

int cmd_attack_sweep(const CommonArgs& common, const std::string& controller,
                     int episodes_override) {
    ExperimentConfig cfg = load_and_override(common);
    const std::string dir = make_run_dir(cfg, common);
    EvalOptions opt = cfg.eval;
    if (episodes_override > 0) opt.episodes = episodes_override;
    if (common.serial) opt.parallelism = 1;

    LoadedController lc = make_controller(cfg, dir, controller);
    std::vector<MetricsSummary> all;
    for (const char* s : {"gps", "gyro", "accel", "mag", "optflow"}) {
        const AttackScenario sc = scenario_from_name(s);
        all.push_back(evaluate_scenario(cfg.env_config(), cfg.attack_catalog(), sc, lc.factory,
                                        lc.policy, opt, cfg.seed));
        const auto& m = all.back();
        std::cout << s << ": success " << m.success_rate << ", crash " << m.crash_rate;
        if (m.drift_mean) std::cout << ", drift " << *m.drift_mean;
        std::cout << "\n";
    }
    write_summary_json(dir + "/summary.json", all, cfg.fingerprint(), cfg.seed);
    std::cout << "report: " << dir << "/summary.json\n";
    return kExitOk;
}

int cmd_zero_shot(const CommonArgs& common, const std::string& train_sensor,
                  int episodes_override) {
    ExperimentConfig cfg = load_and_override(common);
    const std::string dir = make_run_dir(cfg, common);
    EvalOptions opt = cfg.eval;
    if (episodes_override > 0) opt.episodes = episodes_override;
    if (common.serial) opt.parallelism = 1;

    const SensorId trained = sensor_from_name(train_sensor);
    std::vector<AttackScenario> tests;
    if (trained == SensorId::Gps) {
        tests.push_back(scenario_from_name("gyro"));
        tests.push_back(scenario_from_name("gyro+accel"));
    } else if (trained == SensorId::Gyro) {
        tests.push_back(scenario_from_name("gps"));
        tests.push_back(scenario_from_name("gps+accel"));
    } else {
        throw ConfigError("zero-shot: train sensor must be gps or gyro");
    }

    std::vector<MetricsSummary> all;
    for (const char* kind : {"student", "baseline"}) {
        LoadedController lc = make_controller(cfg, dir, kind);
        auto res = zero_shot_eval(cfg.env_config(), cfg.attack_catalog(), {trained}, tests,
                                  lc.factory, lc.policy, opt, cfg.seed);
        for (auto& m : res) {
            std::cout << kind << " on '" << m.scenario_id << "': success " << m.success_rate
                      << ", crash " << m.crash_rate;
            if (m.drift_mean) std::cout << ", drift " << *m.drift_mean;
            std::cout << "\n";
            all.push_back(std::move(m));
        }
    }
    write_summary_json(dir + "/summary.json", all, cfg.fingerprint(), cfg.seed);
    std::cout << "report: " << dir << "/summary.json\n";
    return kExitOk;
}

int cmd_replay(const CommonArgs& common, const std::string& log_path) {
    ExperimentConfig cfg = load_and_override(common);
    const std::string dir = make_run_dir(cfg, common);
    EpisodeLogFile log = read_episode_csv(log_path);
    if (log.config_fingerprint != cfg.fingerprint())
        throw ConfigError("replay: log was produced under a different config (fingerprint " +
                          std::to_string(log.config_fingerprint) + " vs " +
                          std::to_string(cfg.fingerprint()) + ")");
    LoadedController lc = make_controller(cfg, dir, log.episode.controller_id);
    auto controller = lc.factory();
    EpisodeResult fresh =
        run_episode_with_drift(cfg.env_config(), *controller, lc.policy, log.episode.attacks,
                               log.episode.seed, cfg.eval.deterministic_actions);
    if (!episodes_bit_identical(log.episode, fresh))
        throw NumericError("replay: trajectory differs from the logged episode");
    std::cout << "replay OK: " << log.episode.steps.size() << " steps, outcome "
              << outcome_name(fresh.outcome) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"resilient-flight: attack-resilient latent-state UAV control"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path, "experiment config file")->required();
    std::uint64_t seed_arg = 0;
    auto* seed_opt = app.add_option("--seed", seed_arg, "seed override");
    app.add_option("--out", common.out_dir, "run directory (default: io.out_dir/<stamp>-seed<N>)");
    app.add_flag("--serial", common.serial, "force bitwise-reproducible serial mode");

    auto* train_t =
        app.add_subcommand("train-teacher-policy", "stage 1: teacher encoder + PPO policy");
    auto* train_b = app.add_subcommand("train-baseline", "PPO policy on raw observations");

    auto* distill = app.add_subcommand("distill", "stage 2: distill the student encoder");
    std::string dataset_in, dataset_out;
    distill->add_option("--dataset-in", dataset_in, "reuse a saved distillation dataset");
    distill->add_option("--dataset-out", dataset_out, "where to save the collected dataset");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a controller under a scenario");
    std::string controller = "student", attack = "none";
    int episodes_override = 0, log_episodes = 0;
    eval_cmd->add_option("--controller", controller, "baseline|teacher|student");
    eval_cmd->add_option("--attack", attack, "scenario: none, gps, gyro, ..., gyro+accel");
    eval_cmd->add_option("--episodes", episodes_override, "episodes per seed override");
    eval_cmd->add_option("--log-episodes", log_episodes, "write the first N episode CSVs");

    auto* sweep = app.add_subcommand("attack-sweep", "evaluate across all five sensors");
    std::string sweep_controller = "student";
    int sweep_episodes = 0;
    sweep->add_option("--controller", sweep_controller, "baseline|teacher|student");
    sweep->add_option("--episodes", sweep_episodes, "episodes per seed override");

    auto* zs = app.add_subcommand("zero-shot", "unseen-attack protocol");
    std::string train_sensor = "gps";
    int zs_episodes = 0;
    zs->add_option("--train-sensor", train_sensor, "sensor the artifacts were trained on");
    zs->add_option("--episodes", zs_episodes, "episodes per seed override");

    auto* replay = app.add_subcommand("replay", "re-execute a logged episode bit-exactly");
    std::string log_path;
    replay->add_option("--log", log_path, "episode CSV to replay")->required();

    CLI11_PARSE(app, argc, argv);
    if (!seed_opt->empty()) common.seed = seed_arg;

    try {
        if (train_t->parsed()) return cmd_train(common, false);
        if (train_b->parsed()) return cmd_train(common, true);
        if (distill->parsed()) return cmd_distill(common, dataset_in, dataset_out);
        if (eval_cmd->parsed())
            return cmd_eval(common, controller, attack, episodes_override, log_episodes);
        if (sweep->parsed()) return cmd_attack_sweep(common, sweep_controller, sweep_episodes);
        if (zs->parsed()) return cmd_zero_shot(common, train_sensor, zs_episodes);
        if (replay->parsed()) return cmd_replay(common, log_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
