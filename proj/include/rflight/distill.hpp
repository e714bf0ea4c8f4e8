#pragma once

#include <string>
#include <vector>

#include "rflight/train.hpp"

namespace rflight {

// One aligned supervision tuple captured while the stage-1 controller flies.
struct DistillSample {
    std::vector<double> window;  // history H_t, N * obs_dim normalized observations
    std::vector<double> full_state;  // teacher input S_t at the same step
    std::vector<double> latent_target;  // teacher eval-mode [mu, sigma] (or mu)
    std::array<double, kActionDim> action_target{};  // deterministic policy on the teacher latent
    int label = 0;  // attack class at the step
};

struct DistillDataset {
    std::size_t window_dim = 0;
    std::size_t state_dim = 0;
    std::size_t latent_dim = 0;  // length of latent_target
    std::vector<DistillSample> samples;

    std::vector<std::size_t> label_histogram() const;
    void save(const std::string& path) const;
    static DistillDataset load(const std::string& path);
};

struct DistillConfig {
    long dataset_steps = 200000;
    double holdout_frac = 0.1;
    int epochs = 10;
    int minibatch = 256;
    double lr = 3e-4;
    double recon_weight = 0.1;
    double action_weight = 1.0;
    double cls_weight = 1.0;
    bool latent_mu_only = false;  // match mu alone instead of [mu, sigma]

    void validate() const;
};

// Rolls out the frozen stage-1 controller (deterministic actions) under the
// attack curriculum, recording aligned (H_t, S_t, teacher latent, action).
DistillDataset collect_distill_dataset(const TrainConfig& cfg, const TeacherEncoder& teacher,
                                       PolicyNet& policy, long n_steps, std::uint64_t seed,
                                       const DistillConfig& dcfg);

// Latent-match + action-agreement + attack-classification (+ weighted window
// reconstruction) for one minibatch of student outputs.
Var student_loss(Tape& t, const EncoderOutputs& out, Var latent_target, Var action_target,
                 Var window_target, const std::vector<int>& labels, PolicyNet& policy,
                 const DistillConfig& cfg);

struct DistillEpoch {
    double train_loss = 0.0;
    double holdout_latent_mse = 0.0;       // per-element MSE on [mu, sigma]
    double holdout_action_disagreement = 0.0;  // mean |a(l) - a(l_bar)|_2
    double holdout_cls_accuracy = 0.0;
};

struct DistillResult {
    StudentEncoder student;
    std::vector<DistillEpoch> epochs;
    double teacher_latent_variance = 0.0;  // mean per-element variance of targets (holdout)
};

// Supervised stage-2 training. Teacher and policy stay frozen; their
// checksums are asserted unchanged. Throws NumericError on divergence.
DistillResult train_student(const DistillDataset& dataset, TeacherEncoder& teacher,
                            PolicyNet& policy, const EncoderConfig& enc_cfg,
                            const DistillConfig& cfg, std::uint64_t seed);

} // namespace rflight
