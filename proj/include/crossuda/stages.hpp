#pragma once

#include <filesystem>

#include "crossuda/dataset.hpp"
#include "crossuda/losses.hpp"
#include "crossuda/metrics.hpp"
#include "crossuda/nets.hpp"

namespace crossuda {

struct PerturbationConfig {
  double noise_sigma = 0.05;
  bool dropout = true;
};

/// Shared hyperparameter block for the three trainings. Paper defaults;
/// desk profiles scale the schedules.
struct TrainConfig {
  uint64_t seed = 17;
  int epochs = 300;
  int batch_size = 2;
  double lr = 0.01;
  double momentum = 0.99;
  double weight_decay = 3e-5;
  double ema_alpha = 0.9;
  int rampup_epochs = 160;
  ConsistencyWeights consistency_weights;
  PerturbationConfig perturbation;
  int k_folds = 5;
  std::string optimizer = "sgd";  // "sgd" | "adam"
  double adam_beta1 = 0.5;
  // desk-scale knobs
  int cases_per_epoch = 0;   // 0 = full pass per epoch
  int slices_per_epoch = 0;  // translation training only
  // PatchNCE
  int nce_patches_per_image = 32;
  double nce_tau = 0.07;
  int nce_proj_dim = 64;
  // acceptance tooling: record per-iteration student snapshots for the
  // offline EMA replay check
  int log_param_history_iters = 0;

  void validate() const {
    require(epochs >= 1, ErrorKind::config, "epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
    require(ema_alpha >= 0 && ema_alpha <= 1, ErrorKind::config,
            "ema_alpha must be in [0,1]");
    require(rampup_epochs >= 1, ErrorKind::config, "rampup_epochs must be >= 1");
    require(k_folds >= 1, ErrorKind::config, "k_folds must be >= 1");
    require(optimizer == "sgd" || optimizer == "adam", ErrorKind::config,
            "optimizer must be sgd or adam");
    require(nce_patches_per_image >= 2, ErrorKind::config,
            "need at least 2 NCE patches per image");
  }
};

// ---------------------------------------------------------------------------
// stage 1: segmentation-enhanced translation

struct SecutResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
};

/// Adversarial + PatchNCE (+ identity NCE, + optional dual-tap segmentation)
/// training of the 2D translation network on z-slices of the preprocessed
/// volumes. Per-epoch scalar losses land in a CSV next to the checkpoint.
SecutResult train_secut(const std::vector<Case>& source_cases,
                        const std::vector<Case>& target_cases,
                        const GeneratorConfig& gen_cfg,
                        const DiscriminatorConfig& disc_cfg, const TrainConfig& cfg,
                        bool use_seg_decoder, const std::filesystem::path& out_dir);

/// Loads the generator (and its config echo) from a translation checkpoint.
std::unique_ptr<ResnetGenerator<float>> load_generator(const std::filesystem::path& ckpt);

/// Slice along z, translate each slice, restack with the original spacing.
Volume translate_volume(ResnetGenerator<float>& gen, const Volume& v);

// ---------------------------------------------------------------------------
// stage 2: intensity augmentation, fold training, pseudo-labeling

enum class IaMode {
  single_copy,  // one copy: VS muted x0.5 AND cochlea intensified x1.5
  two_copies    // alternative reading: one all-muted copy, one all-intensified
};

/// VS voxels scaled by 0.5, cochlea voxels by 1.5, clamped to [0,1],
/// background untouched. The label is unchanged.
Volume intensity_augment(const Volume& v, const LabelMask& m);

/// Applies the augmentation to every labeled case, returning originals plus
/// augmented copies (ids suffixed "_ia"; two suffixes in two_copies mode).
std::vector<Case> augment_cases(const std::vector<Case>& cases,
                                IaMode mode = IaMode::single_copy);

/// Deterministic fold assignment by case-id hash; augmented copies follow
/// their base case. Returns fold index per case.
std::vector<int> fold_assignment(const std::vector<Case>& cases, int k, uint64_t seed);

struct SegmenterResult {
  std::vector<std::filesystem::path> fold_checkpoints;
  std::vector<std::filesystem::path> fold_logs;
};

/// K-fold deep-supervision training of the multi-scale U-Net with SGD and
/// polynomial LR decay; one checkpoint and loss log per fold.
SegmenterResult train_segmenter(const std::vector<Case>& labeled_cases,
                                const UNetConfig& net_cfg, const TrainConfig& cfg,
                                const std::filesystem::path& out_dir,
                                const std::string& ckpt_prefix = "fold");

/// Ensemble-averaged full-resolution softmax over the checkpoints, then
/// voxelwise argmax. Deterministic inference (dropout off).
LabelMask pseudo_label_volume(const std::vector<ModelParams>& models,
                              const UNetConfig& net_cfg, const Volume& v);

std::vector<Case> pseudo_label(const std::vector<std::filesystem::path>& checkpoints,
                               const std::vector<Case>& target_cases,
                               const UNetConfig& net_cfg);

// ---------------------------------------------------------------------------
// stage 3: multi-scale mean teacher

struct MsmtResult {
  std::filesystem::path checkpoint;  // student/teacher pair
  std::filesystem::path loss_log;    // iteration-level CSV with lambda values
  std::filesystem::path param_history;  // empty unless history logging is on
};

/// Mean-teacher training over the mixed labeled + pseudo-labeled pools:
/// supervised deep supervision plus ramped multi-scale consistency between
/// independently perturbed student and teacher forwards; the teacher is the
/// per-iteration EMA of the student.
MsmtResult train_msmt(const std::vector<Case>& labeled_cases,
                      const std::vector<Case>& pseudo_cases, const UNetConfig& net_cfg,
                      const TrainConfig& cfg, bool multiscale_consistency,
                      const std::filesystem::path& out_dir,
                      const std::string& ckpt_name = "pair");

// ---------------------------------------------------------------------------
// prediction

/// Ensemble-average softmax probabilities at full resolution,
/// [n_classes, Z, Y, X]. Exposed separately so post-processing can be tested
/// against injected logits.
Tensor<float> predict_probs(const std::vector<ModelParams>& models,
                            const UNetConfig& net_cfg, const Volume& v);

LabelMask probs_to_mask(const Tensor<float>& probs, const Volume& v);

LabelMask predict(const std::vector<ModelParams>& models, const UNetConfig& net_cfg,
                  const Volume& v, bool postprocess);

}  // namespace crossuda
