#pragma once

#include <array>
#include <filesystem>

#include "crossuda/dataset.hpp"
#include "crossuda/rng.hpp"
#include "crossuda/volume.hpp"

namespace crossuda {

/// Parameters of the synthetic contrast-inverting domain gap.
struct DomainGapConfig {
  double gamma = 1.4;           // exponent on the inverted intensities
  double bias_amplitude = 0.05; // low-frequency additive bias field
};

/// Deterministic two-domain phantom: smooth textured background, one
/// ellipsoidal VS blob (class 1), two lateralized spherical cochlea blobs
/// (class 2). The target domain renders independently drawn anatomy through
/// the domain gap transform, so the domains are unpaired.
struct PhantomConfig {
  uint64_t seed = 17;
  int n_cases = 4;       // training cases per domain
  int n_eval_cases = 0;  // extra held-out target cases (evaluation only)
  std::array<int, 3> dims{32, 64, 64};
  Spacing spacing{1.0, 0.6, 0.6};
  std::array<double, 2> vs_radius_range{4.0, 7.0};
  std::array<double, 2> cochlea_radius_range{1.6, 2.4};
  double noise_sigma = 0.01;
  DomainGapConfig domain_gap;

  void validate() const;
};

/// Stable per-case sub-seed; adding cases never perturbs earlier ones.
uint64_t phantom_case_seed(const PhantomConfig& cfg, int index, Domain domain);

/// Deterministic function of (cfg.seed, index, domain). Target cases carry
/// their ground-truth label in memory; generate_dataset hides it on disk.
Case generate_case(const PhantomConfig& cfg, int index, Domain domain);

/// clamp((1 - v)^gamma + bias + noise, 0, 1). With gamma=1, zero bias and
/// zero noise this is exact contrast inversion.
Volume domain_transform(const Volume& v, const PhantomConfig& cfg, Rng& rng);

struct GeneratedDataset {
  std::filesystem::path manifest_path;       // training cases (labels hidden on target)
  std::filesystem::path eval_manifest_path;  // held-out target cases
  std::filesystem::path eval_gt_dir;         // hidden target labels
};

/// Writes MVOL files, the training manifest (source labeled, target not),
/// an eval manifest for held-out target cases, and the hidden target labels
/// under target_gt_eval_only/.
GeneratedDataset generate_dataset(const PhantomConfig& cfg,
                                  const std::filesystem::path& out_dir,
                                  bool overwrite = false);

}  // namespace crossuda
