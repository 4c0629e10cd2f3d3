#pragma once

#include <array>

#include "crossuda/autodiff.hpp"
#include "crossuda/volume.hpp"

namespace crossuda {

/// Consistency weights by ascending spatial size: coarsest scale 0.05,
/// full resolution 0.5.
struct ConsistencyWeights {
  std::array<double, 5> w{0.05, 0.05, 0.05, 0.4, 0.5};
};

struct RampupSchedule {
  int T = 160;  // epochs
};

struct SegLossWeights {
  std::array<double, 2> secut_seg{1.0, 0.1};  // (bottleneck tap, pre-downsample tap)
};

/// exp(-5 (1 - min(e,T)/T)^2): monotone, 1 from epoch T onward.
inline double rampup_weight(int epoch, const RampupSchedule& sched) {
  require(epoch >= 0, ErrorKind::argument, "rampup: epoch must be >= 0");
  require(sched.T >= 1, ErrorKind::argument, "rampup: T must be >= 1");
  const double t = std::min(epoch, sched.T) / double(sched.T);
  return std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

/// Deep-supervision weights proportional to 2^-s, normalized to sum 1,
/// full resolution first.
inline std::vector<double> deep_supervision_weights(int n_scales) {
  std::vector<double> w(static_cast<size_t>(n_scales));
  double total = 0.0;
  for (int s = 0; s < n_scales; ++s) {
    w[s] = std::pow(2.0, -s);
    total += w[s];
  }
  for (auto& x : w) x /= total;
  return w;
}

namespace losses {

using ad::Var;

/// Mean voxelwise cross-entropy of softmax(logits) against integer labels.
template <class S>
Var<S> cross_entropy(const Var<S>& logits, const Tensor<int32_t>& labels) {
  return ad::softmax_cross_entropy(logits, labels);
}

/// Mean soft Dice over the foreground classes (all classes except 0):
/// dice_c = (2 sum p_c g_c + eps) / (sum p_c + sum g_c + eps).
template <class S>
Var<S> soft_dice_mean(const Var<S>& logits, const Tensor<int32_t>& labels,
                      S eps = S(1e-5)) {
  const int n_ch = logits.shape()[1];
  require(n_ch >= 2, ErrorKind::argument, "soft_dice: need >= 2 classes");
  const int n_batch = logits.shape()[0];
  const int64_t plane = logits.value().tail_count(2);
  require(labels.size() == int64_t(n_batch) * plane, ErrorKind::argument,
          "soft_dice: label size mismatch");

  Var<S> probs = ad::softmax_channels(logits);
  Var<S> acc;
  const Tensor<S> eps_t = Tensor<S>::full({1}, eps);
  for (int c = 1; c < n_ch; ++c) {
    // Constant selectors over the [N, C, spatial] layout: one picks p_c on
    // voxels labeled c, the other picks p_c everywhere.
    Tensor<S> sel_inter(logits.shape());
    Tensor<S> sel_pred(logits.shape());
    double g_count = 0.0;
    for (int b = 0; b < n_batch; ++b) {
      const int32_t* lab = labels.data.data() + int64_t(b) * plane;
      S* si = sel_inter.data.data() + (int64_t(b) * n_ch + c) * plane;
      S* sp = sel_pred.data.data() + (int64_t(b) * n_ch + c) * plane;
      for (int64_t p = 0; p < plane; ++p) {
        sp[p] = S(1);
        if (lab[p] == c) {
          si[p] = S(1);
          g_count += 1.0;
        }
      }
    }
    Var<S> inter = ad::weighted_sum(probs, sel_inter);           // sum p_c g_c
    Var<S> pred_sum = ad::weighted_sum(probs, sel_pred);         // sum p_c
    Var<S> num = ad::add(ad::affine(inter, S(2)), Var<S>::leaf(eps_t));
    Var<S> den = ad::add(ad::affine(pred_sum, S(1), S(g_count)), Var<S>::leaf(eps_t));
    Var<S> dice_c = ad::div(num, den);
    acc = acc.defined() ? ad::add(acc, dice_c) : dice_c;
  }
  return ad::affine(acc, S(1) / S(n_ch - 1));
}

/// Dice + cross-entropy objective: CE + (1 - mean soft dice).
template <class S>
Var<S> dice_ce_loss(const Var<S>& logits, const Tensor<int32_t>& labels,
                    S eps = S(1e-5)) {
  Var<S> ce = cross_entropy(logits, labels);
  Var<S> dice = soft_dice_mean(logits, labels, eps);
  return ad::add(ce, ad::affine(dice, S(-1), S(1)));
}

/// Nearest-neighbor label downsampling by 2^scale along every spatial axis
/// of a [N, spatial...] label tensor.
inline Tensor<int32_t> downsample_labels(const Tensor<int32_t>& labels, int scale,
                                         const std::vector<int>& spatial) {
  if (scale == 0) return labels;
  const int f = 1 << scale;
  const int n_batch = labels.shape[0];
  std::vector<int> out_shape{n_batch};
  for (int d : spatial) out_shape.push_back(d / f);
  Tensor<int32_t> out(out_shape);
  if (spatial.size() == 3) {
    const int Z = spatial[0], Y = spatial[1], X = spatial[2];
    const int oz = Z / f, oy = Y / f, ox = X / f;
    for (int b = 0; b < n_batch; ++b)
      for (int z = 0; z < oz; ++z)
        for (int y = 0; y < oy; ++y)
          for (int x = 0; x < ox; ++x)
            out.data[((int64_t(b) * oz + z) * oy + y) * ox + x] =
                labels.data[((int64_t(b) * Z + int64_t(z) * f) * Y + int64_t(y) * f) * X +
                            int64_t(x) * f];
  } else {
    const int Y = spatial[0], X = spatial[1];
    const int oy = Y / f, ox = X / f;
    for (int b = 0; b < n_batch; ++b)
      for (int y = 0; y < oy; ++y)
        for (int x = 0; x < ox; ++x)
          out.data[(int64_t(b) * oy + y) * ox + x] =
              labels.data[(int64_t(b) * Y + int64_t(y) * f) * X + int64_t(x) * f];
  }
  return out;
}

/// Deep supervision: sum_s u_s * dice_ce(preds_s, labels downsampled to s),
/// preds full resolution first, u proportional to 2^-s normalized to 1.
template <class S>
Var<S> deep_supervision_loss(const std::vector<Var<S>>& preds,
                             const Tensor<int32_t>& labels) {
  require(!preds.empty(), ErrorKind::argument, "deep_supervision: no predictions");
  const auto w = deep_supervision_weights(static_cast<int>(preds.size()));
  const auto& full_shape = preds[0].shape();
  std::vector<int> spatial(full_shape.begin() + 2, full_shape.end());
  Var<S> total;
  for (size_t s = 0; s < preds.size(); ++s) {
    for (size_t d = 0; d < spatial.size(); ++d)
      require(preds[s].shape()[d + 2] == spatial[d] >> s, ErrorKind::argument,
              "deep_supervision: scale mismatch at scale " + std::to_string(s));
    const Tensor<int32_t> lab_s = downsample_labels(labels, static_cast<int>(s), spatial);
    Var<S> term = ad::affine(dice_ce_loss(preds[s], lab_s), S(w[s]));
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

/// Multi-scale MSE between student softmax maps and constant teacher maps.
/// weights_by_scale is indexed like preds (full resolution first) and is the
/// ascending-size weight list reversed; the teacher carries no gradient.
template <class S>
Var<S> consistency_loss(const std::vector<Var<S>>& student_probs,
                        const std::vector<Tensor<S>>& teacher_probs,
                        const std::vector<double>& weights_by_scale) {
  require(student_probs.size() == teacher_probs.size() &&
              student_probs.size() == weights_by_scale.size(),
          ErrorKind::argument, "consistency: scale count mismatch");
  Var<S> total;
  for (size_t s = 0; s < student_probs.size(); ++s) {
    require(student_probs[s].shape() == teacher_probs[s].shape, ErrorKind::argument,
            "consistency: shape mismatch at scale " + std::to_string(s));
    Var<S> term = ad::affine(ad::mean_square_diff(student_probs[s], teacher_probs[s]),
                             S(weights_by_scale[s]));
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

/// Weights for n scales (full resolution first) from the ascending-size
/// consistency weight list.
inline std::vector<double> consistency_weights_by_scale(const ConsistencyWeights& cw,
                                                        int n_scales) {
  require(n_scales == static_cast<int>(cw.w.size()), ErrorKind::argument,
          "consistency weights expect 5 scales");
  std::vector<double> by_scale(cw.w.rbegin(), cw.w.rend());
  return by_scale;
}

/// PatchNCE: cross-entropy of softmax([q*pos/tau, q*neg_j/tau]) against the
/// positive, averaged over queries. Features must be projected and
/// L2-normalized.
template <class S>
Var<S> patchnce_loss(const Var<S>& queries, const Var<S>& positives,
                     const Var<S>& negatives, S tau = S(0.07)) {
  return ad::info_nce(queries, positives, negatives, tau);
}

/// Least-squares GAN losses over patch score maps.
template <class S>
Var<S> lsgan_d_loss(const Var<S>& real_scores, const Var<S>& fake_scores) {
  return ad::add(ad::mean_square_to(real_scores, S(1)), ad::mean_square_to(fake_scores, S(0)));
}

template <class S>
Var<S> lsgan_g_loss(const Var<S>& fake_scores) {
  return ad::mean_square_to(fake_scores, S(1));
}

/// Dual-tap auxiliary segmentation loss:
/// 1.0 * dice_ce(bottleneck tap) + 0.1 * dice_ce(pre-downsample tap).
template <class S>
Var<S> secut_seg_loss(const std::array<Var<S>, 2>& tap_logits,
                      const Tensor<int32_t>& labels,
                      const SegLossWeights& w = SegLossWeights{}) {
  Var<S> a = ad::affine(dice_ce_loss(tap_logits[0], labels), S(w.secut_seg[0]));
  Var<S> b = ad::affine(dice_ce_loss(tap_logits[1], labels), S(w.secut_seg[1]));
  return ad::add(a, b);
}

}  // namespace losses
}  // namespace crossuda
