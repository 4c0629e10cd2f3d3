#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "crossuda/layers.hpp"
#include "crossuda/volume.hpp"

namespace crossuda {

// ---------------------------------------------------------------------------
// flat parameter collections (the checkpoint / EMA currency)

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  Eigen::ArrayXf values;
};

struct ModelParams {
  std::vector<NamedTensor> tensors;

  int64_t total_values() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += t.values.size();
    return n;
  }
  bool same_layout(const ModelParams& o) const {
    if (tensors.size() != o.tensors.size()) return false;
    for (size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].name != o.tensors[i].name || tensors[i].shape != o.tensors[i].shape)
        return false;
    return true;
  }
};

/// theta' <- alpha * theta' + (1 - alpha) * theta, every parameter.
ModelParams ema_update(const ModelParams& teacher, const ModelParams& student,
                       double alpha);

template <class S>
ModelParams snapshot(const ad::ParamRegistry<S>& reg) {
  ModelParams p;
  p.tensors.reserve(reg.entries.size());
  for (const auto& [name, v] : reg.entries) {
    NamedTensor t;
    t.name = name;
    t.shape = v.shape();
    t.values = v.value().data.template cast<float>();
    p.tensors.push_back(std::move(t));
  }
  return p;
}

template <class S>
void load_params(ad::ParamRegistry<S>& reg, const ModelParams& p) {
  require(p.tensors.size() == reg.entries.size(), ErrorKind::argument,
          "parameter count mismatch");
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    auto& [name, v] = reg.entries[i];
    require(p.tensors[i].name == name && p.tensors[i].shape == v.shape(),
            ErrorKind::argument, "parameter name/shape mismatch at " + name);
    v.value().data = p.tensors[i].values.cast<S>();
  }
}

// ---------------------------------------------------------------------------
// checkpoint archive: "CKPT1\n", u64 header length, JSON header (schema,
// kind, epoch, config echo, tensor directory), then raw f32 payloads.

struct Checkpoint {
  int schema = 1;
  std::string kind;
  int epoch = 0;
  nlohmann::json config;
  ModelParams params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Student/teacher pair plus opaque optimizer state, stored in one archive
/// with name prefixes.
struct CheckpointPair {
  ModelParams student;
  ModelParams teacher;
  int epoch = 0;
  ModelParams optimizer_state;
};

void save_checkpoint_pair(const CheckpointPair& pair, const nlohmann::json& config,
                          const std::filesystem::path& path);
CheckpointPair load_checkpoint_pair(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// network configurations

struct UNetConfig {
  int in_channels = 1;
  int n_classes = 3;
  int n_levels = 5;
  int base_channels = 8;
  int n_output_scales = 5;
  int max_channels = 128;
  double dropout_p = 0.1;

  void validate() const {
    require(n_output_scales >= 1 && n_output_scales <= n_levels, ErrorKind::config,
            "n_output_scales must be in [1, n_levels]");
    require(in_channels >= 1 && n_classes >= 2 && base_channels >= 1, ErrorKind::config,
            "bad UNetConfig");
    require(dropout_p >= 0 && dropout_p < 1, ErrorKind::config, "bad dropout_p");
  }
  int channels_at(int level) const {
    return std::min(base_channels << level, max_channels);
  }
};

struct GeneratorConfig {
  int in_channels = 1;
  int n_downsamples = 2;
  int n_res_blocks = 4;
  int base_channels = 16;
  std::vector<int> nce_tap_layers{0, 1, 2, 4};
  std::vector<int> seg_tap_layers{6, 1};  // (bottleneck, pre-final-downsample)

  int n_encoder_layers() const { return 1 + n_downsamples + n_res_blocks; }
  void validate() const {
    require(in_channels == 1, ErrorKind::config, "generator expects 1 channel");
    require(n_downsamples >= 1 && n_res_blocks >= 1 && base_channels >= 1,
            ErrorKind::config, "bad GeneratorConfig");
    for (int t : nce_tap_layers)
      require(t >= 0 && t < n_encoder_layers(), ErrorKind::config,
              "nce tap layer out of range");
    require(seg_tap_layers.size() == 2, ErrorKind::config,
            "seg_tap_layers must name exactly 2 layers");
    for (int t : seg_tap_layers)
      require(t >= 0 && t < n_encoder_layers(), ErrorKind::config,
              "seg tap layer out of range");
  }
  /// Default taps for a given depth: bottleneck and the activation feeding
  /// the last downsample.
  void set_default_taps() {
    seg_tap_layers = {n_encoder_layers() - 1, n_downsamples - 1};
    nce_tap_layers = {0, 1, 2, std::min(4, n_encoder_layers() - 1)};
  }
};

struct DiscriminatorConfig {
  int base_channels = 16;
};

/// Channel count of an encoder layer's output, from the config alone.
inline int generator_encoder_channels(const GeneratorConfig& cfg, int layer) {
  if (layer == 0) return cfg.base_channels;
  if (layer <= cfg.n_downsamples) return cfg.base_channels << layer;
  return cfg.base_channels << cfg.n_downsamples;
}

// ---------------------------------------------------------------------------
// multi-scale 3D U-Net (encoder/decoder with skips, deep-supervision heads)

template <class S>
class UNet3d {
public:
  UNet3d(UNetConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed_combine(seed, "unet3d"));
    const int L = cfg_.n_levels;
    enc_.resize(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
      const int cin = l == 0 ? cfg_.in_channels : cfg_.channels_at(l - 1);
      const int ch = cfg_.channels_at(l);
      const std::string p = "enc" + std::to_string(l);
      enc_[l].conv1 = ad::Conv3dLayer<S>(reg_, p + ".conv1", cin, ch, 3, l == 0 ? 1 : 2,
                                         1, ad::WeightInit::he, rng);
      enc_[l].norm1 = ad::InstanceNormLayer<S>(reg_, p + ".norm1", ch);
      enc_[l].conv2 =
          ad::Conv3dLayer<S>(reg_, p + ".conv2", ch, ch, 3, 1, 1, ad::WeightInit::he, rng);
      enc_[l].norm2 = ad::InstanceNormLayer<S>(reg_, p + ".norm2", ch);
    }
    dec_.resize(static_cast<size_t>(L - 1));
    for (int l = L - 2; l >= 0; --l) {
      const int ch = cfg_.channels_at(l);
      const int ch_below = cfg_.channels_at(l + 1);
      const std::string p = "dec" + std::to_string(l);
      dec_[l].up = ad::ConvTranspose3dLayer<S>(reg_, p + ".up", ch_below, ch,
                                               ad::WeightInit::he, rng);
      dec_[l].conv1 = ad::Conv3dLayer<S>(reg_, p + ".conv1", 2 * ch, ch, 3, 1, 1,
                                         ad::WeightInit::he, rng);
      dec_[l].norm1 = ad::InstanceNormLayer<S>(reg_, p + ".norm1", ch);
      dec_[l].conv2 =
          ad::Conv3dLayer<S>(reg_, p + ".conv2", ch, ch, 3, 1, 1, ad::WeightInit::he, rng);
      dec_[l].norm2 = ad::InstanceNormLayer<S>(reg_, p + ".norm2", ch);
    }
    heads_.resize(static_cast<size_t>(cfg_.n_output_scales));
    for (int s = 0; s < cfg_.n_output_scales; ++s) {
      const bool from_bottleneck = s == L - 1;
      const int ch = cfg_.channels_at(from_bottleneck ? L - 1 : s);
      heads_[s] = ad::Conv3dLayer<S>(reg_, "head" + std::to_string(s), ch,
                                     cfg_.n_classes, 1, 1, 0, ad::WeightInit::he, rng);
    }
  }

  UNet3d(const UNet3d&) = delete;
  UNet3d& operator=(const UNet3d&) = delete;

  const UNetConfig& config() const { return cfg_; }
  ad::ParamRegistry<S>& params() { return reg_; }
  const ad::ParamRegistry<S>& params() const { return reg_; }

  /// Returns n_output_scales logit maps, full resolution first, scale s at
  /// 1/2^s of the input. train_mode=false disables dropout (deterministic).
  std::vector<ad::Var<S>> forward(const ad::Var<S>& x, Rng& rng, bool train_mode) {
    const auto& xs = x.shape();
    require(xs.size() == 5 && xs[1] == cfg_.in_channels, ErrorKind::argument,
            "unet3d: input must be [B, in_ch, Z, Y, X]");
    const int div = 1 << (cfg_.n_levels - 1);
    require(xs[2] % div == 0 && xs[3] % div == 0 && xs[4] % div == 0,
            ErrorKind::argument,
            "unet3d: spatial dims must be divisible by " + std::to_string(div));

    const int L = cfg_.n_levels;
    std::vector<ad::Var<S>> skips(static_cast<size_t>(L));
    ad::Var<S> h = x;
    for (int l = 0; l < L; ++l) {
      h = ad::leaky_relu(enc_[l].norm1(enc_[l].conv1(h)));
      h = ad::leaky_relu(enc_[l].norm2(enc_[l].conv2(h)));
      h = ad::dropout(h, cfg_.dropout_p, rng, train_mode);
      skips[l] = h;
    }
    std::vector<ad::Var<S>> features(static_cast<size_t>(L));
    features[L - 1] = skips[L - 1];
    for (int l = L - 2; l >= 0; --l) {
      ad::Var<S> u = dec_[l].up(features[l + 1]);
      u = ad::concat_channels(u, skips[l]);
      u = ad::leaky_relu(dec_[l].norm1(dec_[l].conv1(u)));
      u = ad::leaky_relu(dec_[l].norm2(dec_[l].conv2(u)));
      u = ad::dropout(u, cfg_.dropout_p, rng, train_mode);
      features[l] = u;
    }
    std::vector<ad::Var<S>> outputs(static_cast<size_t>(cfg_.n_output_scales));
    for (int s = 0; s < cfg_.n_output_scales; ++s)
      outputs[s] = heads_[s](features[s == L - 1 ? L - 1 : s]);
    return outputs;
  }

private:
  struct EncBlock {
    ad::Conv3dLayer<S> conv1, conv2;
    ad::InstanceNormLayer<S> norm1, norm2;
  };
  struct DecBlock {
    ad::ConvTranspose3dLayer<S> up;
    ad::Conv3dLayer<S> conv1, conv2;
    ad::InstanceNormLayer<S> norm1, norm2;
  };

  UNetConfig cfg_;
  ad::ParamRegistry<S> reg_;
  std::vector<EncBlock> enc_;
  std::vector<DecBlock> dec_;
  std::vector<ad::Conv3dLayer<S>> heads_;
};

// ---------------------------------------------------------------------------
// ResNet-style 2D translation generator with encoder taps and a dual-tap
// segmentation decoder head

template <class S>
class ResnetGenerator {
public:
  ResnetGenerator(GeneratorConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed_combine(seed, "generator"));
    const int bc = cfg_.base_channels;

    stem_conv_ = ad::Conv2dLayer<S>(reg_, "enc0.conv", cfg_.in_channels, bc, 7, 1, 3,
                                    ad::WeightInit::gaussian002, rng);
    stem_norm_ = ad::InstanceNormLayer<S>(reg_, "enc0.norm", bc);
    down_.resize(static_cast<size_t>(cfg_.n_downsamples));
    int ch = bc;
    for (int i = 0; i < cfg_.n_downsamples; ++i) {
      const std::string p = "enc" + std::to_string(i + 1);
      down_[i].conv = ad::Conv2dLayer<S>(reg_, p + ".conv", ch, 2 * ch, 3, 2, 1,
                                         ad::WeightInit::gaussian002, rng);
      down_[i].norm = ad::InstanceNormLayer<S>(reg_, p + ".norm", 2 * ch);
      ch *= 2;
    }
    res_.resize(static_cast<size_t>(cfg_.n_res_blocks));
    for (int i = 0; i < cfg_.n_res_blocks; ++i) {
      const std::string p = "enc" + std::to_string(cfg_.n_downsamples + 1 + i);
      res_[i].conv1 =
          ad::Conv2dLayer<S>(reg_, p + ".conv1", ch, ch, 3, 1, 1, ad::WeightInit::gaussian002, rng);
      res_[i].norm1 = ad::InstanceNormLayer<S>(reg_, p + ".norm1", ch);
      res_[i].conv2 =
          ad::Conv2dLayer<S>(reg_, p + ".conv2", ch, ch, 3, 1, 1, ad::WeightInit::gaussian002, rng);
      res_[i].norm2 = ad::InstanceNormLayer<S>(reg_, p + ".norm2", ch);
    }
    up_.resize(static_cast<size_t>(cfg_.n_downsamples));
    for (int i = 0; i < cfg_.n_downsamples; ++i) {
      const std::string p = "dec" + std::to_string(i);
      up_[i].conv = ad::Conv2dLayer<S>(reg_, p + ".conv", ch, ch / 2, 3, 1, 1,
                                       ad::WeightInit::gaussian002, rng);
      up_[i].norm = ad::InstanceNormLayer<S>(reg_, p + ".norm", ch / 2);
      ch /= 2;
    }
    out_conv_ = ad::Conv2dLayer<S>(reg_, "out.conv", ch, 1, 7, 1, 3,
                                   ad::WeightInit::gaussian002, rng);

    // Dual-tap segmentation decoder (SE-CUT head).
    for (int t = 0; t < 2; ++t) {
      const std::string p = "segdec" + std::to_string(t);
      const int tap_ch = encoder_channels(cfg_.seg_tap_layers[t]);
      seg_[t].conv1 = ad::Conv2dLayer<S>(reg_, p + ".conv1", tap_ch, 16, 3, 1, 1,
                                         ad::WeightInit::gaussian002, rng);
      seg_[t].norm1 = ad::InstanceNormLayer<S>(reg_, p + ".norm1", 16);
      seg_[t].conv2 = ad::Conv2dLayer<S>(reg_, p + ".conv2", 16, kNumClasses, 1, 1, 0,
                                         ad::WeightInit::gaussian002, rng);
    }
  }

  ResnetGenerator(const ResnetGenerator&) = delete;
  ResnetGenerator& operator=(const ResnetGenerator&) = delete;

  const GeneratorConfig& config() const { return cfg_; }
  ad::ParamRegistry<S>& params() { return reg_; }
  const ad::ParamRegistry<S>& params() const { return reg_; }

  /// Residual bypass for plumbing tests: translate() returns its input.
  void set_bypass(bool on) { bypass_ = on; }

  int encoder_channels(int layer) const { return generator_encoder_channels(cfg_, layer); }

  /// Spatial downsampling factor of an encoder layer's output.
  int encoder_scale(int layer) const {
    return 1 << std::min(layer, cfg_.n_downsamples);
  }

  struct Forward {
    ad::Var<S> translated;                 // [B,1,H,W] in [0,1]
    std::vector<ad::Var<S>> encoder_acts;  // one per encoder layer
  };

  /// Full pass: encoder activations (for NCE/seg taps) plus translation.
  Forward forward(const ad::Var<S>& x01) {
    const auto& xs = x01.shape();
    require(xs.size() == 4 && xs[1] == 1, ErrorKind::argument,
            "generator: input must be [B,1,H,W]");
    const int div = 1 << cfg_.n_downsamples;
    require(xs[2] % div == 0 && xs[3] % div == 0, ErrorKind::argument,
            "generator: H,W must be divisible by " + std::to_string(div));

    Forward f;
    ad::Var<S> h = ad::affine(x01, S(2), S(-1));  // [0,1] -> [-1,1]
    h = ad::relu(stem_norm_(stem_conv_(h)));
    f.encoder_acts.push_back(h);
    for (auto& d : down_) {
      h = ad::relu(d.norm(d.conv(h)));
      f.encoder_acts.push_back(h);
    }
    for (auto& r : res_) {
      ad::Var<S> y = ad::relu(r.norm1(r.conv1(h)));
      y = r.norm2(r.conv2(y));
      h = ad::add(h, y);
      f.encoder_acts.push_back(h);
    }
    ad::Var<S> g = h;
    for (auto& u : up_) g = ad::relu(u.norm(u.conv(ad::upsample_nearest(g, 2))));
    g = ad::tanh_act(out_conv_(g));
    f.translated = bypass_ ? x01 : ad::affine(g, S(0.5), S(0.5));  // (-1,1) -> [0,1]
    return f;
  }

  ad::Var<S> translate(const ad::Var<S>& x01) { return forward(x01).translated; }

  /// Encoder activations at the NCE tap layers.
  std::vector<ad::Var<S>> nce_features(const Forward& f) const {
    std::vector<ad::Var<S>> feats;
    for (int t : cfg_.nce_tap_layers) feats.push_back(f.encoder_acts[t]);
    return feats;
  }

  /// Two class-logit maps (bottleneck tap, pre-downsample tap), both
  /// upsampled to the input resolution.
  std::array<ad::Var<S>, 2> seg_decode(const Forward& f) {
    std::array<ad::Var<S>, 2> out;
    for (int t = 0; t < 2; ++t) {
      const int layer = cfg_.seg_tap_layers[t];
      ad::Var<S> h = f.encoder_acts[layer];
      h = ad::relu(seg_[t].norm1(seg_[t].conv1(h)));
      h = seg_[t].conv2(h);
      out[t] = ad::upsample_nearest(h, encoder_scale(layer));
    }
    return out;
  }

private:
  struct DownBlock {
    ad::Conv2dLayer<S> conv;
    ad::InstanceNormLayer<S> norm;
  };
  struct ResBlock {
    ad::Conv2dLayer<S> conv1, conv2;
    ad::InstanceNormLayer<S> norm1, norm2;
  };
  struct SegBranch {
    ad::Conv2dLayer<S> conv1, conv2;
    ad::InstanceNormLayer<S> norm1;
  };

  GeneratorConfig cfg_;
  ad::ParamRegistry<S> reg_;
  ad::Conv2dLayer<S> stem_conv_, out_conv_;
  ad::InstanceNormLayer<S> stem_norm_;
  std::vector<DownBlock> down_;
  std::vector<ResBlock> res_;
  std::vector<DownBlock> up_;
  std::array<SegBranch, 2> seg_;
  bool bypass_ = false;
};

// ---------------------------------------------------------------------------
// PatchGAN discriminator: patch-level real/fake score map

template <class S>
class PatchDiscriminator {
public:
  PatchDiscriminator(DiscriminatorConfig cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed_combine(seed, "discriminator"));
    const int bc = cfg.base_channels;
    c1_ = ad::Conv2dLayer<S>(reg_, "d1.conv", 1, bc, 4, 2, 1, ad::WeightInit::gaussian002,
                             rng);
    c2_ = ad::Conv2dLayer<S>(reg_, "d2.conv", bc, 2 * bc, 4, 2, 1,
                             ad::WeightInit::gaussian002, rng);
    n2_ = ad::InstanceNormLayer<S>(reg_, "d2.norm", 2 * bc);
    c3_ = ad::Conv2dLayer<S>(reg_, "d3.conv", 2 * bc, 4 * bc, 4, 1, 1,
                             ad::WeightInit::gaussian002, rng);
    n3_ = ad::InstanceNormLayer<S>(reg_, "d3.norm", 4 * bc);
    c4_ = ad::Conv2dLayer<S>(reg_, "d4.conv", 4 * bc, 1, 4, 1, 1,
                             ad::WeightInit::gaussian002, rng);
  }

  PatchDiscriminator(const PatchDiscriminator&) = delete;
  PatchDiscriminator& operator=(const PatchDiscriminator&) = delete;

  ad::ParamRegistry<S>& params() { return reg_; }

  ad::Var<S> forward(const ad::Var<S>& x01) {
    ad::Var<S> h = ad::affine(x01, S(2), S(-1));
    h = ad::leaky_relu(c1_(h), S(0.2));
    h = ad::leaky_relu(n2_(c2_(h)), S(0.2));
    h = ad::leaky_relu(n3_(c3_(h)), S(0.2));
    return c4_(h);
  }

private:
  DiscriminatorConfig cfg_;
  ad::ParamRegistry<S> reg_;
  ad::Conv2dLayer<S> c1_, c2_, c3_, c4_;
  ad::InstanceNormLayer<S> n2_, n3_;
};

// ---------------------------------------------------------------------------
// PatchNCE projection head: per tap layer, a 2-layer MLP to a unit sphere

template <class S>
class FeatureProjector {
public:
  FeatureProjector(const GeneratorConfig& gen_cfg, int dim, uint64_t seed) : dim_(dim) {
    Rng rng(seed_combine(seed, "projector"));
    for (size_t i = 0; i < gen_cfg.nce_tap_layers.size(); ++i) {
      const int cin = generator_encoder_channels(gen_cfg, gen_cfg.nce_tap_layers[i]);
      const std::string p = "proj" + std::to_string(i);
      mlp1_.push_back(ad::LinearLayer<S>(reg_, p + ".fc1", cin, dim, rng));
      mlp2_.push_back(ad::LinearLayer<S>(reg_, p + ".fc2", dim, dim, rng));
    }
  }

  FeatureProjector(const FeatureProjector&) = delete;
  FeatureProjector& operator=(const FeatureProjector&) = delete;

  ad::ParamRegistry<S>& params() { return reg_; }

  /// [M, C_tap] features -> L2-normalized [M, dim].
  ad::Var<S> project(int tap_index, const ad::Var<S>& feats) {
    ad::Var<S> h = ad::relu(mlp1_[tap_index](feats));
    return ad::l2_normalize_rows(mlp2_[tap_index](h));
  }

  int dim() const { return dim_; }

private:
  int dim_;
  ad::ParamRegistry<S> reg_;
  std::vector<ad::LinearLayer<S>> mlp1_, mlp2_;
};

}  // namespace crossuda
