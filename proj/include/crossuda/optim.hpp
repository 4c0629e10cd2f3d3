#pragma once

#include "crossuda/layers.hpp"
#include "crossuda/nets.hpp"

namespace crossuda::ad {

/// SGD with (optionally Nesterov) momentum, decoupled-from-nothing L2 weight
/// decay folded into the gradient, matching the common segmentation recipe.
template <class S>
class Sgd {
public:
  Sgd(S momentum, S weight_decay, bool nesterov = true)
      : momentum_(momentum), weight_decay_(weight_decay), nesterov_(nesterov) {}

  void step(ParamRegistry<S>& reg, S lr) {
    if (velocity_.empty())
      for (auto& [name, v] : reg.entries) velocity_.push_back(Tensor<S>::zeros(v.shape()));
    require(velocity_.size() == reg.entries.size(), ErrorKind::argument,
            "optimizer/param count mismatch");
    for (size_t i = 0; i < reg.entries.size(); ++i) {
      auto& v = reg.entries[i].second;
      Eigen::Array<S, Eigen::Dynamic, 1> g =
          v.grad().data + weight_decay_ * v.value().data;
      velocity_[i].data = momentum_ * velocity_[i].data + g;
      if (nesterov_)
        v.value().data -= lr * (g + momentum_ * velocity_[i].data);
      else
        v.value().data -= lr * velocity_[i].data;
    }
  }

  /// State export for checkpoints, names aligned with the registry.
  ModelParams state(const ParamRegistry<S>& reg) const {
    ModelParams p;
    for (size_t i = 0; i < velocity_.size(); ++i) {
      NamedTensor t;
      t.name = reg.entries[i].first + ".vel";
      t.shape = velocity_[i].shape;
      t.values = velocity_[i].data.template cast<float>();
      p.tensors.push_back(std::move(t));
    }
    return p;
  }

  void load_state(const ParamRegistry<S>& reg, const ModelParams& p) {
    if (p.tensors.empty()) return;
    require(p.tensors.size() == reg.entries.size(), ErrorKind::argument,
            "optimizer state size mismatch");
    velocity_.clear();
    for (size_t i = 0; i < p.tensors.size(); ++i) {
      Tensor<S> t(p.tensors[i].shape);
      t.data = p.tensors[i].values.cast<S>();
      velocity_.push_back(std::move(t));
    }
  }

private:
  S momentum_, weight_decay_;
  bool nesterov_;
  std::vector<Tensor<S>> velocity_;
};

/// Polynomial decay used by the segmentation trainings: lr0 * (1 - e/E)^0.9.
inline double poly_lr(double lr0, int epoch, int total_epochs, double power = 0.9) {
  const double frac = 1.0 - double(epoch) / double(std::max(1, total_epochs));
  return lr0 * std::pow(std::max(0.0, frac), power);
}

template <class S>
class Adam {
public:
  Adam(S beta1 = S(0.5), S beta2 = S(0.999), S eps = S(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamRegistry<S>& reg, S lr) {
    if (m_.empty()) {
      for (auto& [name, v] : reg.entries) {
        m_.push_back(Tensor<S>::zeros(v.shape()));
        v_.push_back(Tensor<S>::zeros(v.shape()));
      }
    }
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, S(t_));
    const S bc2 = S(1) - std::pow(beta2_, S(t_));
    for (size_t i = 0; i < reg.entries.size(); ++i) {
      auto& v = reg.entries[i].second;
      const auto& g = v.grad().data;
      m_[i].data = beta1_ * m_[i].data + (S(1) - beta1_) * g;
      v_[i].data = beta2_ * v_[i].data + (S(1) - beta2_) * g.square();
      v.value().data -= lr * (m_[i].data / bc1) / ((v_[i].data / bc2).sqrt() + eps_);
    }
  }

private:
  S beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace crossuda::ad
