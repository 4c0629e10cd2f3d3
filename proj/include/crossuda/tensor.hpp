#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "crossuda/error.hpp"
#include "crossuda/rng.hpp"

namespace crossuda {

/// Dense n-d array in row-major order (last axis fastest), backed by a flat
/// Eigen array. Network data uses the [N, C, spatial...] convention.
template <class S>
struct Tensor {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  std::vector<int> shape;
  Array data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp) : shape(std::move(shp)) {
    data = Array::Zero(count(shape));
  }

  static int64_t count(const std::vector<int>& shp) {
    int64_t n = 1;
    for (int d : shp) {
      require(d >= 0, ErrorKind::argument, "negative tensor dim");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<int> shp, S value) {
    Tensor t(std::move(shp));
    t.data.setConstant(value);
    return t;
  }

  static Tensor from(std::vector<int> shp, std::initializer_list<S> vals) {
    Tensor t(std::move(shp));
    require(static_cast<int64_t>(vals.size()) == t.size(), ErrorKind::argument,
            "initializer size mismatch");
    int64_t i = 0;
    for (S v : vals) t.data[i++] = v;
    return t;
  }

  static Tensor randn(std::vector<int> shp, Rng& rng, S mean = 0, S sigma = 1) {
    Tensor t(std::move(shp));
    for (int64_t i = 0; i < t.size(); ++i)
      t.data[i] = static_cast<S>(rng.normal(mean, sigma));
    return t;
  }

  int64_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  /// Product of dims from axis `from` onward.
  int64_t tail_count(int from) const {
    int64_t n = 1;
    for (size_t i = static_cast<size_t>(from); i < shape.size(); ++i) n *= shape[i];
    return n;
  }

  S& operator[](int64_t i) { return data[i]; }
  S operator[](int64_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data = data.template cast<T>();
    return out;
  }

  bool all_finite() const { return data.isFinite().all(); }
};

inline std::string shape_str(const std::vector<int>& shp) {
  std::string s = "(";
  for (size_t i = 0; i < shp.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shp[i]);
  }
  return s + ")";
}

}  // namespace crossuda
