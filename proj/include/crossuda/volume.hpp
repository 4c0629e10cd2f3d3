#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossuda/error.hpp"

namespace crossuda {

/// Voxel spacing in mm, (z, y, x) order to match the data layout.
using Spacing = std::array<double, 3>;

/// 3D scalar image, z-major layout (index = (z * ny + y) * nx + x).
struct Volume {
  int nz = 0, ny = 0, nx = 0;
  Spacing spacing{1.0, 1.0, 1.0};
  Eigen::ArrayXf data;

  Volume() = default;
  Volume(int z, int y, int x, Spacing sp = {1.0, 1.0, 1.0})
      : nz(z), ny(y), nx(x), spacing(sp) {
    data = Eigen::ArrayXf::Zero(int64_t(z) * y * x);
  }

  int64_t size() const { return data.size(); }
  int64_t index(int z, int y, int x) const { return (int64_t(z) * ny + y) * nx + x; }
  float& at(int z, int y, int x) { return data[index(z, y, x)]; }
  float at(int z, int y, int x) const { return data[index(z, y, x)]; }

  bool same_geometry(const Volume& o) const {
    return nz == o.nz && ny == o.ny && nx == o.nx && spacing == o.spacing;
  }

  void validate() const;
};

/// 3D integer mask over {0: background, 1: VS, 2: cochlea}, aligned to a Volume.
struct LabelMask {
  int nz = 0, ny = 0, nx = 0;
  Spacing spacing{1.0, 1.0, 1.0};
  Eigen::Array<uint8_t, Eigen::Dynamic, 1> data;

  LabelMask() = default;
  LabelMask(int z, int y, int x, Spacing sp = {1.0, 1.0, 1.0})
      : nz(z), ny(y), nx(x), spacing(sp) {
    data.setZero(int64_t(z) * y * x);
  }

  int64_t size() const { return data.size(); }
  int64_t index(int z, int y, int x) const { return (int64_t(z) * ny + y) * nx + x; }
  uint8_t& at(int z, int y, int x) { return data[index(z, y, x)]; }
  uint8_t at(int z, int y, int x) const { return data[index(z, y, x)]; }

  bool aligned_with(const Volume& v) const {
    return nz == v.nz && ny == v.ny && nx == v.nx && spacing == v.spacing;
  }

  void validate() const;
};

constexpr int kNumClasses = 3;

/// Single xy-plane extracted from a volume.
struct Slice2D {
  int ny = 0, nx = 0;
  Eigen::ArrayXf data;
  std::string source_case_id;
  int z_index = 0;

  float& at(int y, int x) { return data[int64_t(y) * nx + x]; }
  float at(int y, int x) const { return data[int64_t(y) * nx + x]; }
};

/// Trilinear resampling onto a new grid; output dims are
/// round(in_dim * in_spacing / target_spacing), at least 1.
Volume resample(const Volume& v, const Spacing& target_spacing);

/// Nearest-neighbor resampling for label maps (the output value set is a
/// subset of the input value set).
LabelMask resample(const LabelMask& m, const Spacing& target_spacing);

/// (v - min) / (max - min); an all-constant volume maps to all zeros.
Volume minmax_normalize(const Volume& v);

struct CropResult {
  Volume volume;
  std::optional<LabelMask> mask;
  bool centroid_fallback = false;  // empty foreground, window centered on volume
  int row0 = 0, col0 = 0;          // window origin in input coordinates
};

/// Fixed-size xy window centered on the centroid of the voxels above the
/// given intensity percentile, identical for every z slice; clipped to the
/// volume bounds and zero-padded to exactly (size_y, size_x).
CropResult percentile_crop(const Volume& v, const LabelMask* mask, double percentile,
                           int size_y, int size_x);

std::vector<Slice2D> slice_volume(const Volume& v, const std::string& case_id = "");

Volume restack_slices(const std::vector<Slice2D>& slices, const Spacing& spacing);

}  // namespace crossuda
