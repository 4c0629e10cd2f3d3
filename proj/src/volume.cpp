#include "crossuda/volume.hpp"

#include <algorithm>
#include <cmath>

namespace crossuda {

void Volume::validate() const {
  require(nz >= 1 && ny >= 1 && nx >= 1, ErrorKind::argument, "volume dims must be >= 1");
  require(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0, ErrorKind::argument,
          "spacing must be strictly positive");
  require(data.size() == int64_t(nz) * ny * nx, ErrorKind::argument, "data size mismatch");
  require(data.isFinite().all(), ErrorKind::numeric, "volume contains non-finite values");
}

void LabelMask::validate() const {
  require(nz >= 1 && ny >= 1 && nx >= 1, ErrorKind::argument, "mask dims must be >= 1");
  require(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0, ErrorKind::argument,
          "spacing must be strictly positive");
  require(data.size() == int64_t(nz) * ny * nx, ErrorKind::argument, "data size mismatch");
  for (int64_t i = 0; i < data.size(); ++i)
    require(data[i] < kNumClasses, ErrorKind::argument, "mask value out of {0,1,2}");
}

namespace {

std::array<int, 3> resampled_dims(int nz, int ny, int nx, const Spacing& in,
                                  const Spacing& out) {
  auto out_dim = [](int d, double sin, double sout) {
    return std::max(1, static_cast<int>(std::llround(d * sin / sout)));
  };
  return {out_dim(nz, in[0], out[0]), out_dim(ny, in[1], out[1]),
          out_dim(nx, in[2], out[2])};
}

void check_target(const Spacing& t) {
  require(t[0] > 0 && t[1] > 0 && t[2] > 0, ErrorKind::argument,
          "target spacing must be strictly positive");
}

}  // namespace

Volume resample(const Volume& v, const Spacing& target) {
  check_target(target);
  auto [oz, oy, ox] = resampled_dims(v.nz, v.ny, v.nx, v.spacing, target);
  Volume out(oz, oy, ox, target);
  const double fz = target[0] / v.spacing[0];
  const double fy = target[1] / v.spacing[1];
  const double fx = target[2] / v.spacing[2];
  for (int z = 0; z < oz; ++z) {
    const double cz = std::clamp(z * fz, 0.0, double(v.nz - 1));
    const int z0 = static_cast<int>(cz);
    const int z1 = std::min(z0 + 1, v.nz - 1);
    const double wz = cz - z0;
    for (int y = 0; y < oy; ++y) {
      const double cy = std::clamp(y * fy, 0.0, double(v.ny - 1));
      const int y0 = static_cast<int>(cy);
      const int y1 = std::min(y0 + 1, v.ny - 1);
      const double wy = cy - y0;
      for (int x = 0; x < ox; ++x) {
        const double cx = std::clamp(x * fx, 0.0, double(v.nx - 1));
        const int x0 = static_cast<int>(cx);
        const int x1 = std::min(x0 + 1, v.nx - 1);
        const double wx = cx - x0;
        const double c00 = v.at(z0, y0, x0) * (1 - wx) + v.at(z0, y0, x1) * wx;
        const double c01 = v.at(z0, y1, x0) * (1 - wx) + v.at(z0, y1, x1) * wx;
        const double c10 = v.at(z1, y0, x0) * (1 - wx) + v.at(z1, y0, x1) * wx;
        const double c11 = v.at(z1, y1, x0) * (1 - wx) + v.at(z1, y1, x1) * wx;
        const double c0 = c00 * (1 - wy) + c01 * wy;
        const double c1 = c10 * (1 - wy) + c11 * wy;
        out.at(z, y, x) = static_cast<float>(c0 * (1 - wz) + c1 * wz);
      }
    }
  }
  return out;
}

LabelMask resample(const LabelMask& m, const Spacing& target) {
  check_target(target);
  auto [oz, oy, ox] = resampled_dims(m.nz, m.ny, m.nx, m.spacing, target);
  LabelMask out(oz, oy, ox, target);
  const double fz = target[0] / m.spacing[0];
  const double fy = target[1] / m.spacing[1];
  const double fx = target[2] / m.spacing[2];
  for (int z = 0; z < oz; ++z) {
    const int sz = std::clamp(static_cast<int>(std::llround(z * fz)), 0, m.nz - 1);
    for (int y = 0; y < oy; ++y) {
      const int sy = std::clamp(static_cast<int>(std::llround(y * fy)), 0, m.ny - 1);
      for (int x = 0; x < ox; ++x) {
        const int sx = std::clamp(static_cast<int>(std::llround(x * fx)), 0, m.nx - 1);
        out.at(z, y, x) = m.at(sz, sy, sx);
      }
    }
  }
  return out;
}

Volume minmax_normalize(const Volume& v) {
  Volume out = v;
  const float lo = v.data.minCoeff();
  const float hi = v.data.maxCoeff();
  if (hi == lo) {
    out.data.setZero();
    return out;
  }
  out.data = (v.data - lo) / (hi - lo);
  return out;
}

namespace {

/// Linearly interpolated percentile of all voxel values.
float percentile_value(const Eigen::ArrayXf& data, double percentile) {
  std::vector<float> sorted(data.data(), data.data() + data.size());
  std::sort(sorted.begin(), sorted.end());
  const double rank = percentile / 100.0 * (sorted.size() - 1);
  const size_t lo = static_cast<size_t>(rank);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = rank - lo;
  return static_cast<float>(sorted[lo] * (1 - w) + sorted[hi] * w);
}

}  // namespace

CropResult percentile_crop(const Volume& v, const LabelMask* mask, double percentile,
                           int size_y, int size_x) {
  require(size_y >= 1 && size_x >= 1, ErrorKind::argument, "crop size must be >= 1");
  require(percentile >= 0 && percentile <= 100, ErrorKind::argument,
          "percentile must be in [0,100]");
  if (mask) require(mask->aligned_with(v), ErrorKind::argument, "mask misaligned with volume");

  const float t = percentile_value(v.data, percentile);
  // Strictly above threshold: for a flat background this keeps the bright
  // structures only, and an all-constant volume yields the fallback path.
  double sum_y = 0, sum_x = 0;
  int64_t n_fg = 0;
  for (int z = 0; z < v.nz; ++z)
    for (int y = 0; y < v.ny; ++y)
      for (int x = 0; x < v.nx; ++x)
        if (v.at(z, y, x) > t) {
          sum_y += y;
          sum_x += x;
          ++n_fg;
        }

  CropResult res;
  int cy, cx;
  if (n_fg == 0) {
    res.centroid_fallback = true;
    cy = v.ny / 2;
    cx = v.nx / 2;
  } else {
    cy = static_cast<int>(std::lround(sum_y / n_fg));
    cx = static_cast<int>(std::lround(sum_x / n_fg));
  }
  res.row0 = cy - size_y / 2;
  res.col0 = cx - size_x / 2;

  res.volume = Volume(v.nz, size_y, size_x, v.spacing);
  if (mask) res.mask = LabelMask(v.nz, size_y, size_x, v.spacing);
  for (int z = 0; z < v.nz; ++z)
    for (int i = 0; i < size_y; ++i) {
      const int sy = res.row0 + i;
      if (sy < 0 || sy >= v.ny) continue;
      for (int j = 0; j < size_x; ++j) {
        const int sx = res.col0 + j;
        if (sx < 0 || sx >= v.nx) continue;
        res.volume.at(z, i, j) = v.at(z, sy, sx);
        if (mask) res.mask->at(z, i, j) = mask->at(z, sy, sx);
      }
    }
  return res;
}

std::vector<Slice2D> slice_volume(const Volume& v, const std::string& case_id) {
  std::vector<Slice2D> slices(static_cast<size_t>(v.nz));
  const int64_t plane = int64_t(v.ny) * v.nx;
  for (int z = 0; z < v.nz; ++z) {
    Slice2D& s = slices[static_cast<size_t>(z)];
    s.ny = v.ny;
    s.nx = v.nx;
    s.source_case_id = case_id;
    s.z_index = z;
    s.data = v.data.segment(z * plane, plane);
  }
  return slices;
}

Volume restack_slices(const std::vector<Slice2D>& slices, const Spacing& spacing) {
  require(!slices.empty(), ErrorKind::argument, "no slices to restack");
  const int ny = slices[0].ny, nx = slices[0].nx;
  const int nz = static_cast<int>(slices.size());
  std::vector<bool> seen(static_cast<size_t>(nz), false);
  for (const auto& s : slices) {
    require(s.ny == ny && s.nx == nx, ErrorKind::argument, "slice shape mismatch");
    require(s.z_index >= 0 && s.z_index < nz, ErrorKind::argument,
            "slice z_index out of range");
    require(!seen[static_cast<size_t>(s.z_index)], ErrorKind::argument,
            "duplicate slice z_index");
    seen[static_cast<size_t>(s.z_index)] = true;
  }
  Volume v(nz, ny, nx, spacing);
  const int64_t plane = int64_t(ny) * nx;
  for (const auto& s : slices) v.data.segment(s.z_index * plane, plane) = s.data;
  return v;
}

}  // namespace crossuda
