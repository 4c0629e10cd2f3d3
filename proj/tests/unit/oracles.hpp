// Independent brute-force oracles used to check the library implementations.
// Everything here is written from the metric definitions directly and stays
// independent of the code paths under test.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "crossuda/metrics.hpp"
#include "crossuda/tensor.hpp"

namespace oracle {

struct Vox {
  int z, y, x;
  bool operator<(const Vox& o) const {
    return std::tie(z, y, x) < std::tie(o.z, o.y, o.x);
  }
};

inline std::set<Vox> mask_voxels(const crossuda::BinaryMask& m) {
  std::set<Vox> out;
  for (int z = 0; z < m.nz; ++z)
    for (int y = 0; y < m.ny; ++y)
      for (int x = 0; x < m.nx; ++x)
        if (m.get(z, y, x)) out.insert({z, y, x});
  return out;
}

inline double dice_oracle(const crossuda::BinaryMask& p, const crossuda::BinaryMask& g) {
  const auto sp = mask_voxels(p);
  const auto sg = mask_voxels(g);
  if (sp.empty() && sg.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& v : sp) inter += sg.count(v);
  return 2.0 * double(inter) / double(sp.size() + sg.size());
}

inline std::set<Vox> surface_oracle(const crossuda::BinaryMask& m) {
  std::set<Vox> surf;
  const auto vox = mask_voxels(m);
  const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (const auto& v : vox) {
    for (const auto& dd : d) {
      const Vox n{v.z + dd[0], v.y + dd[1], v.x + dd[2]};
      const bool inside = n.z >= 0 && n.z < m.nz && n.y >= 0 && n.y < m.ny && n.x >= 0 &&
                          n.x < m.nx && vox.count(n);
      if (!inside) {
        surf.insert(v);
        break;
      }
    }
  }
  return surf;
}

inline std::optional<double> assd_oracle(const crossuda::BinaryMask& p,
                                         const crossuda::BinaryMask& g, bool mm) {
  const auto sp = surface_oracle(p);
  const auto sg = surface_oracle(g);
  if (sp.empty() || sg.empty()) return std::nullopt;
  const double sz = mm ? p.spacing[0] : 1.0;
  const double sy = mm ? p.spacing[1] : 1.0;
  const double sx = mm ? p.spacing[2] : 1.0;
  auto min_dist = [&](const Vox& a, const std::set<Vox>& to) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) {
      const double dz = (a.z - b.z) * sz, dy = (a.y - b.y) * sy, dx = (a.x - b.x) * sx;
      best = std::min(best, std::sqrt(dz * dz + dy * dy + dx * dx));
    }
    return best;
  };
  double total = 0.0;
  for (const auto& a : sp) total += min_dist(a, sg);
  for (const auto& b : sg) total += min_dist(b, sp);
  return total / double(sp.size() + sg.size());
}

/// Exhaustive flood fill, recursion-free, returns components as voxel sets.
inline std::vector<std::set<Vox>> components_oracle(const crossuda::BinaryMask& m) {
  auto remaining = mask_voxels(m);
  std::vector<std::set<Vox>> comps;
  const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!remaining.empty()) {
    std::set<Vox> comp;
    std::vector<Vox> stack{*remaining.begin()};
    remaining.erase(remaining.begin());
    while (!stack.empty()) {
      const Vox v = stack.back();
      stack.pop_back();
      comp.insert(v);
      for (const auto& dd : d) {
        const Vox n{v.z + dd[0], v.y + dd[1], v.x + dd[2]};
        auto it = remaining.find(n);
        if (it != remaining.end()) {
          remaining.erase(it);
          stack.push_back(n);
        }
      }
    }
    comps.push_back(std::move(comp));
  }
  return comps;
}

/// The keep-1-VS / keep-2-cochlea rule applied through the flood-fill oracle.
inline crossuda::LabelMask lcc_oracle(const crossuda::LabelMask& label) {
  crossuda::LabelMask out = label;
  for (int cls = 1; cls <= 2; ++cls) {
    auto comps = components_oracle(crossuda::BinaryMask::from_class(label, cls));
    std::sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
      if (a.size() != b.size()) return a.size() > b.size();
      return *a.begin() < *b.begin();
    });
    const size_t keep = cls == 1 ? 1 : 2;
    for (size_t i = keep; i < comps.size(); ++i)
      for (const auto& v : comps[i]) out.at(v.z, v.y, v.x) = 0;
  }
  return out;
}

/// Trilinear interpolation of a volume at a fractional (z,y,x) coordinate,
/// written out longhand.
inline double trilinear_at(const crossuda::Volume& v, double cz, double cy, double cx) {
  cz = std::clamp(cz, 0.0, double(v.nz - 1));
  cy = std::clamp(cy, 0.0, double(v.ny - 1));
  cx = std::clamp(cx, 0.0, double(v.nx - 1));
  const int z0 = int(cz), y0 = int(cy), x0 = int(cx);
  const int z1 = std::min(z0 + 1, v.nz - 1);
  const int y1 = std::min(y0 + 1, v.ny - 1);
  const int x1 = std::min(x0 + 1, v.nx - 1);
  const double wz = cz - z0, wy = cy - y0, wx = cx - x0;
  double acc = 0.0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dz ? wz : 1 - wz) * (dy ? wy : 1 - wy) * (dx ? wx : 1 - wx);
        acc += w * v.at(dz ? z1 : z0, dy ? y1 : y0, dx ? x1 : x0);
      }
  return acc;
}

/// Central finite differences of a scalar function of a flat tensor.
template <class Fn>
Eigen::ArrayXd numeric_grad(Fn f, crossuda::Tensor<double> x, double step = 1e-5) {
  Eigen::ArrayXd g(x.size());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = x.data[i];
    x.data[i] = orig + step;
    const double fp = f(x);
    x.data[i] = orig - step;
    const double fm = f(x);
    x.data[i] = orig;
    g[i] = (fp - fm) / (2 * step);
  }
  return g;
}

inline double max_rel_error(const Eigen::ArrayXd& analytic, const Eigen::ArrayXd& numeric) {
  double worst = 0.0;
  for (int64_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Like max_rel_error but with the gradient scale in the denominator, so
/// elements that are incidentally ~0 do not dominate through FD noise.
inline double max_rel_error_scaled(const Eigen::ArrayXd& analytic,
                                   const Eigen::ArrayXd& numeric) {
  const double scale =
      std::max({analytic.abs().maxCoeff(), numeric.abs().maxCoeff(), 1e-8});
  double worst = 0.0;
  for (int64_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-3 * scale});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

inline crossuda::BinaryMask random_mask(crossuda::Rng& rng, int nz, int ny, int nx,
                                        double p_true,
                                        crossuda::Spacing sp = {1.0, 1.0, 1.0}) {
  crossuda::BinaryMask m(nz, ny, nx, sp);
  for (int64_t i = 0; i < m.size(); ++i) m.data[i] = rng.uniform() < p_true ? 1 : 0;
  return m;
}

}  // namespace oracle
