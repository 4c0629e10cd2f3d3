#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossuda/volume.hpp"

namespace crossuda {

/// Per-class binary view of a label map.
struct BinaryMask {
  int nz = 0, ny = 0, nx = 0;
  Spacing spacing{1.0, 1.0, 1.0};
  Eigen::Array<uint8_t, Eigen::Dynamic, 1> data;  // 0/1

  BinaryMask() = default;
  BinaryMask(int z, int y, int x, Spacing sp = {1.0, 1.0, 1.0})
      : nz(z), ny(y), nx(x), spacing(sp) {
    data.setZero(int64_t(z) * y * x);
  }

  static BinaryMask from_class(const LabelMask& m, int cls);

  int64_t size() const { return data.size(); }
  int64_t index(int z, int y, int x) const { return (int64_t(z) * ny + y) * nx + x; }
  bool get(int z, int y, int x) const { return data[index(z, y, x)] != 0; }
  void set(int z, int y, int x, bool v) { data[index(z, y, x)] = v ? 1 : 0; }
  int64_t count() const { return (data != 0).count(); }
  bool same_shape(const BinaryMask& o) const {
    return nz == o.nz && ny == o.ny && nx == o.nx;
  }
};

/// 2|P∩G| / (|P|+|G|); 1.0 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Voxels with at least one 6-connected neighbor outside the mask
/// (out-of-bounds counts as outside). Returned as linear indices.
std::vector<int64_t> surface_voxels(const BinaryMask& m);

enum class DistanceUnits { voxel, mm };

/// Average symmetric surface distance. std::nullopt when either mask is
/// empty (undefined, distinct from zero).
std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt,
                           DistanceUnits units);

/// One 6-connected component as a set of linear voxel indices in ascending
/// order.
struct Component {
  std::vector<int64_t> voxels;
  int64_t size() const { return static_cast<int64_t>(voxels.size()); }
};

/// 6-connectivity partition of the true voxels, sorted by size descending;
/// ties broken by the smallest lexicographic minimum coordinate.
std::vector<Component> connected_components(const BinaryMask& m);

/// Keeps the largest component of class 1 (VS) and the two largest of
/// class 2 (cochlea); everything else becomes background.
LabelMask lcc_filter(const LabelMask& label);

struct ClassMetrics {
  double dice = 0.0;
  std::optional<double> assd;  // nullopt = undefined (empty surface)
};

struct CaseMetrics {
  std::string case_id;
  std::map<int, ClassMetrics> per_class;  // keys: 1 (VS), 2 (cochlea)
};

struct ClassAggregate {
  double dice_mean = 0.0, dice_std = 0.0;
  std::optional<double> assd_mean, assd_std;
  int assd_excluded = 0;
};

struct MetricsReport {
  std::vector<CaseMetrics> per_case;
  std::map<int, ClassAggregate> aggregate;
  int assd_exclusions = 0;

  /// Average of the per-class dice means (the Table-style "Mean" column).
  double mean_dice() const;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

/// Dice + ASSD for classes 1 and 2 of a prediction/ground-truth pair.
CaseMetrics evaluate_case(const std::string& case_id, const LabelMask& pred,
                          const LabelMask& gt, DistanceUnits units);

/// Mean and population std per class and metric; undefined ASSD entries are
/// excluded from the ASSD aggregation and counted.
MetricsReport aggregate_report(std::vector<CaseMetrics> per_case);

}  // namespace crossuda
