#include "crossuda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <nlohmann/json.hpp>

namespace crossuda {

using nlohmann::json;

BinaryMask BinaryMask::from_class(const LabelMask& m, int cls) {
  BinaryMask b(m.nz, m.ny, m.nx, m.spacing);
  b.data = (m.data == static_cast<uint8_t>(cls)).cast<uint8_t>();
  return b;
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  require(pred.same_shape(gt), ErrorKind::argument, "dice: shape mismatch");
  const int64_t p = pred.count();
  const int64_t g = gt.count();
  if (p + g == 0) return 1.0;
  const int64_t inter = ((pred.data != 0) && (gt.data != 0)).count();
  return 2.0 * inter / static_cast<double>(p + g);
}

namespace {

constexpr int kNeighbors[6][3] = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                  {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};

}  // namespace

std::vector<int64_t> surface_voxels(const BinaryMask& m) {
  std::vector<int64_t> surf;
  for (int z = 0; z < m.nz; ++z)
    for (int y = 0; y < m.ny; ++y)
      for (int x = 0; x < m.nx; ++x) {
        if (!m.get(z, y, x)) continue;
        bool boundary = false;
        for (const auto& d : kNeighbors) {
          const int zz = z + d[0], yy = y + d[1], xx = x + d[2];
          if (zz < 0 || zz >= m.nz || yy < 0 || yy >= m.ny || xx < 0 || xx >= m.nx ||
              !m.get(zz, yy, xx)) {
            boundary = true;
            break;
          }
        }
        if (boundary) surf.push_back(m.index(z, y, x));
      }
  return surf;
}

namespace {

struct Point3 {
  double z, y, x;
};

std::vector<Point3> to_points(const std::vector<int64_t>& idx, const BinaryMask& m,
                              DistanceUnits units) {
  const double sz = units == DistanceUnits::mm ? m.spacing[0] : 1.0;
  const double sy = units == DistanceUnits::mm ? m.spacing[1] : 1.0;
  const double sx = units == DistanceUnits::mm ? m.spacing[2] : 1.0;
  std::vector<Point3> pts;
  pts.reserve(idx.size());
  for (int64_t i : idx) {
    const int z = static_cast<int>(i / (int64_t(m.ny) * m.nx));
    const int rem = static_cast<int>(i % (int64_t(m.ny) * m.nx));
    pts.push_back({z * sz, (rem / m.nx) * sy, (rem % m.nx) * sx});
  }
  return pts;
}

double sum_min_distances(const std::vector<Point3>& from, const std::vector<Point3>& to) {
  double total = 0.0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) {
      const double dz = a.z - b.z, dy = a.y - b.y, dx = a.x - b.x;
      best = std::min(best, dz * dz + dy * dy + dx * dx);
    }
    total += std::sqrt(best);
  }
  return total;
}

}  // namespace

std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt,
                           DistanceUnits units) {
  require(pred.same_shape(gt), ErrorKind::argument, "assd: shape mismatch");
  if (units == DistanceUnits::mm)
    require(pred.spacing == gt.spacing, ErrorKind::argument, "assd: spacing mismatch");
  const auto sp = surface_voxels(pred);
  const auto sg = surface_voxels(gt);
  if (sp.empty() || sg.empty()) return std::nullopt;
  const auto pp = to_points(sp, pred, units);
  const auto pg = to_points(sg, gt, units);
  const double total = sum_min_distances(pp, pg) + sum_min_distances(pg, pp);
  return total / static_cast<double>(pp.size() + pg.size());
}

std::vector<Component> connected_components(const BinaryMask& m) {
  std::vector<Component> comps;
  std::vector<uint8_t> visited(static_cast<size_t>(m.size()), 0);
  const int64_t plane = int64_t(m.ny) * m.nx;
  for (int64_t seed = 0; seed < m.size(); ++seed) {
    if (m.data[seed] == 0 || visited[static_cast<size_t>(seed)]) continue;
    Component comp;
    std::deque<int64_t> queue{seed};
    visited[static_cast<size_t>(seed)] = 1;
    while (!queue.empty()) {
      const int64_t cur = queue.front();
      queue.pop_front();
      comp.voxels.push_back(cur);
      const int z = static_cast<int>(cur / plane);
      const int rem = static_cast<int>(cur % plane);
      const int y = rem / m.nx, x = rem % m.nx;
      for (const auto& d : kNeighbors) {
        const int zz = z + d[0], yy = y + d[1], xx = x + d[2];
        if (zz < 0 || zz >= m.nz || yy < 0 || yy >= m.ny || xx < 0 || xx >= m.nx) continue;
        const int64_t ni = m.index(zz, yy, xx);
        if (m.data[ni] == 0 || visited[static_cast<size_t>(ni)]) continue;
        visited[static_cast<size_t>(ni)] = 1;
        queue.push_back(ni);
      }
    }
    std::sort(comp.voxels.begin(), comp.voxels.end());
    comps.push_back(std::move(comp));
  }
  // Linear index order is (z,y,x) lexicographic order, so voxels.front()
  // is the lexicographic minimum coordinate of each component.
  std::sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.voxels.front() < b.voxels.front();
  });
  return comps;
}

LabelMask lcc_filter(const LabelMask& label) {
  LabelMask out = label;
  const int keep_per_class[] = {0, 1, 2};  // class 1 keeps 1 component, class 2 keeps 2
  for (int cls = 1; cls <= 2; ++cls) {
    const auto comps = connected_components(BinaryMask::from_class(label, cls));
    for (size_t i = static_cast<size_t>(keep_per_class[cls]); i < comps.size(); ++i)
      for (int64_t v : comps[i].voxels) out.data[v] = 0;
  }
  return out;
}

double MetricsReport::mean_dice() const {
  if (aggregate.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [cls, agg] : aggregate) sum += agg.dice_mean;
  return sum / static_cast<double>(aggregate.size());
}

CaseMetrics evaluate_case(const std::string& case_id, const LabelMask& pred,
                          const LabelMask& gt, DistanceUnits units) {
  require(pred.nz == gt.nz && pred.ny == gt.ny && pred.nx == gt.nx, ErrorKind::argument,
          "evaluate_case: shape mismatch for " + case_id);
  CaseMetrics cm;
  cm.case_id = case_id;
  for (int cls = 1; cls <= 2; ++cls) {
    const auto p = BinaryMask::from_class(pred, cls);
    const auto g = BinaryMask::from_class(gt, cls);
    ClassMetrics m;
    m.dice = dice(p, g);
    m.assd = assd(p, g, units);
    cm.per_class[cls] = m;
  }
  return cm;
}

namespace {

std::pair<double, double> mean_popstd(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

const char* class_name(int cls) { return cls == 1 ? "vs" : "cochlea"; }

}  // namespace

MetricsReport aggregate_report(std::vector<CaseMetrics> per_case) {
  require(!per_case.empty(), ErrorKind::argument, "aggregate_report: zero cases");
  MetricsReport report;
  report.per_case = std::move(per_case);
  for (int cls = 1; cls <= 2; ++cls) {
    std::vector<double> dices, assds;
    int excluded = 0;
    for (const auto& cm : report.per_case) {
      const auto it = cm.per_class.find(cls);
      if (it == cm.per_class.end()) continue;
      dices.push_back(it->second.dice);
      if (it->second.assd)
        assds.push_back(*it->second.assd);
      else
        ++excluded;
    }
    if (dices.empty()) continue;
    ClassAggregate agg;
    std::tie(agg.dice_mean, agg.dice_std) = mean_popstd(dices);
    if (!assds.empty()) {
      auto [am, as] = mean_popstd(assds);
      agg.assd_mean = am;
      agg.assd_std = as;
    }
    agg.assd_excluded = excluded;
    report.aggregate[cls] = agg;
    report.assd_exclusions += excluded;
  }
  return report;
}

std::string MetricsReport::to_json() const {
  json j;
  j["per_case"] = json::array();
  for (const auto& cm : per_case) {
    json jc;
    jc["case_id"] = cm.case_id;
    for (const auto& [cls, m] : cm.per_class) {
      json jm;
      jm["dice"] = m.dice;
      if (m.assd)
        jm["assd"] = *m.assd;
      else
        jm["assd"] = nullptr;
      jc[class_name(cls)] = jm;
    }
    j["per_case"].push_back(jc);
  }
  json jagg;
  for (const auto& [cls, agg] : aggregate) {
    json ja;
    ja["dice_mean"] = agg.dice_mean;
    ja["dice_std"] = agg.dice_std;
    ja["assd_mean"] = agg.assd_mean ? json(*agg.assd_mean) : json(nullptr);
    ja["assd_std"] = agg.assd_std ? json(*agg.assd_std) : json(nullptr);
    ja["assd_excluded"] = agg.assd_excluded;
    jagg[class_name(cls)] = ja;
  }
  jagg["mean_dice"] = mean_dice();
  j["aggregate"] = jagg;
  j["assd_exclusions"] = assd_exclusions;
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport report;
  for (const auto& jc : j.at("per_case")) {
    CaseMetrics cm;
    cm.case_id = jc.at("case_id").get<std::string>();
    for (int cls = 1; cls <= 2; ++cls) {
      if (!jc.contains(class_name(cls))) continue;
      const auto& jm = jc.at(class_name(cls));
      ClassMetrics m;
      m.dice = jm.at("dice").get<double>();
      if (!jm.at("assd").is_null()) m.assd = jm.at("assd").get<double>();
      cm.per_class[cls] = m;
    }
    report.per_case.push_back(std::move(cm));
  }
  for (int cls = 1; cls <= 2; ++cls) {
    const auto& jagg = j.at("aggregate");
    if (!jagg.contains(class_name(cls))) continue;
    const auto& ja = jagg.at(class_name(cls));
    ClassAggregate agg;
    agg.dice_mean = ja.at("dice_mean").get<double>();
    agg.dice_std = ja.at("dice_std").get<double>();
    if (!ja.at("assd_mean").is_null()) agg.assd_mean = ja.at("assd_mean").get<double>();
    if (!ja.at("assd_std").is_null()) agg.assd_std = ja.at("assd_std").get<double>();
    agg.assd_excluded = ja.at("assd_excluded").get<int>();
    report.aggregate[cls] = agg;
  }
  report.assd_exclusions = j.at("assd_exclusions").get<int>();
  return report;
}

}  // namespace crossuda
