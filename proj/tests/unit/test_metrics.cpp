#include <doctest.h>

#include "crossuda/metrics.hpp"
#include "oracles.hpp"

using namespace crossuda;

namespace {

BinaryMask cube_mask(int n, int z0, int z1, int y0, int y1, int x0, int x1) {
  BinaryMask m(n, n, n);
  for (int z = z0; z < z1; ++z)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m.set(z, y, x, true);
  return m;
}

}  // namespace

TEST_CASE("dice handles identity, disjoint and partial overlap") {
  const BinaryMask a = cube_mask(6, 0, 2, 0, 2, 0, 1);  // 4 voxels
  CHECK(dice(a, a) == 1.0);

  const BinaryMask b = cube_mask(6, 4, 6, 4, 6, 5, 6);  // disjoint 4 voxels
  CHECK(dice(a, b) == 0.0);

  // |P|=4, |G|=4, |P∩G|=2 -> 0.5
  const BinaryMask c = cube_mask(6, 1, 3, 0, 2, 0, 1);
  CHECK(dice(a, c) == 0.5);

  BinaryMask other_shape(5, 5, 5);
  CHECK_THROWS_AS(dice(a, other_shape), Error);

  const BinaryMask empty(6, 6, 6);
  CHECK(dice(empty, empty) == 1.0);
  CHECK(dice(a, empty) == 0.0);
}

TEST_CASE("surface_voxels matches the exhaustive neighbor check") {
  BinaryMask single(4, 4, 4);
  single.set(2, 1, 3, true);
  const auto surf = surface_voxels(single);
  REQUIRE(surf.size() == 1);
  CHECK(surf[0] == single.index(2, 1, 3));

  const BinaryMask cube = cube_mask(5, 1, 4, 1, 4, 1, 4);
  const auto cube_surf = surface_voxels(cube);
  CHECK(cube_surf.size() == 26);  // all but the center voxel
  const auto expect = oracle::surface_oracle(cube);
  CHECK(expect.size() == 26);

  const BinaryMask empty(3, 3, 3);
  CHECK(surface_voxels(empty).empty());
}

TEST_CASE("assd simple cases and units") {
  const BinaryMask a = cube_mask(4, 1, 3, 1, 3, 1, 3);
  CHECK(*assd(a, a, DistanceUnits::voxel) == 0.0);

  BinaryMask p(2, 2, 2, {1.0, 0.6, 0.6}), g(2, 2, 2, {1.0, 0.6, 0.6});
  p.set(0, 0, 0, true);
  g.set(0, 0, 1, true);
  CHECK(*assd(p, g, DistanceUnits::voxel) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*assd(p, g, DistanceUnits::mm) == doctest::Approx(0.6).epsilon(1e-12));

  const BinaryMask empty(2, 2, 2);
  CHECK_FALSE(assd(p, empty, DistanceUnits::voxel).has_value());
  CHECK_FALSE(assd(empty, empty, DistanceUnits::voxel).has_value());
}

TEST_CASE("assd against the brute-force oracle on random masks") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_mask(rng, 8, 8, 8, 0.2, {1.0, 0.6, 0.6});
    const auto g = oracle::random_mask(rng, 8, 8, 8, 0.2, {1.0, 0.6, 0.6});
    for (auto units : {DistanceUnits::voxel, DistanceUnits::mm}) {
      const auto got = assd(p, g, units);
      const auto expect = oracle::assd_oracle(p, g, units == DistanceUnits::mm);
      REQUIRE(got.has_value() == expect.has_value());
      if (got) CHECK(std::abs(*got - *expect) <= 1e-9);
    }
    CHECK(dice(p, g) == oracle::dice_oracle(p, g));
    CHECK(dice(p, g) == dice(g, p));
  }
}

TEST_CASE("connected_components adjacency, ordering and bookkeeping") {
  BinaryMask touching(3, 3, 3);
  touching.set(0, 0, 0, true);
  touching.set(0, 0, 1, true);  // face adjacent
  auto comps = connected_components(touching);
  REQUIRE(comps.size() == 1);
  CHECK(comps[0].size() == 2);

  BinaryMask diagonal(3, 3, 3);
  diagonal.set(0, 0, 0, true);
  diagonal.set(0, 1, 1, true);  // diagonal, not 6-connected
  comps = connected_components(diagonal);
  CHECK(comps.size() == 2);

  CHECK(connected_components(BinaryMask(2, 2, 2)).empty());

  // sizes sum to the voxel count and components are disjoint
  Rng rng(31);
  const auto m = oracle::random_mask(rng, 8, 8, 8, 0.3);
  comps = connected_components(m);
  int64_t total = 0;
  std::set<int64_t> all;
  for (const auto& c : comps) {
    total += c.size();
    for (int64_t v : c.voxels) CHECK(all.insert(v).second);
  }
  CHECK(total == m.count());
  for (size_t i = 1; i < comps.size(); ++i) {
    const bool ordered = comps[i - 1].size() > comps[i].size() ||
                         (comps[i - 1].size() == comps[i].size() &&
                          comps[i - 1].voxels.front() < comps[i].voxels.front());
    CHECK(ordered);
  }
}

TEST_CASE("lcc_filter keeps one VS component and two cochlea components") {
  LabelMask label(4, 12, 12);
  // class 1: components of sizes 10 and 3
  for (int x = 0; x < 10; ++x) label.at(0, 0, x) = 1;
  for (int x = 0; x < 3; ++x) label.at(2, 6, x) = 1;
  // class 2: components of sizes 8, 5, 2
  for (int x = 0; x < 8; ++x) label.at(1, 2, x) = 2;
  for (int x = 0; x < 5; ++x) label.at(3, 4, x) = 2;
  for (int x = 0; x < 2; ++x) label.at(3, 10, x) = 2;

  const LabelMask filtered = lcc_filter(label);
  const LabelMask expect = oracle::lcc_oracle(label);
  CHECK((filtered.data == expect.data).all());

  // the size-3 class-1 island and the size-2 class-2 island are gone
  CHECK(filtered.at(2, 6, 0) == 0);
  CHECK(filtered.at(3, 10, 0) == 0);
  CHECK(filtered.at(0, 0, 0) == 1);
  CHECK(filtered.at(1, 2, 0) == 2);
  CHECK(filtered.at(3, 4, 0) == 2);

  // idempotent and never grows a class
  const LabelMask twice = lcc_filter(filtered);
  CHECK((twice.data == filtered.data).all());
  CHECK((filtered.data == 1).count() <= (label.data == 1).count());
  CHECK((filtered.data == 2).count() <= (label.data == 2).count());

  // single component per class -> unchanged
  LabelMask simple(2, 4, 4);
  simple.at(0, 0, 0) = 1;
  simple.at(1, 2, 2) = 2;
  CHECK((lcc_filter(simple).data == simple.data).all());
}

TEST_CASE("aggregate_report computes mean and population std") {
  CaseMetrics a, b;
  a.case_id = "a";
  a.per_class[1] = {0.8, 1.0};
  a.per_class[2] = {0.6, std::nullopt};  // undefined ASSD
  b.case_id = "b";
  b.per_class[1] = {0.9, 2.0};
  b.per_class[2] = {0.8, 1.5};
  CaseMetrics c;
  c.case_id = "c";
  c.per_class[1] = {0.7, 3.0};
  c.per_class[2] = {0.7, 0.5};

  const MetricsReport report = aggregate_report({a, b, c});
  CHECK(report.aggregate.at(1).dice_mean == doctest::Approx(0.8));
  CHECK(report.aggregate.at(2).dice_mean == doctest::Approx(0.7));
  CHECK(report.assd_exclusions == 1);
  CHECK(report.aggregate.at(2).assd_excluded == 1);
  CHECK(*report.aggregate.at(2).assd_mean == doctest::Approx(1.0));  // (1.5 + 0.5)/2

  // two-value case from the contract: mean .85, population std .05
  CaseMetrics d, e;
  d.case_id = "d";
  d.per_class[1] = {0.8, std::nullopt};
  e.case_id = "e";
  e.per_class[1] = {0.9, std::nullopt};
  const MetricsReport two = aggregate_report({d, e});
  CHECK(two.aggregate.at(1).dice_mean == doctest::Approx(0.85));
  CHECK(two.aggregate.at(1).dice_std == doctest::Approx(0.05));

  const MetricsReport one = aggregate_report({d});
  CHECK(one.aggregate.at(1).dice_std == 0.0);

  CHECK_THROWS_AS(aggregate_report({}), Error);
}

TEST_CASE("metrics report JSON round-trips and aggregate is recomputable") {
  Rng rng(41);
  std::vector<CaseMetrics> cases;
  for (int i = 0; i < 4; ++i) {
    CaseMetrics cm;
    cm.case_id = "case_" + std::to_string(i);
    for (int cls = 1; cls <= 2; ++cls) {
      ClassMetrics m;
      m.dice = rng.uniform();
      if (rng.uniform() < 0.7) m.assd = rng.uniform(0, 3);
      cm.per_class[cls] = m;
    }
    cases.push_back(cm);
  }
  const MetricsReport report = aggregate_report(cases);
  const std::string json = report.to_json();
  const MetricsReport back = MetricsReport::from_json(json);
  CHECK(back.to_json() == json);

  // aggregate recomputable from per_case
  const MetricsReport again = aggregate_report(back.per_case);
  CHECK(again.to_json() == json);
}
