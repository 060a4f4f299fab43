#include "gsmem/metrics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace gsmem;

namespace {

constexpr int kC = kDefaultClasses;
constexpr int kEmpty = kC - 1;

VoxelGrid labels_of(const std::vector<int>& labels) {
  GridGeometry g;
  g.dims = {static_cast<int>(labels.size()), 1, 1};
  VoxelGrid v = VoxelGrid::label(g, kC);
  for (std::size_t i = 0; i < labels.size(); ++i) v.labels[i] = static_cast<std::uint16_t>(labels[i]);
  return v;
}

VoxelGrid random_grid(const GridGeometry& g, std::mt19937_64& rng, double empty_share) {
  VoxelGrid v = VoxelGrid::label(g, kC);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, kEmpty - 1);
  for (auto& l : v.labels) l = static_cast<std::uint16_t>(u(rng) < empty_share ? kEmpty : cls(rng));
  return v;
}

CameraFrame camera(const Vec3& eye, const Vec3& target) {
  CameraFrame f;
  f.intrinsics = default_intrinsics();
  f.pose = look_at(eye, target);
  return f;
}

}  // namespace

TEST_CASE("hand-computed four-voxel fixtures") {
  const VoxelMask all(4, 1);
  // Occupancy (1,1,0,0) against (1,0,1,0): one shared, three in the union.
  MetricReport r = iou(labels_of({3, 3, kEmpty, kEmpty}), labels_of({3, kEmpty, 3, kEmpty}), all);
  CHECK(r.iou == 1.0 / 3.0);
  CHECK(r.per_class_iou[3] == 1.0 / 3.0);
  CHECK(r.miou == 1.0 / 3.0);
  CHECK(r.observed_fraction == 1.0);

  const VoxelGrid same = labels_of({0, 1, 1, kEmpty});
  r = iou(same, same, all);
  CHECK(r.iou == 1.0);
  CHECK(r.miou == 1.0);
  CHECK(r.per_class_iou[2] == kNoSupport);

  // Occupancy right, semantics half right.
  r = iou(labels_of({0, 0, 1, kEmpty}), labels_of({0, 1, 1, kEmpty}), all);
  CHECK(r.iou == 1.0);
  CHECK(r.per_class_iou[0] == 0.5);
  CHECK(r.per_class_iou[1] == 0.5);
  CHECK(r.miou == 0.5);

  // A class predicted but absent from the truth is reported, not averaged.
  r = iou(labels_of({0, 5, kEmpty, kEmpty}), labels_of({0, 0, kEmpty, kEmpty}), all);
  CHECK(r.per_class_iou[5] == 0.0);
  CHECK(r.per_class_iou[0] == 0.5);
  CHECK(r.miou == 0.5);

  const VoxelMask two{1, 1, 0, 0};
  r = iou(labels_of({3, 3, 3, 3}), labels_of({3, 3, kEmpty, kEmpty}), two);
  CHECK(r.iou == 1.0);
  CHECK(r.observed_fraction == 0.5);
}

TEST_CASE("iou errors") {
  const VoxelGrid a = labels_of({0, 1});
  CHECK_THROWS_AS(iou(a, a, VoxelMask(2, 0)), InvalidInput);
  CHECK_THROWS_AS(iou(a, labels_of({0, 1, 2}), VoxelMask(2, 1)), InvalidInput);
  CHECK_THROWS_AS(iou(a, a, VoxelMask(3, 1)), InvalidInput);
  CHECK_THROWS_AS(iou(VoxelGrid::probability(a.geometry, kC), a, VoxelMask(2, 1)), InvalidInput);
}

TEST_CASE("random grids against a counting oracle") {
  std::mt19937_64 rng(8);
  GridGeometry g;
  g.dims = {12, 9, 7};
  for (int trial = 0; trial < 10; ++trial) {
    const VoxelGrid p = random_grid(g, rng, 0.5), t = random_grid(g, rng, 0.5);
    VoxelMask m(g.voxel_count());
    for (auto& x : m) x = rng() % 3 != 0;
    std::size_t oi = 0, ou = 0;
    std::vector<std::size_t> ci(kEmpty), cu(kEmpty), support(kEmpty);
    for (std::size_t v = 0; v < m.size(); ++v) {
      if (!m[v]) continue;
      const int a = p.labels[v], b = t.labels[v];
      oi += a != kEmpty && b != kEmpty;
      ou += a != kEmpty || b != kEmpty;
      for (int c = 0; c < kEmpty; ++c) {
        ci[c] += a == c && b == c;
        cu[c] += a == c || b == c;
      }
      if (b != kEmpty) ++support[b];
    }
    const MetricReport r = iou(p, t, m);
    CHECK(r.iou == static_cast<double>(oi) / static_cast<double>(ou));
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < kEmpty; ++c) {
      if (cu[c] == 0) {
        CHECK(r.per_class_iou[c] == kNoSupport);
        continue;
      }
      const double expect = static_cast<double>(ci[c]) / static_cast<double>(cu[c]);
      CHECK(r.per_class_iou[c] == expect);
      if (support[c]) sum += expect, ++n;
    }
    CHECK(std::abs(r.miou - sum / n) <= 1e-15);

    // Occupancy IoU is symmetric.
    CHECK(iou(t, p, m).iou == r.iou);

    // Relabeling both grids by the same permutation leaves mIoU unchanged.
    std::vector<int> perm(kEmpty);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    VoxelGrid p2 = p, t2 = t;
    for (auto& l : p2.labels)
      if (l != kEmpty) l = static_cast<std::uint16_t>(perm[l]);
    for (auto& l : t2.labels)
      if (l != kEmpty) l = static_cast<std::uint16_t>(perm[l]);
    CHECK(std::abs(iou(p2, t2, m).miou - r.miou) <= 1e-12);
  }
}

TEST_CASE("counts accumulate across frames") {
  const VoxelGrid p = labels_of({3, 3, kEmpty, kEmpty}), t = labels_of({3, kEmpty, 3, kEmpty});
  IoUCounts c;
  c.add(p, t, VoxelMask{1, 1, 0, 0});
  c.add(p, t, VoxelMask{0, 0, 1, 1});
  CHECK(report(c).iou == iou(p, t, VoxelMask(4, 1)).iou);
  CHECK(report(c).observed_fraction == 0.5);
  CHECK_THROWS_AS(report(IoUCounts{}), InvalidInput);
}

TEST_CASE("local mask matches the projection oracle") {
  GridGeometry g;
  g.origin = Vec3(-1.0, -2.0, -0.5);
  g.voxel_size = 0.1;
  g.dims = {40, 40, 20};
  const CameraFrame f = camera(Vec3(-1.5, 0.0, 0.5), Vec3(2.0, 0.3, 0.0));
  const VoxelMask m = local_mask(g, f);
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> pick(0, g.voxel_count() - 1);
  std::size_t inside = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t v = pick(rng);
    const bool expect = oracle::in_frustum(f, g.center(v));
    CHECK((m[v] != 0) == expect);
    inside += expect;
  }
  CHECK(inside > 100);
  CHECK(inside < 900);

  // Looking away sees nothing; a distant camera sees everything.
  CHECK(mask_count(local_mask(g, camera(Vec3(-1.5, 0.0, 0.5), Vec3(-5.0, 0.0, 0.5)))) == 0);
  GridGeometry small;
  small.origin = Vec3::Zero();
  small.voxel_size = 0.1;
  small.dims = {4, 4, 4};
  const VoxelMask full = local_mask(small, camera(Vec3(-3.0, 0.2, 0.2), Vec3(0.2, 0.2, 0.2)));
  CHECK(mask_count(full) == small.voxel_count());
}

TEST_CASE("observed mask is the union of local masks") {
  GridGeometry g;
  g.origin = Vec3(-3.0, -3.0, -1.0);
  g.voxel_size = 0.1;
  g.dims = {60, 60, 20};
  const CameraFrame east = camera(Vec3(0.1, 0, 0), Vec3(1, 0, 0)), west = camera(Vec3(-0.1, 0, 0), Vec3(-1, 0, 0));
  const std::vector<CameraFrame> one{east};
  CHECK(observed_mask(g, one) == local_mask(g, east));
  const std::vector<CameraFrame> both{east, west};
  CHECK(mask_count(observed_mask(g, both)) == mask_count(local_mask(g, east)) + mask_count(local_mask(g, west)));
  CHECK_THROWS_AS(observed_mask(g, std::vector<CameraFrame>{}), InvalidInput);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<CameraFrame> frames;
  VoxelMask prev(g.voxel_count(), 0);
  for (int i = 0; i < 8; ++i) {
    frames.push_back(camera(Vec3(u(rng), u(rng), 0.0), Vec3(u(rng), u(rng), -0.5)));
    const VoxelMask m = observed_mask(g, frames);
    for (std::size_t v = 0; v < m.size(); ++v)
      if (prev[v]) CHECK(m[v]);
    CHECK(mask_count(m) >= mask_count(prev));
    prev = m;
  }
}

TEST_CASE("report serialization") {
  MetricReport r;
  r.iou = 0.5;
  r.miou = 0.25;
  r.observed_fraction = 1.0;
  r.per_class_iou = {0.25, kNoSupport};
  std::ostringstream os;
  write_report(os, r);
  CHECK(os.str() == "iou 0.500000\nmiou 0.250000\nobserved_fraction 1.000000\nclass_0_iou 0.250000\n"
                    "class_1_iou -1.000000\n");
  CHECK(csv_header(3) == "iou,miou,observed_fraction,class_0_iou,class_1_iou");
  CHECK(csv_row(r) == "0.500000,0.250000,1.000000,0.250000,-1.000000");
}
