#include "gsmem/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace gsmem {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace

IoUCounts::IoUCounts(int c)
    : classes(c),
      inter(static_cast<std::size_t>(c - 1), 0),
      uni(static_cast<std::size_t>(c - 1), 0),
      gt_support(static_cast<std::size_t>(c - 1), 0) {}

void IoUCounts::add(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask) {
  if (pred.mode != GridMode::label || gt.mode != GridMode::label) throw InvalidInput("metrics need label grids");
  if (!(pred.geometry == gt.geometry) || pred.classes != gt.classes ||
      static_cast<int>(gt.classes) != classes)
    throw InvalidInput("grids are not congruent");
  if (mask.size() != gt.geometry.voxel_count()) throw InvalidInput("mask size does not match the grid");
  const std::uint16_t empty = gt.empty_label();
  for (std::size_t v = 0; v < mask.size(); ++v) {
    if (!mask[v]) continue;
    ++masked;
    const std::uint16_t p = pred.labels[v], g = gt.labels[v];
    const bool po = p != empty, go = g != empty;
    occupied_inter += po && go;
    occupied_union += po || go;
    if (go) ++gt_support[g];
    if (p == g) {
      if (go) ++inter[g], ++uni[g];
    } else {
      if (po) ++uni[p];
      if (go) ++uni[g];
    }
  }
  total += mask.size();
}

MetricReport report(const IoUCounts& c) {
  if (c.masked == 0) throw InvalidInput("mask is empty");
  MetricReport r;
  r.iou = c.occupied_union ? static_cast<double>(c.occupied_inter) / static_cast<double>(c.occupied_union) : 1.0;
  r.per_class_iou.assign(c.inter.size(), kNoSupport);
  double sum = 0.0;
  int supported = 0;
  for (std::size_t k = 0; k < c.inter.size(); ++k) {
    if (c.uni[k] == 0) continue;
    r.per_class_iou[k] = static_cast<double>(c.inter[k]) / static_cast<double>(c.uni[k]);
    if (c.gt_support[k] > 0) {
      sum += r.per_class_iou[k];
      ++supported;
    }
  }
  r.miou = supported ? sum / supported : 1.0;
  r.observed_fraction = static_cast<double>(c.masked) / static_cast<double>(c.total);
  return r;
}

MetricReport iou(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask) {
  IoUCounts c(static_cast<int>(gt.classes));
  c.add(pred, gt, mask);
  return report(c);
}

VoxelMask local_mask(const GridGeometry& geometry, const CameraFrame& frame) {
  frame.validate();
  VoxelMask mask(geometry.voxel_count(), 0);
  const auto n = static_cast<std::int64_t>(mask.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v)
    mask[static_cast<std::size_t>(v)] = frame.contains(geometry.center(static_cast<std::size_t>(v))) ? 1 : 0;
  return mask;
}

VoxelMask observed_mask(const GridGeometry& geometry, std::span<const CameraFrame> frames) {
  if (frames.empty()) throw InvalidInput("observed mask needs at least one frame");
  VoxelMask mask(geometry.voxel_count(), 0);
  for (const auto& f : frames) {
    const VoxelMask m = local_mask(geometry, f);
    for (std::size_t v = 0; v < mask.size(); ++v) mask[v] |= m[v];
  }
  return mask;
}

std::size_t mask_count(const VoxelMask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

void write_report(std::ostream& os, const MetricReport& r) {
  os << "iou " << fmt(r.iou) << '\n' << "miou " << fmt(r.miou) << '\n';
  os << "observed_fraction " << fmt(r.observed_fraction) << '\n';
  for (std::size_t k = 0; k < r.per_class_iou.size(); ++k)
    os << "class_" << k << "_iou " << fmt(r.per_class_iou[k]) << '\n';
}

std::string csv_header(int classes) {
  std::string h = "iou,miou,observed_fraction";
  for (int k = 0; k + 1 < classes; ++k) h += ",class_" + std::to_string(k) + "_iou";
  return h;
}

std::string csv_row(const MetricReport& r) {
  std::string row = fmt(r.iou) + "," + fmt(r.miou) + "," + fmt(r.observed_fraction);
  for (double x : r.per_class_iou) row += "," + fmt(x);
  return row;
}

}  // namespace gsmem
