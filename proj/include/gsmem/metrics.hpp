// Occupancy IoU and semantic mIoU under the per-frame (local) and
// observed-at-least-once (embodied) protocols.
#pragma once

#include "gsmem/core.hpp"
#include "gsmem/grid.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gsmem {

/// Marks a class without intersection or union support.
inline constexpr double kNoSupport = -1.0;

/// Intersection and union counts; accumulates across frames.
struct IoUCounts {
  int classes = kDefaultClasses;
  std::uint64_t occupied_inter = 0, occupied_union = 0;
  std::vector<std::uint64_t> inter, uni, gt_support;  // per occupied class
  std::uint64_t masked = 0, total = 0;

  explicit IoUCounts(int classes = kDefaultClasses);
  void add(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask);
};

struct MetricReport {
  double iou = 0.0;
  std::vector<double> per_class_iou;  // classes - 1 entries, kNoSupport where union is 0
  double miou = 0.0;                  // mean over classes with ground-truth support
  double observed_fraction = 0.0;     // masked / total voxels
};

MetricReport report(const IoUCounts& counts);
/// Throws InvalidInput on an empty mask or incongruent grids.
MetricReport iou(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask);

/// Voxels whose centers lie inside the frame's frustum.
VoxelMask local_mask(const GridGeometry& geometry, const CameraFrame& frame);
/// Union of local masks.
VoxelMask observed_mask(const GridGeometry& geometry, std::span<const CameraFrame> frames);
std::size_t mask_count(const VoxelMask& mask);

/// `key value` lines.
void write_report(std::ostream& os, const MetricReport& r);
std::string csv_header(int classes);
std::string csv_row(const MetricReport& r);

}  // namespace gsmem
