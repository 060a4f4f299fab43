// Confidence-aware voxel fusion: primitives are grouped by the fusion cell of
// their mean, weighted by a per-cell softmax over confidence, and merged by
// convex combination of every attribute and feature.
#pragma once

#include "gsmem/confidence.hpp"
#include "gsmem/core.hpp"

#include <span>
#include <vector>

namespace gsmem {

enum class GridOriginPolicy { world_zero, scene_min };

struct FusionConfig {
  double voxel_size = 0.12;
  double temperature = 1.0;
  GridOriginPolicy origin_policy = GridOriginPolicy::world_zero;

  void validate() const;
};

/// Origin of the fusion lattice: zero, or the componentwise min of the means.
Vec3 fusion_origin(std::span<const GaussianPrimitive> primitives, const FusionConfig& cfg);

/// floor((mu - origin) / voxel_size) per primitive.
std::vector<Cell> assign_voxels(std::span<const GaussianPrimitive> primitives, const FusionConfig& cfg);
/// Same, against a fixed lattice origin.
std::vector<Cell> assign_voxels(std::span<const GaussianPrimitive> primitives, const Vec3& origin,
                                double voxel_size);

/// exp(C_i / T) / sum_{j in cell(i)} exp(C_j / T), max-shifted per cell.
std::vector<double> fusion_weights(std::span<const double> confidences, std::span<const Cell> cells,
                                   double temperature);

struct FusionResult {
  std::vector<GaussianPrimitive> primitives;  // one per occupied cell, sorted by cell
  Eigen::MatrixXd features;
  std::vector<Cell> cells;
  std::vector<std::vector<std::uint32_t>> members;  // input ids per output, ascending
  std::vector<std::uint8_t> quat_fallback;          // 1 where the weighted quaternion sum degenerated
};

/// Weighted merge per cell. Quaternions are sign-aligned to the highest-weight
/// member before summation and renormalized; a degenerate sum (norm < 1e-8)
/// falls back to that member's rotation. Singleton cells are copied verbatim.
FusionResult fuse(std::span<const GaussianPrimitive> primitives, const Eigen::MatrixXd& features,
                  std::span<const double> weights, std::span<const Cell> cells);

/// Convenience: weights from batch.confidences, fuse, and recompute the fused
/// confidences with `conf`.
struct FusedBatch {
  PrimitiveBatch batch;
  std::vector<Cell> cells;
};
FusedBatch fuse_batch(const PrimitiveBatch& batch, const FusionConfig& cfg, const ConfidenceConfig& conf);

}  // namespace gsmem
