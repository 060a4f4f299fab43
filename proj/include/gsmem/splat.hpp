// Gaussian-to-voxel splatting.
//
// Every voxel center x gathers a neighborhood N(x) from a uniform spatial hash
// of truncated primitive supports, then evaluates
//
//   alpha(x) = 1 - prod_i (1 - k_i(x) a_i)               (opacity)
//   e^l(x)   = sum_i p_i(x) softmax(c_i)^l / sum_j p_j(x) (semantics)
//
// and emits per-class probabilities alpha e^l followed by the empty
// probability 1 - alpha. `render_field` is the OpenMP kernel;
// `render_field_serial` is the single-threaded reference it is tested against.
#pragma once

#include "gsmem/core.hpp"
#include "gsmem/grid.hpp"

#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

namespace gsmem {

inline constexpr double kNoTruncation = std::numeric_limits<double>::infinity();

class SpatialIndex {
 public:
  SpatialIndex() = default;
  /// Every primitive is registered in each cell overlapped by the axis-aligned
  /// box of its `truncation_sigmas` ellipsoid. An infinite radius registers
  /// every primitive globally.
  SpatialIndex(std::span<const GaussianPrimitive> primitives, double cell_size,
               double truncation_sigmas = 3.0);

  /// Candidate primitive ids for point x, in ascending id order.
  std::span<const std::uint32_t> query(const Vec3& x) const;

  double cell_size() const { return cell_size_; }
  double truncation_sigmas() const { return truncation_sigmas_; }
  std::size_t bucket_count() const { return buckets_.size(); }
  bool unbounded() const { return unbounded_; }

 private:
  double cell_size_ = 1.0;
  double truncation_sigmas_ = 3.0;
  bool unbounded_ = false;
  std::vector<std::uint32_t> all_;
  std::unordered_map<Cell, std::vector<std::uint32_t>, CellHash> buckets_;
};

SpatialIndex build_index(std::span<const GaussianPrimitive> primitives, double cell_size,
                         double truncation_sigmas = 3.0);

struct RenderOptions {
  double truncation_sigmas = 3.0;
  /// Index cell size; <= 0 selects 4 x voxel_size.
  double cell_size = 0.0;
  /// When set, also splat `aux_confidence` (one value per primitive) with
  /// density weights into SplatField::confidence.
  bool confidence_weighted = false;
  std::span<const double> aux_confidence;
};

/// Double-precision splatting result.
struct SplatField {
  GridGeometry geometry;
  int classes = kDefaultClasses;
  std::vector<double> alpha;            // one per voxel
  std::vector<double> semantics;        // (classes - 1) per voxel
  std::vector<std::uint8_t> zero_density;  // 1 where sum p = 0 (uniform semantics)
  std::vector<double> confidence;       // one per voxel when requested

  double channel(std::size_t voxel, int c) const {
    if (c == classes - 1) return 1.0 - alpha[voxel];
    return alpha[voxel] * semantics[voxel * (classes - 1) + c];
  }
};

std::vector<double> splat_opacity(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                                  const SpatialIndex& index);

struct SemanticField {
  std::vector<double> values;           // (classes - 1) per voxel
  std::vector<std::uint8_t> zero_density;
};

SemanticField splat_semantics(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                              const SpatialIndex& index);

SplatField render_field(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                        const RenderOptions& options = {});
SplatField render_field_serial(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                               const RenderOptions& options = {});

/// Probability-mode grid with `classes` channels (empty last).
VoxelGrid to_probability_grid(const SplatField& field);
VoxelGrid render(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                 const RenderOptions& options = {}, int classes = kDefaultClasses);

/// Label = index of the max channel; ties go to the lower index, so the empty
/// channel (last) loses every tie.
VoxelGrid argmax_labels(const VoxelGrid& probabilities);

}  // namespace gsmem
