// Dense voxel grids (per-class probabilities or labels) and the `.vgrid` file format.
#pragma once

#include "gsmem/core.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace gsmem {

struct GridGeometry {
  Vec3 origin = Vec3::Zero();  // world position of the (0,0,0) voxel corner
  double voxel_size = 0.08;
  std::array<int, 3> dims{60, 60, 36};

  void validate() const;
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  /// x fastest, then y, then z.
  std::size_t linear(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k);
  }
  std::array<int, 3> unravel(std::size_t v) const {
    const int i = static_cast<int>(v % dims[0]);
    const std::size_t r = v / dims[0];
    return {i, static_cast<int>(r % dims[1]), static_cast<int>(r / dims[1])};
  }
  Vec3 center(int i, int j, int k) const {
    return origin + voxel_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  Vec3 center(std::size_t v) const {
    const auto c = unravel(v);
    return center(c[0], c[1], c[2]);
  }
  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  bool operator==(const GridGeometry&) const = default;
};

/// 4.8 x 4.8 x 2.88 m at 0.08 m (60 x 60 x 36).
GridGeometry default_geometry();

/// One byte per voxel in linear order; nonzero = selected.
using VoxelMask = std::vector<std::uint8_t>;

enum class GridMode : std::uint8_t { probability = 0, label = 1 };

/// Probability mode stores `classes` floats per voxel (occupied classes, then
/// empty last). Label mode stores one class index per voxel; the empty label
/// is classes - 1.
struct VoxelGrid {
  GridGeometry geometry;
  GridMode mode = GridMode::label;
  std::uint32_t classes = kDefaultClasses;
  std::vector<float> probs;
  std::vector<std::uint16_t> labels;

  static VoxelGrid probability(const GridGeometry& g, std::uint32_t classes);
  static VoxelGrid label(const GridGeometry& g, std::uint32_t classes);

  std::uint16_t empty_label() const { return static_cast<std::uint16_t>(classes - 1); }
  float prob(std::size_t voxel, std::uint32_t channel) const { return probs[voxel * classes + channel]; }
  bool occupied(std::size_t voxel) const { return labels[voxel] != empty_label(); }
  bool operator==(const VoxelGrid&) const = default;
};

void write_vgrid(std::ostream& os, const VoxelGrid& grid);
VoxelGrid read_vgrid(std::istream& is);
void save_vgrid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid load_vgrid(const std::filesystem::path& path);

}  // namespace gsmem
