// Persistent world-frame Gaussian memory.
//
// Per frame: retrieve the stored primitives whose means fall inside the camera
// frustum, refine them jointly with the new local prediction through the dual
// temporal encoder, and merge the union back with confidence-aware voxel
// fusion. Primitives outside the frustum are carried over untouched unless
// their fusion cell receives new content, in which case they join the merge.
// After every update each fusion cell holds at most one primitive.
#pragma once

#include "gsmem/attention.hpp"
#include "gsmem/confidence.hpp"
#include "gsmem/core.hpp"
#include "gsmem/fusion.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace gsmem {

struct MemoryConfig {
  ConfidenceConfig confidence;
  FusionConfig fusion;
  int n_blocks = 2;
  /// Cull on the 3-sigma box corners as well as the mean.
  bool extent_culling = false;
};

struct FrameStats {
  std::uint64_t frame = 0;
  std::size_t count = 0;
  std::size_t bytes = 0;
  std::size_t inside_fov = 0;
};

struct FovSplit {
  std::vector<std::uint32_t> inside;
  std::vector<std::uint32_t> outside;
};

class GaussianMemory {
 public:
  PrimitiveBatch batch;
  std::vector<Cell> cells;  // fusion cell of each stored primitive
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.12;
  int classes = kDefaultClasses;
  /// Frames absorbed so far; initialization counts as the first.
  std::uint64_t frame_counter = 0;
  std::vector<FrameStats> stats;
  /// Every fusion cell a merge candidate has occupied; not persisted.
  std::unordered_set<Cell, CellHash> touched;

  std::size_t size() const { return batch.size(); }
  /// Bytes of the packed f32 records (mean, scale, quat, opacity, logits, feature).
  std::size_t bytes() const;
  static std::size_t record_floats(int classes, int d_model) { return 11 + (classes - 1) + d_model; }
  /// Fusion cell -> primitive row.
  const std::unordered_map<Cell, std::uint32_t, CellHash>& cell_index() const { return cell_index_; }

  /// Recomputes cells and the cell index from the stored means, merging any
  /// colliding pair (possible only through rounding) so cells stay unique.
  /// Rows end up sorted by cell.
  void reindex(const MemoryConfig& cfg);
  /// Recomputes cells and the index without merging or reordering; the
  /// index keeps the first row of a repeated cell.
  void rebuild_cells();
  /// Throws std::logic_error when a stored invariant is broken.
  void check_invariants() const;

 private:
  std::unordered_map<Cell, std::uint32_t, CellHash> cell_index_;
};

/// Rounds every attribute and feature to f32 precision (the checkpoint precision).
void quantize(PrimitiveBatch& batch);

GaussianMemory init_memory(const PrimitiveBatch& first_prediction, const MemoryConfig& cfg);

FovSplit query_fov(const GaussianMemory& memory, const CameraFrame& frame, bool extent_culling = false);

/// One recurrence step. An empty local prediction only advances the counters.
GaussianMemory update(GaussianMemory memory, const PrimitiveBatch& local_prediction, const CameraFrame& frame,
                      const EncoderWeights& weights, const MemoryConfig& cfg);

void write_gmem(std::ostream& os, const GaussianMemory& memory);
/// Reads a checkpoint verbatim (row order kept, nothing merged); cells are
/// rebuilt from the stored means and confidences use the default config.
GaussianMemory read_gmem(std::istream& is);
void save_gmem(const std::filesystem::path& path, const GaussianMemory& memory);
GaussianMemory load_gmem(const std::filesystem::path& path);

}  // namespace gsmem
