// Batch drivers for the monocular (per-frame) and embodied (memory) runs on
// synthetic scenes, plus their on-disk artifacts.
#pragma once

#include "gsmem/attention.hpp"
#include "gsmem/memory.hpp"
#include "gsmem/metrics.hpp"
#include "gsmem/splat.hpp"
#include "gsmem/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gsmem {

enum class RunMode { local, embodied, embodied_concat };

RunMode parse_run_mode(const std::string& s);
std::string to_string(RunMode m);

struct RunConfig {
  std::filesystem::path scene_path;  // empty selects default_scene()
  std::uint64_t seed = 1;            // trajectory and predictor noise
  int frames = 30;
  NoiseConfig noise;
  StubConfig stub;
  TrajectoryConfig trajectory;
  MemoryConfig memory;
  EncoderDims encoder;
  std::uint64_t weight_seed = 42;
  /// Monocular self-refinement through the encoder before fusion.
  bool local_refine = true;
  double truncation_sigmas = 3.0;
  std::filesystem::path output_dir;  // empty: no artifacts
  RunMode mode = RunMode::embodied;

  /// Throws InvalidInput naming the offending field.
  void validate() const;
};

struct Episode {
  SceneSpec spec;
  VoxelGrid gt;
  std::vector<CameraFrame> frames;
};

Episode make_episode(const RunConfig& cfg);
/// Predictor seed of frame i.
std::uint64_t frame_seed(std::uint64_t seed, int frame);
EncoderWeights make_weights(const RunConfig& cfg);
/// Argmax labels of the rendered primitives on the ground-truth geometry.
VoxelGrid render_labels(const GridGeometry& geometry, std::span<const GaussianPrimitive> primitives, int classes,
                        double truncation_sigmas = 3.0);

struct LocalRun {
  MetricReport overall;  // counts pooled over frames
  std::vector<MetricReport> per_frame;
};

/// Per frame: predict, optionally self-refine, fuse, render, score inside the frustum.
LocalRun run_local(const RunConfig& cfg);

struct EmbodiedFrame {
  std::uint64_t frame = 0;
  std::size_t memory_count = 0;
  std::size_t inside_fov = 0;
  std::size_t bytes = 0;
  std::size_t explored_cells = 0;  // distinct fusion cells any merge candidate has occupied so far
  double seconds = 0.0;
};

struct EmbodiedRun {
  MetricReport metrics;  // over the observed mask
  std::vector<EmbodiedFrame> frames;
  GaussianMemory memory;  // the append-only batch in concat mode (cells not unique)
  VoxelGrid labels;
};

/// The memory recurrence over the whole trajectory, or the append-only
/// baseline when cfg.mode is embodied_concat.
EmbodiedRun run_embodied(const RunConfig& cfg);

/// CSV with frame, memory_count, inside_fov, bytes, explored_cells.
std::string stats_csv(const std::vector<EmbodiedFrame>& frames);
/// CSV with frame, seconds.
std::string timing_csv(const std::vector<EmbodiedFrame>& frames);

/// Count, bytes, bounding box and per-class argmax histogram of a checkpoint.
std::string memory_report(const GaussianMemory& memory);

}  // namespace gsmem
