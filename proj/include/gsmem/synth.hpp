// Synthetic scenes standing in for the perception stack: box-built ground
// truth, DDA depth rendering, the depth-guided lifter, orbit trajectories and
// a noise-controllable local predictor.
#pragma once

#include "gsmem/confidence.hpp"
#include "gsmem/core.hpp"
#include "gsmem/grid.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <vector>

namespace gsmem {

struct SceneBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  int label = 0;
};

struct SceneSpec {
  Vec3 origin = Vec3::Zero();  // world position of the grid corner
  Vec3 extent{4.8, 4.8, 2.88};
  double gt_voxel_size = 0.08;
  std::vector<SceneBox> boxes;  // later boxes overwrite earlier ones
  std::uint64_t seed = 0;
  int classes = kDefaultClasses;

  GridGeometry geometry() const;
  void validate() const;
};

/// Room with floor, four walls, flush patches of other classes on the floor
/// and walls, and one low free-standing panel. The grid corner sits
/// one voxel below and behind the world origin so that the inner wall and
/// floor faces land on 0.12 m lattice planes; every box face is a multiple of
/// 0.24 m from the origin.
SceneSpec default_scene();

/// Line format: `origin x y z`, `extent x y z`, `voxel_size v`, `seed n`,
/// `classes n`, `box x0 y0 z0 x1 y1 z1 label`; `#` starts a comment.
SceneSpec parse_scene(std::istream& is);
SceneSpec load_scene(const std::filesystem::path& path);
void write_scene(std::ostream& os, const SceneSpec& spec);

/// Label grid; each voxel takes the label of the last box containing its center.
VoxelGrid generate_scene(const SceneSpec& spec);

struct RayHit {
  double depth = std::numeric_limits<double>::infinity();  // ray parameter = camera z
  std::int64_t voxel = -1;  // linear index of the first occupied voxel
  int axis = -1;            // axis of the entered face; -1 when starting inside
  int step = 0;             // direction of travel along `axis` (+1 or -1)
  bool inside = false;      // ray origin already in an occupied voxel
};

/// Walks o + t d (d in world units, t in [0, far]) voxel by voxel.
RayHit trace_ray(const VoxelGrid& gt, const Vec3& origin, const Vec3& direction, double far);

/// World direction of pixel (u, v) scaled so that its camera-z component is 1.
Vec3 pixel_ray(const CameraFrame& frame, double u, double v);

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depths;        // camera z per pixel; infinity = no hit
  std::vector<std::uint8_t> inside;  // 1 where the camera starts in an occupied voxel (depth 0)

  double at(int u, int v) const { return depths[static_cast<std::size_t>(v) * width + u]; }
};

/// Full-image render, parallel over rows.
DepthImage render_depth(const VoxelGrid& gt, const CameraFrame& frame);
/// Renders only the given pixels; the rest stay at infinity.
DepthImage render_depth_at(const VoxelGrid& gt, const CameraFrame& frame,
                           const std::vector<std::array<int, 2>>& pixels);

/// Pixel centers of a uniform rows x cols sample grid over the image.
std::vector<std::array<int, 2>> sample_pixels(int width, int height, int rows = 30, int cols = 40);

struct LiftOptions {
  int rows = 30;
  int cols = 40;
  double scale = 0.08;
  /// Randomized attributes (rotation, scale jitter, opacity) from `seed`.
  bool randomize = false;
  std::uint64_t seed = 0;
};

struct LiftResult {
  std::vector<GaussianPrimitive> primitives;
  std::vector<std::array<int, 2>> pixels;  // source pixel per primitive
};

/// Back-projects finite depth samples: mu = pose(d K^-1 (u, v, 1)), identity
/// rotation, isotropic `scale`, opacity 0.5, zero logits.
LiftResult lift(const DepthImage& depth, const CameraFrame& frame, const LiftOptions& options = {},
                int classes = kDefaultClasses);

struct NoiseConfig {
  double depth_sigma = 0.0;
  double logit_noise = 0.0;
  double flip_prob = 0.0;
};

/// Shape and semantics of the predictor stub.
struct StubConfig {
  int d_model = 32;
  int classes = kDefaultClasses;
  double logit_magnitude = 8.0;
  double tangent_scale = 0.065;
  double normal_scale = 0.02;
  /// Opacity when the perturbed mean leaves the hit voxel.
  double inconsistent_opacity = 0.5;
  LiftOptions lift;
  ConfidenceConfig confidence;
};

/// Deterministic stand-in for image encoder + Gaussian encoder. Each sample
/// ray is traced to the ground truth, its depth perturbed, lifted, pushed half
/// a voxel into the hit face and shaped as a disc along that face. The hit
/// voxel's label becomes a one-hot logit (subject to flips and additive
/// noise); features are a fixed random projection of (class probabilities, mean).
PrimitiveBatch stub_predict(const VoxelGrid& gt, const CameraFrame& frame, const NoiseConfig& noise,
                            std::uint64_t seed, const StubConfig& cfg = {});

struct TrajectoryConfig {
  double radius_fraction = 0.25;  // of the smaller horizontal extent
  double height = 1.4;
  double look_ahead = 1.0;        // target distance past the scene center
  double target_height = 1.1;
  double jitter = 0.05;
  int width = 640;
  int height_px = 480;
};

/// One full orbit around the scene center, looking across it; the phase and
/// positional jitter come from `seed`. Throws InvalidInput when no candidate
/// eye position is free.
std::vector<CameraFrame> generate_trajectory(const SceneSpec& spec, const VoxelGrid& gt, int n_frames,
                                             std::uint64_t seed, const TrajectoryConfig& cfg = {});

}  // namespace gsmem
