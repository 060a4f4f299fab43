// Gaussian primitives, camera frames and the closed-form Gaussian math
// shared by every other module.
#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsmem {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// Quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4d;
using Covariance = Mat3;

/// Raised when an argument violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a file does not match its binary layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Total class count: 11 occupied classes plus empty (last index).
inline constexpr int kDefaultClasses = 12;
inline constexpr double kMinScale = 1e-4;

/// One anisotropic semantic Gaussian. Logits cover the C-1 occupied classes;
/// the empty probability is carried by opacity alone. Feature embeddings live
/// row-wise in PrimitiveBatch::features.
struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Quat rotation = Quat(1.0, 0.0, 0.0, 0.0);
  double opacity = 1.0;
  Eigen::VectorXd logits;
};

/// Builds a primitive with scales clamped to kMinScale, a normalized rotation
/// and opacity clamped to [0,1]. Throws InvalidInput on a zero quaternion.
GaussianPrimitive make_primitive(const Vec3& mean, const Vec3& scale, const Quat& rotation,
                                 double opacity, Eigen::VectorXd logits);

/// Primitives with their feature rows and per-primitive confidences.
struct PrimitiveBatch {
  std::vector<GaussianPrimitive> primitives;
  Eigen::MatrixXd features;  // N x d_model
  std::vector<double> confidences;

  std::size_t size() const { return primitives.size(); }
  bool empty() const { return primitives.empty(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  void validate() const;
};

/// Concatenates two batches (a rows first). Feature widths must agree unless
/// one side is empty.
PrimitiveBatch concat(const PrimitiveBatch& a, const PrimitiveBatch& b);
/// Gathers the given rows of a batch.
PrimitiveBatch select(const PrimitiveBatch& batch, std::span<const std::uint32_t> rows);

/// Rigid transform camera -> world.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 to_camera(const Vec3& p_world) const { return rotation.transpose() * (p_world - translation); }
};

/// Pinhole camera with OpenCV axes (x right, y down, z forward). Pixel (u, v)
/// has its center at integer coordinates.
struct CameraFrame {
  Mat3 intrinsics = Mat3::Identity();
  Pose pose;
  int width = 640;
  int height = 480;
  double near = 0.1;
  double far = 10.0;

  void validate() const;
  /// True iff p_world lies at depth [near, far] and projects into [0, width) x [0, height).
  bool contains(const Vec3& p_world) const;
  Eigen::Vector2d project(const Vec3& p_world) const;
  Vec3 position() const { return pose.translation; }
};

/// Default synthetic intrinsics: 640x480, f = 500, principal point (320, 240).
Mat3 default_intrinsics();
/// Camera-to-world pose looking from eye toward target with world +z up.
Pose look_at(const Vec3& eye, const Vec3& target);

/// Integer 3-cell used by the spatial index and voxel fusion.
struct Cell {
  std::int32_t x = 0, y = 0, z = 0;
  auto operator<=>(const Cell&) const = default;
};

struct CellHash {
  std::size_t operator()(const Cell& c) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(c.x);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.y);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.z);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

Cell cell_of(const Vec3& p, const Vec3& origin, double cell_size);

// ---- closed-form Gaussian math ----

Mat3 quat_to_rotation(const Quat& q);
/// R diag(s^2) R^T. Throws InvalidInput on non-positive scale.
Covariance covariance(const Vec3& scale, const Quat& q);
/// exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)).
double kernel(const Vec3& x, const GaussianPrimitive& g);
/// Normalized Gaussian pdf.
double density(const Vec3& x, const GaussianPrimitive& g);

/// Per-primitive quantities cached for a render pass. The inverse covariance
/// is R diag(s^-2) R^T, never a generic solve.
struct PreparedGaussian {
  Vec3 mean;
  Mat3 inv_cov;
  double norm = 0.0;    // 1 / ((2 pi)^{3/2} |Sigma|^{1/2})
  Vec3 axis_sigma;      // sqrt(diag Sigma), half-extent of the 1-sigma AABB

  double mahalanobis_sq(const Vec3& x) const {
    const Vec3 d = x - mean;
    return d.dot(inv_cov * d);
  }
  double kernel(const Vec3& x) const { return std::exp(-0.5 * mahalanobis_sq(x)); }
};

PreparedGaussian prepare(const GaussianPrimitive& g);

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace gsmem
