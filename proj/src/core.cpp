#include "gsmem/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gsmem {

namespace {

Quat normalized_quat(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidInput("quaternion has zero norm");
  return q / n;
}

}  // namespace

GaussianPrimitive make_primitive(const Vec3& mean, const Vec3& scale, const Quat& rotation,
                                 double opacity, Eigen::VectorXd logits) {
  GaussianPrimitive g;
  g.mean = mean;
  g.scale = scale.cwiseMax(kMinScale);
  g.rotation = normalized_quat(rotation);
  g.opacity = std::clamp(opacity, 0.0, 1.0);
  g.logits = std::move(logits);
  return g;
}

void PrimitiveBatch::validate() const {
  const auto n = static_cast<Eigen::Index>(primitives.size());
  if (features.rows() != n && !(n == 0 && features.size() == 0))
    throw InvalidInput("feature rows do not match primitive count");
  if (confidences.size() != primitives.size())
    throw InvalidInput("confidence count does not match primitive count");
}

PrimitiveBatch concat(const PrimitiveBatch& a, const PrimitiveBatch& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.features.cols() != b.features.cols()) throw InvalidInput("feature widths differ");
  PrimitiveBatch out;
  out.primitives = a.primitives;
  out.primitives.insert(out.primitives.end(), b.primitives.begin(), b.primitives.end());
  out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
  out.features << a.features, b.features;
  out.confidences = a.confidences;
  out.confidences.insert(out.confidences.end(), b.confidences.begin(), b.confidences.end());
  return out;
}

PrimitiveBatch select(const PrimitiveBatch& batch, std::span<const std::uint32_t> rows) {
  PrimitiveBatch out;
  out.primitives.reserve(rows.size());
  out.confidences.reserve(rows.size());
  out.features.resize(static_cast<Eigen::Index>(rows.size()), batch.features.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.primitives.push_back(batch.primitives[rows[k]]);
    out.confidences.push_back(batch.confidences[rows[k]]);
    out.features.row(static_cast<Eigen::Index>(k)) = batch.features.row(rows[k]);
  }
  return out;
}

void CameraFrame::validate() const {
  if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0))
    throw InvalidInput("focal lengths must be positive");
  if (!(near < far)) throw InvalidInput("near must be less than far");
  if (width <= 0 || height <= 0) throw InvalidInput("image dimensions must be positive");
  const Mat3 rrt = pose.rotation * pose.rotation.transpose();
  if ((rrt - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw InvalidInput("pose rotation is not orthonormal");
}

Eigen::Vector2d CameraFrame::project(const Vec3& p_world) const {
  const Vec3 pc = pose.to_camera(p_world);
  return {intrinsics(0, 0) * pc.x() / pc.z() + intrinsics(0, 2),
          intrinsics(1, 1) * pc.y() / pc.z() + intrinsics(1, 2)};
}

bool CameraFrame::contains(const Vec3& p_world) const {
  const Vec3 pc = pose.to_camera(p_world);
  if (!(pc.z() >= near && pc.z() <= far)) return false;
  const double u = intrinsics(0, 0) * pc.x() / pc.z() + intrinsics(0, 2);
  const double v = intrinsics(1, 1) * pc.y() / pc.z() + intrinsics(1, 2);
  return u >= 0.0 && u < width && v >= 0.0 && v < height;
}

Mat3 default_intrinsics() {
  Mat3 k;
  k << 500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0;
  return k;
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Pose p;
  p.rotation.col(0) = right;
  p.rotation.col(1) = down;
  p.rotation.col(2) = forward;
  p.translation = eye;
  return p;
}

Cell cell_of(const Vec3& p, const Vec3& origin, double cell_size) {
  const Vec3 r = (p - origin) / cell_size;
  return {static_cast<std::int32_t>(std::floor(r.x())), static_cast<std::int32_t>(std::floor(r.y())),
          static_cast<std::int32_t>(std::floor(r.z()))};
}

Mat3 quat_to_rotation(const Quat& q_in) {
  const Quat q = normalized_quat(q_in);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Covariance covariance(const Vec3& scale, const Quat& q) {
  if (!(scale.minCoeff() > 0.0)) throw InvalidInput("scale components must be positive");
  const Mat3 r = quat_to_rotation(q);
  const Mat3 rs = r * scale.asDiagonal();
  Covariance c = rs * rs.transpose();
  return 0.5 * (c + c.transpose());
}

PreparedGaussian prepare(const GaussianPrimitive& g) {
  if (!(g.scale.minCoeff() > 0.0)) throw InvalidInput("scale components must be positive");
  const Mat3 r = quat_to_rotation(g.rotation);
  const Vec3 inv_sq = g.scale.cwiseProduct(g.scale).cwiseInverse();
  PreparedGaussian p;
  p.mean = g.mean;
  p.inv_cov = r * inv_sq.asDiagonal() * r.transpose();
  const double det_sqrt = g.scale.prod();
  p.norm = 1.0 / (std::pow(2.0 * std::numbers::pi, 1.5) * det_sqrt);
  const Vec3 sq = g.scale.cwiseProduct(g.scale);
  // diag(R S^2 R^T)_k = sum_j R_kj^2 s_j^2
  p.axis_sigma = (r.cwiseProduct(r) * sq).cwiseSqrt();
  return p;
}

double kernel(const Vec3& x, const GaussianPrimitive& g) { return prepare(g).kernel(x); }

double density(const Vec3& x, const GaussianPrimitive& g) {
  const PreparedGaussian p = prepare(g);
  return p.norm * p.kernel(x);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) return logits;
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace gsmem
