#include "gsmem/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gsmem {

namespace {

// Input ids grouped by cell: ids sorted by (cell, id) plus segment offsets.
struct Groups {
  std::vector<std::uint32_t> order;
  std::vector<std::size_t> offsets;  // size = groups + 1
};

Groups group_by_cell(std::span<const Cell> cells) {
  Groups g;
  g.order.resize(cells.size());
  std::iota(g.order.begin(), g.order.end(), 0u);
  std::stable_sort(g.order.begin(), g.order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return cells[a] < cells[b]; });
  g.offsets.push_back(0);
  for (std::size_t k = 1; k < g.order.size(); ++k)
    if (cells[g.order[k]] != cells[g.order[k - 1]]) g.offsets.push_back(k);
  if (!g.order.empty()) g.offsets.push_back(g.order.size());
  return g;
}

}  // namespace

void FusionConfig::validate() const {
  if (!(voxel_size > 0.0)) throw InvalidInput("fusion voxel_size must be positive");
  if (!(temperature > 0.0)) throw InvalidInput("fusion temperature must be positive");
}

Vec3 fusion_origin(std::span<const GaussianPrimitive> primitives, const FusionConfig& cfg) {
  if (cfg.origin_policy == GridOriginPolicy::world_zero || primitives.empty()) return Vec3::Zero();
  Vec3 lo = primitives.front().mean;
  for (const auto& g : primitives) lo = lo.cwiseMin(g.mean);
  return lo;
}

std::vector<Cell> assign_voxels(std::span<const GaussianPrimitive> primitives, const FusionConfig& cfg) {
  cfg.validate();
  return assign_voxels(primitives, fusion_origin(primitives, cfg), cfg.voxel_size);
}

std::vector<Cell> assign_voxels(std::span<const GaussianPrimitive> primitives, const Vec3& origin,
                                double voxel_size) {
  if (!(voxel_size > 0.0)) throw InvalidInput("fusion voxel_size must be positive");
  std::vector<Cell> cells;
  cells.reserve(primitives.size());
  for (const auto& g : primitives) cells.push_back(cell_of(g.mean, origin, voxel_size));
  return cells;
}

std::vector<double> fusion_weights(std::span<const double> confidences, std::span<const Cell> cells,
                                   double temperature) {
  if (confidences.size() != cells.size()) throw InvalidInput("confidence and cell counts differ");
  if (!(temperature > 0.0)) throw InvalidInput("temperature must be positive");
  std::vector<double> w(confidences.size(), 0.0);
  const Groups groups = group_by_cell(cells);
  for (std::size_t s = 0; s + 1 < groups.offsets.size(); ++s) {
    const auto begin = groups.order.begin() + static_cast<std::ptrdiff_t>(groups.offsets[s]);
    const auto end = groups.order.begin() + static_cast<std::ptrdiff_t>(groups.offsets[s + 1]);
    double m = -std::numeric_limits<double>::infinity();
    for (auto it = begin; it != end; ++it) m = std::max(m, confidences[*it]);
    double sum = 0.0;
    for (auto it = begin; it != end; ++it) {
      w[*it] = std::exp((confidences[*it] - m) / temperature);
      sum += w[*it];
    }
    for (auto it = begin; it != end; ++it) w[*it] /= sum;
  }
  return w;
}

FusionResult fuse(std::span<const GaussianPrimitive> primitives, const Eigen::MatrixXd& features,
                  std::span<const double> weights, std::span<const Cell> cells) {
  const std::size_t n = primitives.size();
  if (weights.size() != n || cells.size() != n) throw InvalidInput("fuse inputs have mismatched lengths");
  if (features.rows() != static_cast<Eigen::Index>(n) && !(n == 0 && features.size() == 0))
    throw InvalidInput("feature rows do not match primitive count");

  const Groups groups = group_by_cell(cells);
  const std::size_t count = groups.offsets.empty() ? 0 : groups.offsets.size() - 1;

  FusionResult out;
  out.primitives.resize(count);
  out.features.resize(static_cast<Eigen::Index>(count), features.cols());
  out.cells.resize(count);
  out.members.resize(count);
  out.quat_fallback.assign(count, 0);

  const auto total = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t s = 0; s < total; ++s) {
    const std::span<const std::uint32_t> ids(groups.order.data() + groups.offsets[s],
                                             groups.offsets[s + 1] - groups.offsets[s]);
    out.cells[s] = cells[ids.front()];
    out.members[s].assign(ids.begin(), ids.end());
    if (ids.size() == 1) {
      out.primitives[s] = primitives[ids.front()];
      out.features.row(s) = features.row(ids.front());
      continue;
    }
    std::uint32_t lead = ids.front();
    for (std::uint32_t id : ids)
      if (weights[id] > weights[lead]) lead = id;
    const Quat& lead_q = primitives[lead].rotation;

    GaussianPrimitive merged;
    merged.mean.setZero();
    merged.scale.setZero();
    merged.opacity = 0.0;
    merged.logits = Eigen::VectorXd::Zero(primitives[lead].logits.size());
    Quat q_sum = Quat::Zero();
    Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(features.cols());
    for (std::uint32_t id : ids) {
      const double w = weights[id];
      const GaussianPrimitive& g = primitives[id];
      merged.mean += w * g.mean;
      merged.scale += w * g.scale;
      merged.opacity += w * g.opacity;
      merged.logits += w * g.logits;
      q_sum += (g.rotation.dot(lead_q) < 0.0 ? -w : w) * g.rotation;
      f += w * features.row(id);
    }
    const double qn = q_sum.norm();
    if (qn < 1e-8) {
      merged.rotation = lead_q;
      out.quat_fallback[s] = 1;
    } else {
      merged.rotation = q_sum / qn;
    }
    merged.opacity = std::clamp(merged.opacity, 0.0, 1.0);
    out.primitives[s] = std::move(merged);
    out.features.row(s) = f;
  }
  return out;
}

FusedBatch fuse_batch(const PrimitiveBatch& batch, const FusionConfig& cfg, const ConfidenceConfig& conf) {
  batch.validate();
  const std::vector<Cell> cells = assign_voxels(batch.primitives, cfg);
  const std::vector<double> w = fusion_weights(batch.confidences, cells, cfg.temperature);
  FusionResult r = fuse(batch.primitives, batch.features, w, cells);
  FusedBatch out;
  out.batch.primitives = std::move(r.primitives);
  out.batch.features = std::move(r.features);
  out.batch.confidences = confidence_batch(out.batch.primitives, conf);
  out.cells = std::move(r.cells);
  return out;
}

}  // namespace gsmem
