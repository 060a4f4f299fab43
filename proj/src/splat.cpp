#include "gsmem/splat.hpp"

#include <cmath>

namespace gsmem {

namespace {

int classes_of(std::span<const GaussianPrimitive> primitives, int fallback) {
  if (primitives.empty()) return fallback;
  return static_cast<int>(primitives.front().logits.size()) + 1;
}

struct PreparedScene {
  std::vector<PreparedGaussian> gaussians;
  std::vector<double> opacity;
  Eigen::MatrixXd probs;  // (classes - 1) x N, column per primitive
};

PreparedScene prepare_scene(std::span<const GaussianPrimitive> primitives, int classes) {
  PreparedScene s;
  s.gaussians.reserve(primitives.size());
  s.opacity.reserve(primitives.size());
  s.probs.resize(classes - 1, static_cast<Eigen::Index>(primitives.size()));
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& g = primitives[i];
    if (g.logits.size() != classes - 1) throw InvalidInput("primitive logits length mismatch");
    s.gaussians.push_back(prepare(g));
    s.opacity.push_back(g.opacity);
    s.probs.col(static_cast<Eigen::Index>(i)) = softmax(g.logits);
  }
  return s;
}

double effective_cell_size(const GridGeometry& grid, const RenderOptions& options) {
  return options.cell_size > 0.0 ? options.cell_size : 4.0 * grid.voxel_size;
}

// Evaluates one voxel. `sem_out` receives classes - 1 values.
struct VoxelResult {
  double alpha;
  bool zero_density;
  double confidence;
};

VoxelResult splat_voxel(const Vec3& x, std::span<const std::uint32_t> neighbors, const PreparedScene& s,
                        std::span<const double> aux, double* sem_out, int sem_dims) {
  double transmit = 1.0;
  double p_sum = 0.0;
  double conf_sum = 0.0;
  for (int l = 0; l < sem_dims; ++l) sem_out[l] = 0.0;
  for (std::uint32_t id : neighbors) {
    const PreparedGaussian& g = s.gaussians[id];
    const double k = g.kernel(x);
    transmit *= 1.0 - k * s.opacity[id];
    const double p = g.norm * k;
    if (p == 0.0) continue;
    p_sum += p;
    const double* col = s.probs.col(id).data();
    for (int l = 0; l < sem_dims; ++l) sem_out[l] += p * col[l];
    if (!aux.empty()) conf_sum += p * aux[id];
  }
  VoxelResult r{1.0 - transmit, p_sum == 0.0, 0.0};
  if (r.zero_density) {
    const double u = 1.0 / sem_dims;
    for (int l = 0; l < sem_dims; ++l) sem_out[l] = u;
  } else {
    for (int l = 0; l < sem_dims; ++l) sem_out[l] /= p_sum;
    r.confidence = conf_sum / p_sum;
  }
  return r;
}

template <bool Parallel>
SplatField render_impl(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                       const RenderOptions& options, int classes) {
  grid.validate();
  if (options.confidence_weighted && options.aux_confidence.size() != primitives.size())
    throw InvalidInput("aux_confidence must have one value per primitive");
  const PreparedScene scene = prepare_scene(primitives, classes);
  const SpatialIndex index(primitives, effective_cell_size(grid, options), options.truncation_sigmas);
  const std::span<const double> aux =
      options.confidence_weighted ? options.aux_confidence : std::span<const double>{};

  SplatField f;
  f.geometry = grid;
  f.classes = classes;
  const std::size_t n = grid.voxel_count();
  const int sem = classes - 1;
  f.alpha.assign(n, 0.0);
  f.semantics.assign(n * sem, 0.0);
  f.zero_density.assign(n, 0);
  if (options.confidence_weighted) f.confidence.assign(n, 0.0);

  const auto body = [&](std::int64_t v) {
    const Vec3 x = grid.center(static_cast<std::size_t>(v));
    const VoxelResult r = splat_voxel(x, index.query(x), scene, aux, f.semantics.data() + v * sem, sem);
    f.alpha[v] = r.alpha;
    f.zero_density[v] = r.zero_density ? 1 : 0;
    if (options.confidence_weighted) f.confidence[v] = r.confidence;
  };

  const auto count = static_cast<std::int64_t>(n);
  if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic, 256)
    for (std::int64_t v = 0; v < count; ++v) body(v);
  } else {
    for (std::int64_t v = 0; v < count; ++v) body(v);
  }
  return f;
}

}  // namespace

SpatialIndex::SpatialIndex(std::span<const GaussianPrimitive> primitives, double cell_size,
                           double truncation_sigmas)
    : cell_size_(cell_size), truncation_sigmas_(truncation_sigmas) {
  if (!(cell_size > 0.0)) throw InvalidInput("cell_size must be positive");
  if (!(truncation_sigmas > 0.0)) throw InvalidInput("truncation radius must be positive");
  unbounded_ = !std::isfinite(truncation_sigmas);
  if (unbounded_) {
    all_.resize(primitives.size());
    for (std::size_t i = 0; i < primitives.size(); ++i) all_[i] = static_cast<std::uint32_t>(i);
    return;
  }
  const Vec3 origin = Vec3::Zero();
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const PreparedGaussian g = prepare(primitives[i]);
    const Vec3 half = truncation_sigmas * g.axis_sigma;
    const Cell lo = cell_of(g.mean - half, origin, cell_size);
    const Cell hi = cell_of(g.mean + half, origin, cell_size);
    for (std::int32_t z = lo.z; z <= hi.z; ++z)
      for (std::int32_t y = lo.y; y <= hi.y; ++y)
        for (std::int32_t x = lo.x; x <= hi.x; ++x)
          buckets_[Cell{x, y, z}].push_back(static_cast<std::uint32_t>(i));
  }
}

std::span<const std::uint32_t> SpatialIndex::query(const Vec3& x) const {
  if (unbounded_) return all_;
  const auto it = buckets_.find(cell_of(x, Vec3::Zero(), cell_size_));
  if (it == buckets_.end()) return {};
  return it->second;
}

SpatialIndex build_index(std::span<const GaussianPrimitive> primitives, double cell_size,
                         double truncation_sigmas) {
  return SpatialIndex(primitives, cell_size, truncation_sigmas);
}

std::vector<double> splat_opacity(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                                  const SpatialIndex& index) {
  grid.validate();
  std::vector<PreparedGaussian> prepared;
  prepared.reserve(primitives.size());
  for (const auto& g : primitives) prepared.push_back(prepare(g));
  std::vector<double> alpha(grid.voxel_count(), 0.0);
  const auto count = static_cast<std::int64_t>(alpha.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t v = 0; v < count; ++v) {
    const Vec3 x = grid.center(static_cast<std::size_t>(v));
    double transmit = 1.0;
    for (std::uint32_t id : index.query(x)) transmit *= 1.0 - prepared[id].kernel(x) * primitives[id].opacity;
    alpha[v] = 1.0 - transmit;
  }
  return alpha;
}

SemanticField splat_semantics(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                              const SpatialIndex& index) {
  grid.validate();
  const int classes = classes_of(primitives, kDefaultClasses);
  const PreparedScene scene = prepare_scene(primitives, classes);
  const int sem = classes - 1;
  SemanticField out;
  out.values.assign(grid.voxel_count() * sem, 0.0);
  out.zero_density.assign(grid.voxel_count(), 0);
  const auto count = static_cast<std::int64_t>(grid.voxel_count());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t v = 0; v < count; ++v) {
    const Vec3 x = grid.center(static_cast<std::size_t>(v));
    const VoxelResult r = splat_voxel(x, index.query(x), scene, {}, out.values.data() + v * sem, sem);
    out.zero_density[v] = r.zero_density ? 1 : 0;
  }
  return out;
}

SplatField render_field(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                        const RenderOptions& options) {
  return render_impl<true>(grid, primitives, options, classes_of(primitives, kDefaultClasses));
}

SplatField render_field_serial(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                               const RenderOptions& options) {
  return render_impl<false>(grid, primitives, options, classes_of(primitives, kDefaultClasses));
}

VoxelGrid to_probability_grid(const SplatField& field) {
  VoxelGrid out = VoxelGrid::probability(field.geometry, static_cast<std::uint32_t>(field.classes));
  const std::size_t n = field.geometry.voxel_count();
  const int c = field.classes;
  for (std::size_t v = 0; v < n; ++v)
    for (int l = 0; l < c; ++l) out.probs[v * c + l] = static_cast<float>(field.channel(v, l));
  return out;
}

VoxelGrid render(const GridGeometry& grid, std::span<const GaussianPrimitive> primitives,
                 const RenderOptions& options, int classes) {
  if (!primitives.empty() && classes_of(primitives, classes) != classes)
    throw InvalidInput("primitive logits do not match class count");
  return to_probability_grid(render_impl<true>(grid, primitives, options, classes));
}

VoxelGrid argmax_labels(const VoxelGrid& probabilities) {
  if (probabilities.mode != GridMode::probability) throw InvalidInput("argmax_labels needs a probability grid");
  VoxelGrid out = VoxelGrid::label(probabilities.geometry, probabilities.classes);
  const std::size_t n = probabilities.geometry.voxel_count();
  const std::uint32_t c = probabilities.classes;
  for (std::size_t v = 0; v < n; ++v) {
    const float* row = probabilities.probs.data() + v * c;
    std::uint32_t best = 0;
    for (std::uint32_t l = 1; l < c; ++l)
      if (row[l] > row[best]) best = l;
    out.labels[v] = static_cast<std::uint16_t>(best);
  }
  return out;
}

}  // namespace gsmem
