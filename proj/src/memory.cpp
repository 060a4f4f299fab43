#include "gsmem/memory.hpp"

#include "gsmem/binary_io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace gsmem {

namespace {

constexpr std::uint32_t kGmemVersion = 1;

double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

void push_stats(GaussianMemory& m, std::size_t inside) {
  m.stats.push_back({m.frame_counter, m.size(), m.bytes(), inside});
}

bool in_view(const CameraFrame& frame, const GaussianPrimitive& g, bool extent) {
  if (frame.contains(g.mean)) return true;
  if (!extent) return false;
  const Vec3 half = 3.0 * prepare(g).axis_sigma;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 sign((corner & 1) ? 1.0 : -1.0, (corner & 2) ? 1.0 : -1.0, (corner & 4) ? 1.0 : -1.0);
    if (frame.contains(g.mean + sign.cwiseProduct(half))) return true;
  }
  return false;
}

}  // namespace

std::size_t GaussianMemory::bytes() const {
  return size() * record_floats(classes, batch.feature_dim()) * sizeof(float);
}

void quantize(PrimitiveBatch& batch) {
  for (auto& g : batch.primitives) {
    g.mean = g.mean.unaryExpr(&to_f32);
    g.scale = g.scale.unaryExpr(&to_f32);
    g.rotation = g.rotation.unaryExpr(&to_f32);
    g.opacity = to_f32(g.opacity);
    g.logits = g.logits.unaryExpr(&to_f32);
  }
  batch.features = batch.features.unaryExpr(&to_f32);
}

void GaussianMemory::reindex(const MemoryConfig& cfg) {
  for (;;) {
    std::vector<Cell> fresh = assign_voxels(batch.primitives, origin, voxel_size);
    std::unordered_set<Cell, CellHash> seen;
    bool collision = false;
    for (const Cell& c : fresh)
      if (!seen.insert(c).second) {
        collision = true;
        break;
      }
    batch.confidences = confidence_batch(batch.primitives, cfg.confidence);
    const std::vector<double> w = collision ? fusion_weights(batch.confidences, fresh, cfg.fusion.temperature)
                                            : std::vector<double>(fresh.size(), 1.0);
    // fuse() copies singleton cells verbatim, so this also sorts rows by cell.
    FusionResult r = fuse(batch.primitives, batch.features, w, fresh);
    batch.primitives = std::move(r.primitives);
    batch.features = std::move(r.features);
    cells = std::move(r.cells);
    if (collision) {
      quantize(batch);
      continue;
    }
    batch.confidences = confidence_batch(batch.primitives, cfg.confidence);
    break;
  }
  rebuild_cells();
}

void GaussianMemory::rebuild_cells() {
  cells = assign_voxels(batch.primitives, origin, voxel_size);
  cell_index_.clear();
  for (std::size_t i = 0; i < cells.size(); ++i) cell_index_.emplace(cells[i], static_cast<std::uint32_t>(i));
}

void GaussianMemory::check_invariants() const {
  batch.validate();
  if (cells.size() != size()) throw std::logic_error("cell list out of sync");
  if (cell_index_.size() != size()) throw std::logic_error("duplicate fusion cell in memory");
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& g = batch.primitives[i];
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) throw std::logic_error("non-unit rotation in memory");
    if (!(g.scale.minCoeff() > 0.0)) throw std::logic_error("non-positive scale in memory");
    if (g.opacity < 0.0 || g.opacity > 1.0) throw std::logic_error("opacity out of range in memory");
    if (g.logits.size() != classes - 1) throw std::logic_error("logit width mismatch in memory");
  }
}

GaussianMemory init_memory(const PrimitiveBatch& first, const MemoryConfig& cfg) {
  if (first.empty()) throw InvalidInput("initial prediction is empty");
  first.validate();
  cfg.fusion.validate();
  GaussianMemory m;
  m.origin = fusion_origin(first.primitives, cfg.fusion);
  m.voxel_size = cfg.fusion.voxel_size;
  m.classes = static_cast<int>(first.primitives.front().logits.size()) + 1;

  const std::vector<Cell> cells = assign_voxels(first.primitives, m.origin, m.voxel_size);
  const std::vector<double> w = fusion_weights(first.confidences, cells, cfg.fusion.temperature);
  FusionResult r = fuse(first.primitives, first.features, w, cells);
  m.touched.insert(cells.begin(), cells.end());
  m.batch.primitives = std::move(r.primitives);
  m.batch.features = std::move(r.features);
  quantize(m.batch);
  m.reindex(cfg);
  m.frame_counter = 1;
  push_stats(m, 0);
  return m;
}

FovSplit query_fov(const GaussianMemory& memory, const CameraFrame& frame, bool extent_culling) {
  frame.validate();
  FovSplit s;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const auto id = static_cast<std::uint32_t>(i);
    (in_view(frame, memory.batch.primitives[i], extent_culling) ? s.inside : s.outside).push_back(id);
  }
  return s;
}

GaussianMemory update(GaussianMemory memory, const PrimitiveBatch& local, const CameraFrame& frame,
                      const EncoderWeights& weights, const MemoryConfig& cfg) {
  ++memory.frame_counter;
  if (local.empty()) {
    push_stats(memory, 0);
    return memory;
  }
  local.validate();
  const FovSplit split = query_fov(memory, frame, cfg.extent_culling);
  const PrimitiveBatch history = select(memory.batch, split.inside);
  auto [current_refined, history_refined] = dte_step(local, history, weights, cfg.n_blocks, cfg.confidence);

  PrimitiveBatch candidates = concat(current_refined, history_refined);
  std::vector<Cell> cand_cells = assign_voxels(candidates.primitives, memory.origin, memory.voxel_size);
  const std::unordered_set<Cell, CellHash> touched(cand_cells.begin(), cand_cells.end());
  memory.touched.insert(touched.begin(), touched.end());

  std::vector<std::uint32_t> untouched, conflicting;
  for (std::uint32_t id : split.outside) (touched.contains(memory.cells[id]) ? conflicting : untouched).push_back(id);
  if (!conflicting.empty()) {
    candidates = concat(candidates, select(memory.batch, conflicting));
    for (std::uint32_t id : conflicting) cand_cells.push_back(memory.cells[id]);
  }

  const std::vector<double> w = fusion_weights(candidates.confidences, cand_cells, cfg.fusion.temperature);
  FusionResult r = fuse(candidates.primitives, candidates.features, w, cand_cells);
  PrimitiveBatch fused;
  fused.primitives = std::move(r.primitives);
  fused.features = std::move(r.features);
  quantize(fused);
  fused.confidences = confidence_batch(fused.primitives, cfg.confidence);

  memory.batch = concat(select(memory.batch, untouched), fused);
  memory.reindex(cfg);
  push_stats(memory, split.inside.size());
  return memory;
}

void write_gmem(std::ostream& os, const GaussianMemory& m) {
  using namespace binary;
  put_magic(os, "GMEM");
  put<std::uint32_t>(os, kGmemVersion);
  put<std::uint64_t>(os, m.size());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(m.batch.feature_dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(m.classes));
  put<double>(os, m.voxel_size);
  for (int k = 0; k < 3; ++k) put<double>(os, m.origin[k]);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& g = m.batch.primitives[i];
    for (int k = 0; k < 3; ++k) put<float>(os, static_cast<float>(g.mean[k]));
    for (int k = 0; k < 3; ++k) put<float>(os, static_cast<float>(g.scale[k]));
    for (int k = 0; k < 4; ++k) put<float>(os, static_cast<float>(g.rotation[k]));
    put<float>(os, static_cast<float>(g.opacity));
    for (Eigen::Index k = 0; k < g.logits.size(); ++k) put<float>(os, static_cast<float>(g.logits[k]));
    for (Eigen::Index k = 0; k < m.batch.features.cols(); ++k)
      put<float>(os, static_cast<float>(m.batch.features(static_cast<Eigen::Index>(i), k)));
  }
  if (!os) throw FormatError("failed to write memory checkpoint");
}

GaussianMemory read_gmem(std::istream& is) {
  using namespace binary;
  expect_magic(is, "GMEM");
  if (get<std::uint32_t>(is) != kGmemVersion) throw FormatError("unsupported gmem version");
  const auto count = get<std::uint64_t>(is);
  const auto d_model = get<std::uint32_t>(is);
  const auto classes = get<std::uint32_t>(is);
  if (classes < 2 || classes > 4096 || d_model > 4096 || count > (1ull << 32))
    throw FormatError("implausible gmem header");
  GaussianMemory m;
  m.classes = static_cast<int>(classes);
  m.voxel_size = get<double>(is);
  if (!(m.voxel_size > 0.0)) throw FormatError("invalid fusion voxel size");
  for (int k = 0; k < 3; ++k) m.origin[k] = get<double>(is);
  m.batch.primitives.resize(count);
  m.batch.features.resize(static_cast<Eigen::Index>(count), d_model);
  for (std::size_t i = 0; i < count; ++i) {
    auto& g = m.batch.primitives[i];
    for (int k = 0; k < 3; ++k) g.mean[k] = get<float>(is);
    for (int k = 0; k < 3; ++k) g.scale[k] = get<float>(is);
    for (int k = 0; k < 4; ++k) g.rotation[k] = get<float>(is);
    g.opacity = get<float>(is);
    g.logits.resize(classes - 1);
    for (std::uint32_t k = 0; k + 1 < classes; ++k) g.logits[k] = get<float>(is);
    for (std::uint32_t k = 0; k < d_model; ++k) m.batch.features(static_cast<Eigen::Index>(i), k) = get<float>(is);
    if (!(g.scale.minCoeff() > 0.0) || g.rotation.norm() == 0.0) throw FormatError("invalid primitive record");
  }
  m.batch.confidences = confidence_batch(m.batch.primitives, ConfidenceConfig{});
  m.rebuild_cells();
  return m;
}

void save_gmem(const std::filesystem::path& path, const GaussianMemory& memory) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_gmem(os, memory);
}

GaussianMemory load_gmem(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_gmem(is);
}

}  // namespace gsmem
