// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include "gsmem/pipeline.hpp"
#include "gsmem/loss.hpp"
#include "oracles.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace gsmem;

namespace {

constexpr int kC = kDefaultClasses;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

GridGeometry cube(int n, double vs) {
  GridGeometry g;
  g.origin = Vec3::Zero();
  g.voxel_size = vs;
  g.dims = {n, n, n};
  return g;
}

std::vector<GaussianPrimitive> random_scene(std::mt19937_64& rng, int count, const GridGeometry& g) {
  const Vec3 hi = g.origin + g.voxel_size * Vec3(g.dims[0], g.dims[1], g.dims[2]);
  std::vector<GaussianPrimitive> out;
  for (int i = 0; i < count; ++i) out.push_back(oracle::random_primitive(rng, g.origin, hi, 0.03, 0.25, kC));
  return out;
}

Outcome splat_normalization() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> count(1, 200);
  const GridGeometry g = cube(32, 0.1);
  double worst = 0.0;
  for (int scene = 0; scene < 50; ++scene) {
    const VoxelGrid p = render(g, random_scene(rng, count(rng), g));
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
      double sum = 0.0;
      for (int l = 0; l < kC; ++l) sum += p.prob(v, static_cast<std::uint32_t>(l));
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 10.0, "max |sum - 1| " + num(worst) + ", " + num(t) + " s"};
}

Outcome splat_oracle() {
  std::mt19937_64 rng(202);
  const GridGeometry g = cube(16, 0.12);
  double exact = 0.0, truncated = 0.0;
  for (int scene = 0; scene < 3; ++scene) {
    const auto prims = random_scene(rng, 200, g);
    const auto dense = oracle::dense_render(g, prims, kC);
    RenderOptions opt;
    opt.truncation_sigmas = kNoTruncation;
    exact = std::max(exact, oracle::max_gap(render_field(g, prims, opt), dense));
    opt.truncation_sigmas = 3.0;
    truncated = std::max(truncated, oracle::max_gap(render_field(g, prims, opt), dense));
  }
  return {exact <= 1e-9 && truncated <= 1e-2, "untruncated " + num(exact) + ", 3-sigma " + num(truncated)};
}

Outcome confidence_values() {
  Eigen::VectorXd hot = Eigen::VectorXd::Zero(kC - 1);
  hot[3] = 60.0;
  const double one = confidence(make_primitive(Vec3::Zero(), Vec3::Ones(), Quat(1, 0, 0, 0), 1.0, hot));
  const double uniform =
      confidence(make_primitive(Vec3::Zero(), Vec3::Ones(), Quat(1, 0, 0, 0), 1.0, Eigen::VectorXd::Zero(kC - 1)));
  const double expect = std::pow(1.0 - std::log(11.0) / 3.0, 3.0);
  return {one == 1.0 && std::abs(uniform - 0.008084) <= 1e-5 && std::abs(uniform - expect) <= 1e-12,
          "one-hot " + num(one) + ", uniform " + num(uniform)};
}

Outcome fusion_checks() {
  double wsum_gap = 0.0, attr_gap = 0.0, select_gap = 0.0;
  bool counts = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(300 + seed);
    std::vector<GaussianPrimitive> prims;
    for (int i = 0; i < 80; ++i)
      prims.push_back(oracle::random_primitive(rng, Vec3::Zero(), Vec3::Constant(0.36), 0.02, 0.1, kC));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> conf;
    for (int i = 0; i < 80; ++i) conf.push_back(u(rng));
    const Eigen::MatrixXd feats = Eigen::MatrixXd::NullaryExpr(80, 6, [&] { return u(rng); });
    const auto cells = assign_voxels(prims, Vec3::Zero(), 0.12);

    std::map<Cell, std::vector<std::uint32_t>> groups;
    for (std::uint32_t i = 0; i < prims.size(); ++i) {
      const Vec3 c = prims[i].mean / 0.12;
      groups[Cell{static_cast<int>(std::floor(c.x())), static_cast<int>(std::floor(c.y())),
                  static_cast<int>(std::floor(c.z()))}]
          .push_back(i);
    }
    const auto w = fusion_weights(conf, cells, 1.0);
    const FusionResult r = fuse(prims, feats, w, cells);
    counts = counts && r.primitives.size() == groups.size();
    std::size_t k = 0;
    for (const auto& [cell, ids] : groups) {
      double z = 0.0, sum = 0.0;
      for (auto id : ids) z += std::exp(conf[id]);
      Vec3 mean = Vec3::Zero();
      double opacity = 0.0;
      Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(6);
      for (auto id : ids) {
        const double wi = std::exp(conf[id]) / z;
        sum += w[id];
        mean += wi * prims[id].mean;
        opacity += wi * prims[id].opacity;
        f += wi * feats.row(id);
      }
      wsum_gap = std::max(wsum_gap, std::abs(sum - 1.0));
      if (k < r.primitives.size()) {
        attr_gap = std::max({attr_gap, (r.primitives[k].mean - mean).cwiseAbs().maxCoeff(),
                             std::abs(r.primitives[k].opacity - opacity),
                             (r.features.row(static_cast<Eigen::Index>(k)) - f).cwiseAbs().maxCoeff()});
      }
      ++k;
    }

    const FusionResult sharp = fuse(prims, feats, fusion_weights(conf, cells, 1e-3), cells);
    for (std::size_t j = 0; j < sharp.primitives.size(); ++j) {
      const auto& ids = sharp.members[j];
      if (ids.size() < 2) continue;
      std::vector<double> c;
      for (auto id : ids) c.push_back(conf[id]);
      std::vector<double> sorted = c;
      std::sort(sorted.rbegin(), sorted.rend());
      if (sorted[0] - sorted[1] < 0.01) continue;
      const auto best = ids[static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin())];
      for (int a = 0; a < 3; ++a)
        select_gap = std::max(select_gap, std::abs(sharp.primitives[j].mean[a] - prims[best].mean[a]) /
                                              std::max(1.0, std::abs(prims[best].mean[a])));
      select_gap = std::max(select_gap, std::abs(sharp.primitives[j].opacity - prims[best].opacity));
    }
  }
  return {counts && wsum_gap <= 1e-9 && attr_gap <= 1e-9 && select_gap <= 1e-3,
          "weight sums " + num(wsum_gap) + ", oracle " + num(attr_gap) + ", T=1e-3 selection " + num(select_gap) +
              (counts ? "" : ", count mismatch")};
}

Eigen::MatrixXd loop_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                               int heads) {
  const auto n = q.rows(), m = k.rows(), dh = q.cols() / heads;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, q.cols());
  for (int h = 0; h < heads; ++h)
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(m));
      double mx = -1e300, z = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        double dot = 0.0;
        for (Eigen::Index c = h * dh; c < (h + 1) * dh; ++c) dot += q(i, c) * k(j, c);
        mx = std::max(mx, s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dh)));
      }
      for (double& x : s) z += x = std::exp(x - mx);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index c = h * dh; c < (h + 1) * dh; ++c) out(i, c) += s[static_cast<std::size_t>(j)] / z * v(j, c);
    }
  return out;
}

PrimitiveBatch random_batch(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PrimitiveBatch b;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd logits(kC - 1);
    for (auto& l : logits) l = 2.0 * g(rng);
    b.primitives.push_back(make_primitive(Vec3(g(rng), g(rng), g(rng)), Vec3(0.05, 0.07, 0.09),
                                          Quat(g(rng), g(rng), g(rng), g(rng)), u(rng), logits));
  }
  b.features = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return g(rng); });
  b.confidences = confidence_batch(b.primitives);
  return b;
}

Outcome cca_degenerations() {
  std::mt19937_64 rng(404);
  const EncoderWeights w = init_weights(EncoderDims{}, 42);
  PrimitiveBatch q = random_batch(rng, 5, 32), kv = random_batch(rng, 7, 32);
  PrimitiveBatch qu = q, kvu = kv;
  qu.confidences.assign(5, 1.0);
  kvu.confidences.assign(7, 1.0);
  const Eigen::MatrixXd standard =
      loop_attention(qu.features * w.wq, kvu.features * w.wk, kvu.features * w.wv, w.dims.n_heads) * w.wo;
  const double unit_gap = (cca(qu, kvu, w) - standard).cwiseAbs().maxCoeff();
  PrimitiveBatch dark = kv;
  dark.confidences.assign(7, 0.0);
  const double dark_max = cca(q, dark, w).cwiseAbs().maxCoeff();
  const auto [ab_cur, ab_hist] = dte_step(q, kv, w, 2);
  const auto [ba_cur, ba_hist] = dte_step(kv, q, w, 2);
  const bool swap = ab_cur.features == ba_hist.features && ab_hist.features == ba_cur.features;
  return {unit_gap <= 1e-9 && dark_max == 0.0 && swap, "unit-confidence gap " + num(unit_gap) +
                                                           ", zero-confidence output " + num(dark_max) +
                                                           ", swap " + (swap ? "exact" : "broken")};
}

struct DefaultEpisode {
  EmbodiedRun full, concat;
  double full_seconds = 0.0;
};

const DefaultEpisode& default_episode() {
  static const DefaultEpisode ep = [] {
    DefaultEpisode e;
    RunConfig cfg;
    const auto t0 = std::chrono::steady_clock::now();
    e.full = run_embodied(cfg);
    e.full_seconds = seconds_since(t0);
    cfg.mode = RunMode::embodied_concat;
    e.concat = run_embodied(cfg);
    return e;
  }();
  return ep;
}

Outcome boundedness() {
  const DefaultEpisode& e = default_episode();
  bool bounded = true, below_concat = true;
  for (std::size_t i = 0; i < e.full.frames.size(); ++i) {
    bounded = bounded && e.full.frames[i].memory_count <= e.full.frames[i].explored_cells;
    below_concat = below_concat && e.full.frames[i].memory_count <= e.concat.frames[i].memory_count;
  }
  const double ratio =
      static_cast<double>(e.full.memory.size()) / static_cast<double>(e.concat.frames.back().memory_count);
  return {bounded && below_concat && ratio <= 1.0 / 3.0 && e.full_seconds < 60.0,
          "final " + std::to_string(e.full.memory.size()) + " vs explored " +
              std::to_string(e.full.frames.back().explored_cells) + ", concat " +
              std::to_string(e.concat.frames.back().memory_count) + " (ratio " + num(ratio) + ")" +
              (bounded ? "" : ", count exceeded explored cells") + ", " + num(e.full_seconds) + " s"};
}

Outcome noiseless_fidelity() {
  const DefaultEpisode& e = default_episode();
  const MetricReport& m = e.full.metrics;
  return {m.iou >= 0.95 && m.miou >= 0.95 && e.full_seconds < 60.0,
          "IoU " + num(m.iou) + ", mIoU " + num(m.miou) + ", " + num(e.full_seconds) + " s"};
}

Outcome noise_ordering() {
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.noise.depth_sigma = 0.05;
    cfg.noise.flip_prob = 0.1;
    const double full = run_embodied(cfg).metrics.miou;
    cfg.mode = RunMode::embodied_concat;
    const double concat = run_embodied(cfg).metrics.miou;
    all = all && full >= concat;
    detail += (seed > 1 ? "; " : "") + std::string("seed ") + std::to_string(seed) + " " + num(full) + " vs " +
              num(concat);
  }
  return {all, "mIoU full vs concat: " + detail};
}

Outcome loss_suite() {
  GridGeometry g;
  g.dims = {6, 1, 1};
  VoxelGrid gt = VoxelGrid::label(g, kC);
  const std::vector<int> labels{0, 3, kC - 1, kC - 1, 7, 1};
  for (std::size_t i = 0; i < labels.size(); ++i) gt.labels[i] = static_cast<std::uint16_t>(labels[i]);
  VoxelGrid perfect = VoxelGrid::probability(g, kC);
  std::fill(perfect.probs.begin(), perfect.probs.end(), 0.0f);
  for (std::size_t v = 0; v < 6; ++v) perfect.probs[v * kC + gt.labels[v]] = 1.0f;
  const VoxelMask all(6, 1);
  const SscLoss l = ssc_loss(perfect, gt, all);
  const bool zero = l.focal == 0.0 && l.lovasz == 0.0 && l.geo == 0.0 && l.total == 0.0;

  double stage_gap = 0.0;
  for (int n = 1; n <= 8; ++n) {
    const auto w = stage_weights(n);
    double s = 0.0;
    for (double x : w) s += x;
    stage_gap = std::max(stage_gap, std::abs(s - 2.0));
  }

  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::uniform_int_distribution<int> cls(0, kC - 1);
  GridGeometry big;
  big.dims = {300, 1, 1};
  VoxelGrid t = VoxelGrid::label(big, kC), p = VoxelGrid::probability(big, kC);
  double ce = 0.0;
  for (std::size_t v = 0; v < 300; ++v) {
    t.labels[v] = static_cast<std::uint16_t>(cls(rng));
    std::vector<double> row(kC);
    double z = 0.0;
    for (auto& x : row) z += x = u(rng);
    for (int c = 0; c < kC; ++c) p.probs[v * kC + c] = static_cast<float>(row[c] / z);
    ce -= std::log(static_cast<double>(p.prob(v, t.labels[v])));
  }
  const double ce_gap = std::abs(focal_loss(p, t, VoxelMask(300, 1), 0.0) - ce / 300.0);
  return {zero && stage_gap <= 1e-12 && ce_gap <= 1e-9, std::string("optimum ") + (zero ? "zero" : "nonzero") +
                                                            ", stage sum gap " + num(stage_gap) +
                                                            ", focal(0) vs CE " + num(ce_gap)};
}

VoxelGrid four(const std::vector<int>& labels) {
  GridGeometry g;
  g.dims = {4, 1, 1};
  VoxelGrid v = VoxelGrid::label(g, kC);
  for (std::size_t i = 0; i < 4; ++i) v.labels[i] = static_cast<std::uint16_t>(labels[i]);
  return v;
}

Outcome metrics_checks() {
  const int e = kC - 1;
  const VoxelMask all(4, 1);
  const MetricReport a = iou(four({3, 3, e, e}), four({3, e, 3, e}), all);
  const MetricReport b = iou(four({0, 0, 1, e}), four({0, 1, 1, e}), all);
  const bool hand = a.iou == 1.0 / 3.0 && a.miou == 1.0 / 3.0 && b.iou == 1.0 && b.miou == 0.5;

  const SceneSpec spec = default_scene();
  const VoxelGrid gt = generate_scene(spec);
  const auto frames = generate_trajectory(spec, gt, 30, 1);
  bool monotone = true;
  VoxelMask prev(gt.geometry.voxel_count(), 0);
  for (std::size_t n = 1; n <= frames.size(); ++n) {
    const VoxelMask m = observed_mask(gt.geometry, std::span<const CameraFrame>(frames.data(), n));
    for (std::size_t v = 0; v < m.size(); ++v) monotone = monotone && (!prev[v] || m[v]);
    prev = m;
  }

  std::vector<VoxelMask> locals;
  for (const auto& f : frames) locals.push_back(local_mask(gt.geometry, f));
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<std::size_t> pick(0, gt.geometry.voxel_count() - 1);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t i = static_cast<std::size_t>(trial) % frames.size(), v = pick(rng);
    mismatches += (locals[i][v] != 0) != oracle::in_frustum(frames[i], gt.geometry.center(v));
  }
  return {hand && monotone && mismatches == 0, std::string("hand fixtures ") + (hand ? "exact" : "wrong") +
                                                   ", observed mask " + (monotone ? "monotone" : "shrank") +
                                                   ", projection mismatches " + std::to_string(mismatches) +
                                                   "/1000"};
}

int cli_exit(const std::string& args) {
  const int status = std::system((std::string(GSMEM_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome persistence() {
  const DefaultEpisode& e = default_episode();
  std::ostringstream g1(std::ios::binary), v1(std::ios::binary);
  write_gmem(g1, e.full.memory);
  write_vgrid(v1, e.full.labels);
  std::istringstream gi(g1.str(), std::ios::binary), vi(v1.str(), std::ios::binary);
  std::ostringstream g2(std::ios::binary), v2(std::ios::binary);
  write_gmem(g2, read_gmem(gi));
  write_vgrid(v2, read_vgrid(vi));

  VoxelGrid probs = render(e.full.labels.geometry, e.full.memory.batch.primitives);
  std::ostringstream p1(std::ios::binary), p2(std::ios::binary);
  write_vgrid(p1, probs);
  std::istringstream pi(p1.str(), std::ios::binary);
  const VoxelGrid back = read_vgrid(pi);
  write_vgrid(p2, back);
  const bool lossless = g1.str() == g2.str() && v1.str() == v2.str() && p1.str() == p2.str() && back == probs;

  const auto dir = std::filesystem::temp_directory_path() / "gsmem_acceptance";
  std::filesystem::create_directories(dir);
  std::string corrupt = g1.str();
  corrupt[0] = 'X';
  std::ofstream(dir / "bad.gmem", std::ios::binary) << corrupt;
  std::string corrupt_grid = v1.str();
  corrupt_grid[1] = '?';
  std::ofstream(dir / "bad.vgrid", std::ios::binary) << corrupt_grid;
  std::ofstream(dir / "good.gmem", std::ios::binary) << g1.str();
  const int bad = cli_exit("stats " + (dir / "bad.gmem").string());
  const int good = cli_exit("stats " + (dir / "good.gmem").string());
  bool grid_rejected = false;
  try {
    load_vgrid(dir / "bad.vgrid");
  } catch (const FormatError&) {
    grid_rejected = true;
  }
  return {lossless && bad == 2 && good == 0 && grid_rejected,
          std::string("round trips ") + (lossless ? "bitwise" : "lossy") + ", corrupted magic exit " +
              std::to_string(bad) + ", valid exit " + std::to_string(good) +
              (grid_rejected ? "" : ", corrupted grid accepted")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"splatting normalization", splat_normalization},
      {"splatting oracle equivalence", splat_oracle},
      {"confidence values", confidence_values},
      {"voxel fusion", fusion_checks},
      {"confidence-aware attention degenerations", cca_degenerations},
      {"memory boundedness", boundedness},
      {"noiseless embodied fidelity", noiseless_fidelity},
      {"noise-robustness ordering", noise_ordering},
      {"loss suite", loss_suite},
      {"metrics", metrics_checks},
      {"persistence", persistence},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
