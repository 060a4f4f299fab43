#include "gsmem/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gsmem {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << text;
}

std::string report_text(const MetricReport& r) {
  std::ostringstream os;
  write_report(os, r);
  return os.str();
}

std::string fixed(double x, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

PrimitiveBatch predict(const Episode& ep, const RunConfig& cfg, int i) {
  StubConfig stub = cfg.stub;
  stub.classes = cfg.encoder.classes;
  stub.d_model = cfg.encoder.d_model;
  stub.confidence = cfg.memory.confidence;
  return stub_predict(ep.gt, ep.frames[static_cast<std::size_t>(i)], cfg.noise, frame_seed(cfg.seed, i), stub);
}

}  // namespace

RunMode parse_run_mode(const std::string& s) {
  if (s == "local") return RunMode::local;
  if (s == "embodied") return RunMode::embodied;
  if (s == "embodied-concat") return RunMode::embodied_concat;
  throw InvalidInput("mode: expected local, embodied or embodied-concat, got '" + s + "'");
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::local: return "local";
    case RunMode::embodied: return "embodied";
    case RunMode::embodied_concat: return "embodied-concat";
  }
  return "?";
}

void RunConfig::validate() const {
  if (!scene_path.empty() && !std::filesystem::exists(scene_path))
    throw InvalidInput("scene: file not found: " + scene_path.string());
  if (frames < 1) throw InvalidInput("frames: must be at least 1");
  if (noise.depth_sigma < 0.0) throw InvalidInput("depth-sigma: must be nonnegative");
  if (noise.logit_noise < 0.0) throw InvalidInput("logit-noise: must be nonnegative");
  if (noise.flip_prob < 0.0 || noise.flip_prob > 1.0) throw InvalidInput("flip-prob: must lie in [0, 1]");
  if (memory.n_blocks < 0) throw InvalidInput("n-blocks: must be nonnegative");
  if (!(truncation_sigmas > 0.0)) throw InvalidInput("truncation: must be positive");
  memory.confidence.validate();
  memory.fusion.validate();
  encoder.validate();
}

Episode make_episode(const RunConfig& cfg) {
  Episode ep;
  ep.spec = cfg.scene_path.empty() ? default_scene() : load_scene(cfg.scene_path);
  if (ep.spec.classes != cfg.encoder.classes) throw InvalidInput("classes: scene and encoder disagree");
  ep.gt = generate_scene(ep.spec);
  ep.frames = generate_trajectory(ep.spec, ep.gt, cfg.frames, cfg.seed, cfg.trajectory);
  return ep;
}

std::uint64_t frame_seed(std::uint64_t seed, int frame) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(frame + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

EncoderWeights make_weights(const RunConfig& cfg) { return init_weights(cfg.encoder, cfg.weight_seed); }

VoxelGrid render_labels(const GridGeometry& geometry, std::span<const GaussianPrimitive> primitives, int classes,
                        double truncation_sigmas) {
  RenderOptions opt;
  opt.truncation_sigmas = truncation_sigmas;
  return argmax_labels(render(geometry, primitives, opt, classes));
}

LocalRun run_local(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.mode != RunMode::local) throw InvalidInput("mode: run-local requires mode local");
  const Episode ep = make_episode(cfg);
  const EncoderWeights weights = make_weights(cfg);
  const GridGeometry& geo = ep.gt.geometry;
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);

  LocalRun run;
  IoUCounts pooled(cfg.encoder.classes);
  std::string csv = "frame," + csv_header(cfg.encoder.classes) + "\n";
  for (int i = 0; i < cfg.frames; ++i) {
    PrimitiveBatch local = predict(ep, cfg, i);
    if (cfg.local_refine && !local.empty())
      local = dte_step(local, PrimitiveBatch{}, weights, cfg.memory.n_blocks, cfg.memory.confidence).first;
    std::vector<GaussianPrimitive> fused;
    if (!local.empty()) fused = fuse_batch(local, cfg.memory.fusion, cfg.memory.confidence).batch.primitives;
    const VoxelGrid labels = render_labels(geo, fused, cfg.encoder.classes, cfg.truncation_sigmas);
    const VoxelMask mask = local_mask(geo, ep.frames[static_cast<std::size_t>(i)]);
    IoUCounts counts(cfg.encoder.classes);
    counts.add(labels, ep.gt, mask);
    pooled.add(labels, ep.gt, mask);
    run.per_frame.push_back(report(counts));
    csv += std::to_string(i) + "," + csv_row(run.per_frame.back()) + "\n";
    if (!cfg.output_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03d.vgrid", i);
      save_vgrid(cfg.output_dir / name, labels);
    }
  }
  run.overall = report(pooled);
  csv += "all," + csv_row(run.overall) + "\n";
  if (!cfg.output_dir.empty()) {
    write_text(cfg.output_dir / "metrics.csv", csv);
    write_text(cfg.output_dir / "metrics.txt", report_text(run.overall));
    save_vgrid(cfg.output_dir / "ground_truth.vgrid", ep.gt);
  }
  return run;
}

EmbodiedRun run_embodied(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.mode == RunMode::local) throw InvalidInput("mode: run-embodied requires an embodied mode");
  const bool concat_only = cfg.mode == RunMode::embodied_concat;
  const Episode ep = make_episode(cfg);
  const EncoderWeights weights = make_weights(cfg);
  const GridGeometry& geo = ep.gt.geometry;

  EmbodiedRun run;
  GaussianMemory& mem = run.memory;
  bool initialized = false;
  for (int i = 0; i < cfg.frames; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const CameraFrame& frame = ep.frames[static_cast<std::size_t>(i)];
    PrimitiveBatch local = predict(ep, cfg, i);
    std::size_t inside = 0;

    if (!initialized && !local.empty()) {
      mem.origin = fusion_origin(local.primitives, cfg.memory.fusion);
      mem.voxel_size = cfg.memory.fusion.voxel_size;
      mem.classes = cfg.encoder.classes;
    }
    if (concat_only) {
      for (const Cell& c : assign_voxels(local.primitives, mem.origin, mem.voxel_size)) mem.touched.insert(c);
      quantize(local);
      mem.batch = concat(mem.batch, local);
      ++mem.frame_counter;
      initialized = initialized || !local.empty();
    } else if (!initialized) {
      if (!local.empty()) {
        mem = init_memory(local, cfg.memory);
        initialized = true;
      }
    } else {
      inside = query_fov(mem, frame, cfg.memory.extent_culling).inside.size();
      mem = update(std::move(mem), local, frame, weights, cfg.memory);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.frames.push_back({static_cast<std::uint64_t>(i), mem.size(), inside, mem.bytes(), mem.touched.size(), seconds});
  }
  if (concat_only) mem.rebuild_cells();

  run.labels = render_labels(geo, mem.batch.primitives, cfg.encoder.classes, cfg.truncation_sigmas);
  run.metrics = iou(run.labels, ep.gt, observed_mask(geo, ep.frames));

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_text(cfg.output_dir / "stats.csv", stats_csv(run.frames));
    write_text(cfg.output_dir / "timing.csv", timing_csv(run.frames));
    write_text(cfg.output_dir / "metrics.txt", report_text(run.metrics));
    write_text(cfg.output_dir / "metrics.csv",
               csv_header(cfg.encoder.classes) + "\n" + csv_row(run.metrics) + "\n");
    save_gmem(cfg.output_dir / "final.gmem", mem);
    save_vgrid(cfg.output_dir / "final.vgrid", run.labels);
    save_vgrid(cfg.output_dir / "ground_truth.vgrid", ep.gt);
  }
  return run;
}

std::string stats_csv(const std::vector<EmbodiedFrame>& frames) {
  std::string s = "frame,memory_count,inside_fov,bytes,explored_cells\n";
  for (const auto& f : frames)
    s += std::to_string(f.frame) + "," + std::to_string(f.memory_count) + "," + std::to_string(f.inside_fov) + "," +
         std::to_string(f.bytes) + "," + std::to_string(f.explored_cells) + "\n";
  return s;
}

std::string timing_csv(const std::vector<EmbodiedFrame>& frames) {
  std::string s = "frame,seconds\n";
  for (const auto& f : frames) s += std::to_string(f.frame) + "," + fixed(f.seconds, 6) + "\n";
  return s;
}

std::string memory_report(const GaussianMemory& m) {
  std::ostringstream os;
  os << "count " << m.size() << '\n' << "bytes " << m.bytes() << '\n';
  os << "classes " << m.classes << '\n' << "d_model " << m.batch.feature_dim() << '\n';
  os << "fusion_voxel_size " << fixed(m.voxel_size, 6) << '\n';
  if (m.size() > 0) {
    Vec3 lo = m.batch.primitives.front().mean, hi = lo;
    for (const auto& g : m.batch.primitives) {
      lo = lo.cwiseMin(g.mean);
      hi = hi.cwiseMax(g.mean);
    }
    os << "bbox_min " << fixed(lo.x(), 6) << ' ' << fixed(lo.y(), 6) << ' ' << fixed(lo.z(), 6) << '\n';
    os << "bbox_max " << fixed(hi.x(), 6) << ' ' << fixed(hi.y(), 6) << ' ' << fixed(hi.z(), 6) << '\n';
  }
  std::vector<std::size_t> histogram(static_cast<std::size_t>(std::max(m.classes - 1, 0)), 0);
  for (const auto& g : m.batch.primitives) {
    Eigen::Index arg = 0;
    if (g.logits.size() > 0) g.logits.maxCoeff(&arg);
    if (static_cast<std::size_t>(arg) < histogram.size()) ++histogram[static_cast<std::size_t>(arg)];
  }
  for (std::size_t k = 0; k < histogram.size(); ++k) os << "class_" << k << ' ' << histogram[k] << '\n';
  return os.str();
}

}  // namespace gsmem
