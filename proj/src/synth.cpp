#include "gsmem/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace gsmem {

namespace {

constexpr std::uint64_t kFeatureProjectionSeed = 0x6a09e667f3bcc909ull;

int label_index_lo(double lo, double origin, double vs) {
  return static_cast<int>(std::ceil((lo - origin) / vs - 0.5));
}

Quat disc_rotation(int axis) {
  const double c = std::numbers::sqrt2 / 2.0;
  switch (axis) {
    case 0: return {c, 0.0, c, 0.0};   // local z -> world x
    case 1: return {c, -c, 0.0, 0.0};  // local z -> world y
    default: return {1.0, 0.0, 0.0, 0.0};
  }
}

Quat random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q;
  do {
    q = Quat(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-6);
  return q.normalized();
}

Eigen::MatrixXd feature_projection(int d_model, int inputs) {
  std::mt19937_64 rng(kFeatureProjectionSeed);
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(inputs)));
  Eigen::MatrixXd p(inputs, d_model);
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = n(rng);
  return p;
}

}  // namespace

GridGeometry SceneSpec::geometry() const {
  GridGeometry g;
  g.origin = origin;
  g.voxel_size = gt_voxel_size;
  for (int k = 0; k < 3; ++k) g.dims[k] = static_cast<int>(std::lround(extent[k] / gt_voxel_size));
  return g;
}

void SceneSpec::validate() const {
  if (!(gt_voxel_size > 0.0)) throw InvalidInput("scene voxel_size must be positive");
  if (!(extent.minCoeff() > 0.0)) throw InvalidInput("scene extent must be positive");
  if (classes < 2) throw InvalidInput("scene needs at least two classes");
  for (int k = 0; k < 3; ++k) {
    const double cells = extent[k] / gt_voxel_size;
    if (std::abs(cells - std::round(cells)) > 1e-6) throw InvalidInput("extent is not a multiple of voxel_size");
  }
  const double eps = 1e-9;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const std::string where = "box " + std::to_string(i);
    if ((b.min.array() > b.max.array()).any()) throw InvalidInput(where + ": min exceeds max");
    if ((b.min.array() < origin.array() - eps).any() || (b.max.array() > (origin + extent).array() + eps).any())
      throw InvalidInput(where + ": outside the scene extent");
    if (b.label < 0 || b.label > classes - 2) throw InvalidInput(where + ": label out of range");
  }
  geometry().validate();
}

SceneSpec default_scene() {
  SceneSpec s;
  s.origin = Vec3(-0.08, -0.08, -0.08);
  s.extent = Vec3(4.8, 4.8, 2.88);
  s.gt_voxel_size = 0.08;
  s.seed = 7;
  // Interior spans [0, 4.56]^2 above z = 0; walls and floor are one voxel thick.
  const double lo = -0.08, in = 4.56, out = 4.64, top = 2.80;
  auto box = [&s](double x0, double y0, double z0, double x1, double y1, double z1, int label) {
    s.boxes.push_back({Vec3(x0, y0, z0), Vec3(x1, y1, z1), label});
  };
  box(lo, lo, lo, out, out, 0.0, 1);   // floor
  box(lo, lo, lo, 0.0, out, top, 2);   // walls
  box(in, lo, lo, out, out, top, 2);
  box(lo, lo, lo, out, 0.0, top, 2);
  box(lo, in, lo, out, out, top, 2);
  // Flush patches of other classes on the floor and walls.
  box(0.96, 0.96, lo, 2.16, 1.92, 0.0, 10);
  box(2.64, 2.64, lo, 3.60, 3.60, 0.0, 7);
  box(lo, 1.44, 0.96, 0.0, 2.88, 1.92, 3);
  box(1.92, in, 0.72, 3.12, out, 1.44, 8);
  box(in, 0.48, 0.0, out, 1.68, 1.20, 9);
  box(2.88, lo, 0.24, 4.08, 0.0, 0.96, 4);
  // One low free-standing panel; its plane sits inside a fusion cell, never on a boundary.
  box(1.44, 3.12, 0.0, 2.88, 3.20, 0.48, 6);
  return s;
}

SceneSpec parse_scene(std::istream& is) {
  SceneSpec s;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    const std::string where = "scene line " + std::to_string(line_no) + " (" + key + ")";
    bool ok = true;
    if (key == "origin") {
      ok = static_cast<bool>(ls >> s.origin.x() >> s.origin.y() >> s.origin.z());
    } else if (key == "extent") {
      ok = static_cast<bool>(ls >> s.extent.x() >> s.extent.y() >> s.extent.z());
    } else if (key == "voxel_size") {
      ok = static_cast<bool>(ls >> s.gt_voxel_size);
    } else if (key == "seed") {
      ok = static_cast<bool>(ls >> s.seed);
    } else if (key == "classes") {
      ok = static_cast<bool>(ls >> s.classes);
    } else if (key == "box") {
      SceneBox b;
      ok = static_cast<bool>(ls >> b.min.x() >> b.min.y() >> b.min.z() >> b.max.x() >> b.max.y() >> b.max.z() >>
                             b.label);
      if (ok) s.boxes.push_back(b);
    } else {
      throw InvalidInput(where + ": unknown key");
    }
    std::string rest;
    if (!ok || (ls >> rest)) throw InvalidInput(where + ": malformed values");
  }
  s.validate();
  return s;
}

SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open scene file " + path.string());
  return parse_scene(is);
}

void write_scene(std::ostream& os, const SceneSpec& s) {
  os.precision(17);
  os << "origin " << s.origin.x() << ' ' << s.origin.y() << ' ' << s.origin.z() << '\n'
     << "extent " << s.extent.x() << ' ' << s.extent.y() << ' ' << s.extent.z() << '\n'
     << "voxel_size " << s.gt_voxel_size << '\n'
     << "seed " << s.seed << '\n'
     << "classes " << s.classes << '\n';
  for (const auto& b : s.boxes)
    os << "box " << b.min.x() << ' ' << b.min.y() << ' ' << b.min.z() << ' ' << b.max.x() << ' ' << b.max.y()
       << ' ' << b.max.z() << ' ' << b.label << '\n';
}

VoxelGrid generate_scene(const SceneSpec& spec) {
  spec.validate();
  const GridGeometry geo = spec.geometry();
  VoxelGrid grid = VoxelGrid::label(geo, static_cast<std::uint32_t>(spec.classes));
  for (const auto& b : spec.boxes) {
    std::array<int, 3> lo{}, hi{};
    for (int k = 0; k < 3; ++k) {
      // Centers c with min <= c < max.
      lo[k] = std::max(0, label_index_lo(b.min[k], geo.origin[k], geo.voxel_size));
      hi[k] = std::min(geo.dims[k], label_index_lo(b.max[k], geo.origin[k], geo.voxel_size));
    }
    for (int z = lo[2]; z < hi[2]; ++z)
      for (int y = lo[1]; y < hi[1]; ++y)
        for (int x = lo[0]; x < hi[0]; ++x) grid.labels[geo.linear(x, y, z)] = static_cast<std::uint16_t>(b.label);
  }
  return grid;
}

RayHit trace_ray(const VoxelGrid& gt, const Vec3& origin, const Vec3& direction, double far) {
  const GridGeometry& geo = gt.geometry;
  const Vec3 go = (origin - geo.origin) / geo.voxel_size;
  const Vec3 gd = direction / geo.voxel_size;
  RayHit hit;

  double t0 = 0.0, t1 = far;
  int entry_axis = -1;
  for (int k = 0; k < 3; ++k) {
    if (gd[k] == 0.0) {
      if (go[k] < 0.0 || go[k] >= geo.dims[k]) return hit;
      continue;
    }
    double a = (0.0 - go[k]) / gd[k], b = (geo.dims[k] - go[k]) / gd[k];
    if (a > b) std::swap(a, b);
    if (a > t0) {
      t0 = a;
      entry_axis = k;
    }
    t1 = std::min(t1, b);
  }
  if (t0 > t1) return hit;

  std::array<int, 3> v{}, step{};
  std::array<double, 3> t_max{}, t_delta{};
  const Vec3 start = go + t0 * gd;
  for (int k = 0; k < 3; ++k) {
    v[k] = std::clamp(static_cast<int>(std::floor(start[k])), 0, geo.dims[k] - 1);
    if (gd[k] > 0.0) {
      step[k] = 1;
      t_max[k] = (v[k] + 1 - go[k]) / gd[k];
      t_delta[k] = 1.0 / gd[k];
    } else if (gd[k] < 0.0) {
      step[k] = -1;
      t_max[k] = (v[k] - go[k]) / gd[k];
      t_delta[k] = -1.0 / gd[k];
    } else {
      t_max[k] = std::numeric_limits<double>::infinity();
      t_delta[k] = t_max[k];
    }
  }

  double t_entry = t0;
  int axis = entry_axis;
  for (;;) {
    const std::size_t idx = geo.linear(v[0], v[1], v[2]);
    if (gt.labels[idx] != gt.empty_label()) {
      hit.voxel = static_cast<std::int64_t>(idx);
      if (axis < 0) {
        hit.inside = true;
        hit.depth = 0.0;
      } else {
        hit.depth = t_entry;
        hit.axis = axis;
        hit.step = step[axis];
      }
      return hit;
    }
    int a = 0;
    if (t_max[1] < t_max[a]) a = 1;
    if (t_max[2] < t_max[a]) a = 2;
    t_entry = t_max[a];
    if (t_entry > far) return hit;
    v[a] += step[a];
    if (v[a] < 0 || v[a] >= geo.dims[a]) return hit;
    t_max[a] += t_delta[a];
    axis = a;
  }
}

Vec3 pixel_ray(const CameraFrame& frame, double u, double v) {
  const Mat3& k = frame.intrinsics;
  const Vec3 cam((u - k(0, 2)) / k(0, 0), (v - k(1, 2)) / k(1, 1), 1.0);
  return frame.pose.rotation * cam;
}

std::vector<std::array<int, 2>> sample_pixels(int width, int height, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw InvalidInput("sample grid must be positive");
  std::vector<std::array<int, 2>> px;
  px.reserve(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      px.push_back({(2 * j + 1) * width / (2 * cols), (2 * i + 1) * height / (2 * rows)});
  return px;
}

namespace {

DepthImage blank_depth(const CameraFrame& frame) {
  DepthImage img;
  img.width = frame.width;
  img.height = frame.height;
  const std::size_t n = static_cast<std::size_t>(frame.width) * frame.height;
  img.depths.assign(n, std::numeric_limits<double>::infinity());
  img.inside.assign(n, 0);
  return img;
}

void shade(DepthImage& img, const VoxelGrid& gt, const CameraFrame& frame, int u, int v) {
  const RayHit h = trace_ray(gt, frame.position(), pixel_ray(frame, u, v), frame.far);
  const std::size_t i = static_cast<std::size_t>(v) * img.width + u;
  img.depths[i] = h.depth;
  img.inside[i] = h.inside ? 1 : 0;
}

}  // namespace

DepthImage render_depth(const VoxelGrid& gt, const CameraFrame& frame) {
  frame.validate();
  DepthImage img = blank_depth(frame);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < frame.height; ++v)
    for (int u = 0; u < frame.width; ++u) shade(img, gt, frame, u, v);
  return img;
}

DepthImage render_depth_at(const VoxelGrid& gt, const CameraFrame& frame,
                           const std::vector<std::array<int, 2>>& pixels) {
  frame.validate();
  DepthImage img = blank_depth(frame);
  for (const auto& p : pixels) shade(img, gt, frame, p[0], p[1]);
  return img;
}

LiftResult lift(const DepthImage& depth, const CameraFrame& frame, const LiftOptions& options, int classes) {
  if (depth.width != frame.width || depth.height != frame.height)
    throw InvalidInput("depth image does not match the frame");
  LiftResult out;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jitter(0.5, 1.5), alpha(0.1, 0.9);
  for (const auto& px : sample_pixels(frame.width, frame.height, options.rows, options.cols)) {
    const double d = depth.at(px[0], px[1]);
    if (!std::isfinite(d)) continue;
    const Vec3 mu = frame.position() + d * pixel_ray(frame, px[0], px[1]);
    Vec3 scale = Vec3::Constant(options.scale);
    Quat rot(1.0, 0.0, 0.0, 0.0);
    double opacity = 0.5;
    if (options.randomize) {
      rot = random_rotation(rng);
      scale = scale.cwiseProduct(Vec3(jitter(rng), jitter(rng), jitter(rng)));
      opacity = alpha(rng);
    }
    out.primitives.push_back(make_primitive(mu, scale, rot, opacity, Eigen::VectorXd::Zero(classes - 1)));
    out.pixels.push_back(px);
  }
  return out;
}

PrimitiveBatch stub_predict(const VoxelGrid& gt, const CameraFrame& frame, const NoiseConfig& noise,
                            std::uint64_t seed, const StubConfig& cfg) {
  if (cfg.classes != static_cast<int>(gt.classes)) throw InvalidInput("stub classes differ from the scene");
  if (noise.depth_sigma < 0.0 || noise.logit_noise < 0.0 || noise.flip_prob < 0.0 || noise.flip_prob > 1.0)
    throw InvalidInput("noise parameters out of range");
  const int occupied_classes = cfg.classes - 1;
  const GridGeometry& geo = gt.geometry;
  const auto pixels = sample_pixels(frame.width, frame.height, cfg.lift.rows, cfg.lift.cols);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  DepthImage depth = blank_depth(frame);
  std::vector<RayHit> hits(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto [u, v] = pixels[i];
    hits[i] = trace_ray(gt, frame.position(), pixel_ray(frame, u, v), frame.far);
    const double dn = noise.depth_sigma * gauss(rng);
    if (hits[i].voxel >= 0 && !hits[i].inside)
      depth.depths[static_cast<std::size_t>(v) * depth.width + u] = std::max(hits[i].depth + dn, frame.near);
  }
  LiftOptions lift_opts = cfg.lift;
  lift_opts.randomize = false;
  const LiftResult lifted = lift(depth, frame, lift_opts, cfg.classes);

  const Eigen::MatrixXd projection = feature_projection(cfg.d_model, occupied_classes + 3);
  PrimitiveBatch out;
  out.primitives.reserve(lifted.primitives.size());
  out.features.resize(static_cast<Eigen::Index>(lifted.primitives.size()), cfg.d_model);
  std::size_t hit_i = 0;
  for (std::size_t i = 0; i < lifted.primitives.size(); ++i) {
    while (pixels[hit_i] != lifted.pixels[i]) ++hit_i;
    const RayHit& h = hits[hit_i];
    GaussianPrimitive g = lifted.primitives[i];

    g.mean[h.axis] += 0.5 * geo.voxel_size * h.step;
    g.rotation = disc_rotation(h.axis);
    g.scale = Vec3(cfg.tangent_scale, cfg.tangent_scale, cfg.normal_scale);

    const Cell c = cell_of(g.mean, geo.origin, geo.voxel_size);
    const bool consistent = geo.in_bounds(c.x, c.y, c.z) &&
                            geo.linear(c.x, c.y, c.z) == static_cast<std::size_t>(h.voxel);
    g.opacity = consistent ? 1.0 : cfg.inconsistent_opacity;

    int label = gt.labels[static_cast<std::size_t>(h.voxel)];
    const double flip_draw = unit(rng);
    const auto other = static_cast<int>(unit(rng) * (occupied_classes - 1));
    if (occupied_classes > 1 && flip_draw < noise.flip_prob) label = other < label ? other : other + 1;
    g.logits = Eigen::VectorXd::Zero(occupied_classes);
    g.logits[label] = cfg.logit_magnitude;
    for (int k = 0; k < occupied_classes; ++k) g.logits[k] += noise.logit_noise * gauss(rng);

    Eigen::VectorXd input(occupied_classes + 3);
    input << softmax(g.logits), g.mean;
    out.features.row(static_cast<Eigen::Index>(i)) = (input.transpose() * projection).array().tanh();
    out.primitives.push_back(std::move(g));
  }
  out.confidences = confidence_batch(out.primitives, cfg.confidence);
  return out;
}

std::vector<CameraFrame> generate_trajectory(const SceneSpec& spec, const VoxelGrid& gt, int n_frames,
                                             std::uint64_t seed, const TrajectoryConfig& cfg) {
  if (n_frames < 1) throw InvalidInput("trajectory needs at least one frame");
  const GridGeometry& geo = gt.geometry;
  const Vec3 center = spec.origin + 0.5 * spec.extent;
  const double radius = cfg.radius_fraction * std::min(spec.extent.x(), spec.extent.y());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double phase = std::numbers::pi * (unit(rng) + 1.0);

  auto is_free = [&](const Vec3& p) {
    const Cell c = cell_of(p, geo.origin, geo.voxel_size);
    return geo.in_bounds(c.x, c.y, c.z) && gt.labels[geo.linear(c.x, c.y, c.z)] == gt.empty_label();
  };

  std::vector<CameraFrame> frames;
  frames.reserve(static_cast<std::size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    const double theta = phase + 2.0 * std::numbers::pi * i / n_frames;
    const Vec3 dir(std::cos(theta), std::sin(theta), 0.0);
    const Vec3 jitter = cfg.jitter * Vec3(unit(rng), unit(rng), unit(rng));
    bool placed = false;
    for (int shrink = 0; shrink <= 10 && !placed; ++shrink) {
      const double r = radius * std::pow(0.8, shrink);
      Vec3 eye = center + r * dir + jitter;
      eye.z() = cfg.height + jitter.z();
      if (!is_free(eye)) continue;
      Vec3 target = center - cfg.look_ahead * dir;
      target.z() = cfg.target_height;
      CameraFrame f;
      f.intrinsics = default_intrinsics();
      f.width = cfg.width;
      f.height = cfg.height_px;
      f.pose = look_at(eye, target);
      frames.push_back(f);
      placed = true;
    }
    if (!placed) throw InvalidInput("no free space for camera " + std::to_string(i));
  }
  return frames;
}

}  // namespace gsmem
