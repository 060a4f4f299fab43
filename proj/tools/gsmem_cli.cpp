// gsmem: run the monocular and embodied pipelines, inspect, render and
// re-fuse memory checkpoints.
//
// Exit codes: 0 success, 1 configuration error, 2 file format error,
// 3 internal invariant violation.

#include "gsmem/pipeline.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>

namespace {

enum Exit { kOk = 0, kConfig = 1, kFormat = 2, kInvariant = 3 };

void apply_thread_env() {
  if (const char* env = std::getenv("GSMEM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
}

struct Choices {
  std::string mode = "embodied";
  std::string transform = "power";
  std::string normalize = "none";
  std::string origin = "world-zero";
  bool no_local_refine = false;
};

void add_run_options(CLI::App* sub, gsmem::RunConfig& cfg, Choices& ch) {
  sub->set_config("--config", "", "INI/TOML run configuration; explicit flags take precedence");
  sub->add_option("--scene", cfg.scene_path, "scene description file (default: built-in room)");
  sub->add_option("--seed", cfg.seed, "trajectory and predictor seed");
  sub->add_option("--frames", cfg.frames, "number of frames");
  sub->add_option("--out", cfg.output_dir, "output directory");
  sub->add_option("--mode", ch.mode, "local | embodied | embodied-concat");
  sub->add_option("--depth-sigma", cfg.noise.depth_sigma, "depth noise standard deviation (m)");
  sub->add_option("--logit-noise", cfg.noise.logit_noise, "additive logit noise standard deviation");
  sub->add_option("--flip-prob", cfg.noise.flip_prob, "class flip probability");
  sub->add_option("--h-max", cfg.memory.confidence.h_max, "entropy threshold");
  sub->add_option("--sharpness", cfg.memory.confidence.sharpness, "confidence exponent");
  sub->add_option("--confidence-transform", ch.transform, "power | sharp-sigmoid");
  sub->add_option("--sigmoid-beta", cfg.memory.confidence.sigmoid_beta, "sharp sigmoid slope");
  sub->add_option("--sigmoid-gamma", cfg.memory.confidence.sigmoid_gamma, "sharp sigmoid center");
  sub->add_option("--confidence-normalize", ch.normalize, "none | softmax");
  sub->add_option("--softmax-temperature", cfg.memory.confidence.softmax_temperature, "batch softmax temperature");
  sub->add_option("--fusion-voxel", cfg.memory.fusion.voxel_size, "fusion cell size (m)");
  sub->add_option("--fusion-temperature", cfg.memory.fusion.temperature, "per-cell softmax temperature");
  sub->add_option("--origin-policy", ch.origin, "world-zero | scene-min");
  sub->add_option("--extent-culling", cfg.memory.extent_culling, "cull on 3-sigma extent as well as the mean");
  sub->add_option("--n-blocks", cfg.memory.n_blocks, "temporal encoder blocks");
  sub->add_option("--d-model", cfg.encoder.d_model, "feature width");
  sub->add_option("--heads", cfg.encoder.n_heads, "attention heads");
  sub->add_option("--d-ff", cfg.encoder.d_ff, "FFN hidden width");
  sub->add_option("--classes", cfg.encoder.classes, "class count including empty");
  sub->add_option("--refine-gain", cfg.encoder.refine_gain, "refinement head scale");
  sub->add_option("--weight-seed", cfg.weight_seed, "encoder weight seed");
  sub->add_flag("--no-local-refine", ch.no_local_refine, "skip monocular self-refinement");
  sub->add_option("--truncation", cfg.truncation_sigmas, "splat truncation radius in sigmas");
}

void resolve(gsmem::RunConfig& cfg, const Choices& ch) {
  using namespace gsmem;
  cfg.mode = parse_run_mode(ch.mode);
  const std::map<std::string, ConfidenceTransform> transforms{{"power", ConfidenceTransform::power},
                                                              {"sharp-sigmoid", ConfidenceTransform::sharp_sigmoid}};
  const std::map<std::string, ConfidenceNormalize> norms{{"none", ConfidenceNormalize::none},
                                                         {"softmax", ConfidenceNormalize::softmax}};
  const std::map<std::string, GridOriginPolicy> origins{{"world-zero", GridOriginPolicy::world_zero},
                                                        {"scene-min", GridOriginPolicy::scene_min}};
  if (!transforms.contains(ch.transform)) throw InvalidInput("confidence-transform: unknown value " + ch.transform);
  if (!norms.contains(ch.normalize)) throw InvalidInput("confidence-normalize: unknown value " + ch.normalize);
  if (!origins.contains(ch.origin)) throw InvalidInput("origin-policy: unknown value " + ch.origin);
  cfg.memory.confidence.transform = transforms.at(ch.transform);
  cfg.memory.confidence.normalize = norms.at(ch.normalize);
  cfg.memory.fusion.origin_policy = origins.at(ch.origin);
  cfg.local_refine = !ch.no_local_refine;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"Temporal Gaussian memory for semantic scene completion on synthetic scenes"};
  app.require_subcommand(1);

  gsmem::RunConfig cfg;
  Choices ch;
  auto* local = app.add_subcommand("run-local", "per-frame prediction scored inside each frustum");
  add_run_options(local, cfg, ch);
  auto* embodied = app.add_subcommand("run-embodied", "memory recurrence scored over the observed region");
  add_run_options(embodied, cfg, ch);

  std::string in_path, out_path, scene_path;
  double truncation = 3.0, fusion_voxel = 0.0, fusion_temperature = 1.0;
  bool probabilities = false;
  auto* stats = app.add_subcommand("stats", "summarize a .gmem checkpoint");
  stats->add_option("gmem", in_path, "checkpoint")->required();
  auto* render = app.add_subcommand("render", "render a .gmem checkpoint to a .vgrid");
  render->add_option("gmem", in_path, "checkpoint")->required();
  render->add_option("-o,--out", out_path, "output .vgrid")->required();
  render->add_option("--scene", scene_path, "scene file supplying the grid geometry");
  render->add_option("--truncation", truncation, "splat truncation radius in sigmas");
  render->add_flag("--probabilities", probabilities, "write per-class probabilities instead of labels");
  auto* fuse = app.add_subcommand("fuse", "re-fuse a .gmem checkpoint so each fusion cell holds one primitive");
  fuse->add_option("gmem", in_path, "checkpoint")->required();
  fuse->add_option("-o,--out", out_path, "output .gmem")->required();
  fuse->add_option("--fusion-voxel", fusion_voxel, "new fusion cell size (default: keep)");
  fuse->add_option("--fusion-temperature", fusion_temperature, "per-cell softmax temperature");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (local->parsed() || embodied->parsed()) {
      if (local->parsed() && ch.mode == "embodied" && local->count("--mode") == 0) ch.mode = "local";
      resolve(cfg, ch);
      if (local->parsed()) {
        const auto run = gsmem::run_local(cfg);
        gsmem::write_report(std::cout, run.overall);
      } else {
        const auto run = gsmem::run_embodied(cfg);
        gsmem::write_report(std::cout, run.metrics);
        std::cout << "memory_count " << run.memory.size() << '\n';
      }
    } else if (stats->parsed()) {
      std::cout << gsmem::memory_report(gsmem::load_gmem(in_path));
    } else if (render->parsed()) {
      const auto memory = gsmem::load_gmem(in_path);
      const auto spec = scene_path.empty() ? gsmem::default_scene() : gsmem::load_scene(scene_path);
      gsmem::RenderOptions opt;
      opt.truncation_sigmas = truncation;
      auto grid = gsmem::render(spec.geometry(), memory.batch.primitives, opt, memory.classes);
      if (!probabilities) grid = gsmem::argmax_labels(grid);
      gsmem::save_vgrid(out_path, grid);
    } else if (fuse->parsed()) {
      auto memory = gsmem::load_gmem(in_path);
      gsmem::MemoryConfig mc;
      mc.fusion.voxel_size = fusion_voxel > 0.0 ? fusion_voxel : memory.voxel_size;
      mc.fusion.temperature = fusion_temperature;
      mc.fusion.validate();
      memory.voxel_size = mc.fusion.voxel_size;
      memory.reindex(mc);
      memory.check_invariants();
      gsmem::save_gmem(out_path, memory);
      std::cout << "count " << memory.size() << '\n';
    }
  } catch (const gsmem::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const gsmem::InvalidInput& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::logic_error& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvariant;
  }
  return kOk;
}
