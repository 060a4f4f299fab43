#include "gsmem/loss.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace gsmem {

namespace {

constexpr double kMinProb = 1e-12;
constexpr double kMaxNegLog = 100.0;

void check_inputs(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask) {
  if (pred.mode != GridMode::probability) throw InvalidInput("prediction must be a probability grid");
  if (gt.mode != GridMode::label) throw InvalidInput("ground truth must be a label grid");
  if (!(pred.geometry == gt.geometry) || pred.classes != gt.classes) throw InvalidInput("grids are not congruent");
  if (mask.size() != gt.geometry.voxel_count()) throw InvalidInput("mask size does not match the grid");
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }))
    throw InvalidInput("mask is empty");
}

double capped_neg_log(double x) { return x > 0.0 ? std::min(-std::log(x), kMaxNegLog) : kMaxNegLog; }

}  // namespace

void LossConfig::validate() const {
  if (lambda_focal < 0.0 || lambda_lovasz < 0.0) throw InvalidInput("loss weights must be nonnegative");
  if (focal_gamma < 0.0) throw InvalidInput("focal gamma must be nonnegative");
  if (stage_count < 1) throw InvalidInput("stage_count must be at least 1");
  if (reweight_lambda < 0.0) throw InvalidInput("reweight lambda must be nonnegative");
}

std::vector<double> focal_terms(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask, double gamma) {
  check_inputs(pred, gt, mask);
  std::vector<double> out;
  for (std::size_t v = 0; v < mask.size(); ++v) {
    if (!mask[v]) continue;
    const double pt = std::max(static_cast<double>(pred.prob(v, gt.labels[v])), kMinProb);
    out.push_back(-std::pow(1.0 - pt, gamma) * std::log(pt));
  }
  return out;
}

double focal_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask, double gamma) {
  const auto terms = focal_terms(pred, gt, mask, gamma);
  return std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(terms.size());
}

double lovasz_binary(std::span<const double> errors, std::span<const std::uint8_t> foreground) {
  if (errors.size() != foreground.size()) throw InvalidInput("errors and labels differ in length");
  std::vector<std::size_t> order(errors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
  const double positives = static_cast<double>(std::count_if(foreground.begin(), foreground.end(),
                                                             [](std::uint8_t f) { return f != 0; }));
  double cum_fg = 0.0, cum_bg = 0.0, prev = 0.0, loss = 0.0;
  for (std::size_t i : order) {
    (foreground[i] ? cum_fg : cum_bg) += 1.0;
    const double jaccard = 1.0 - (positives - cum_fg) / (positives + cum_bg);
    loss += errors[i] * (jaccard - prev);
    prev = jaccard;
  }
  return loss;
}

double lovasz_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask) {
  check_inputs(pred, gt, mask);
  std::vector<std::size_t> voxels;
  for (std::size_t v = 0; v < mask.size(); ++v)
    if (mask[v]) voxels.push_back(v);
  std::vector<double> errors(voxels.size());
  std::vector<std::uint8_t> fg(voxels.size());
  double total = 0.0;
  int present = 0;
  for (std::uint32_t c = 0; c < gt.classes; ++c) {
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      fg[i] = gt.labels[voxels[i]] == c ? 1 : 0;
      errors[i] = std::abs(fg[i] - static_cast<double>(pred.prob(voxels[i], c)));
    }
    if (std::find(fg.begin(), fg.end(), 1) == fg.end()) continue;
    total += lovasz_binary(errors, fg);
    ++present;
  }
  return total / present;
}

double geo_scale_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask) {
  check_inputs(pred, gt, mask);
  const std::uint32_t empty = gt.classes - 1;
  double sxy = 0.0, sx = 0.0, sy = 0.0, s_neg = 0.0, s_not_y = 0.0;
  for (std::size_t v = 0; v < mask.size(); ++v) {
    if (!mask[v]) continue;
    const double x = 1.0 - pred.prob(v, empty);
    const double y = gt.labels[v] != empty ? 1.0 : 0.0;
    sxy += x * y;
    sx += x;
    sy += y;
    s_neg += (1.0 - x) * (1.0 - y);
    s_not_y += 1.0 - y;
  }
  if (sy == 0.0 || s_not_y == 0.0) throw InvalidInput("ground truth needs both occupied and empty voxels");
  double loss = capped_neg_log(sxy / sy) + capped_neg_log(s_neg / s_not_y);
  if (sx > 0.0) loss += capped_neg_log(sxy / sx);
  return loss;
}

SscLoss ssc_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask, const LossConfig& cfg) {
  cfg.validate();
  SscLoss l;
  l.focal = focal_loss(pred, gt, mask, cfg.focal_gamma);
  l.lovasz = lovasz_loss(pred, gt, mask);
  l.geo = geo_scale_loss(pred, gt, mask);
  l.total = cfg.lambda_focal * l.focal + cfg.lambda_lovasz * l.lovasz + l.geo;
  return l;
}

std::vector<double> stage_weights(int n) {
  if (n < 1) throw InvalidInput("stage count must be at least 1");
  if (n > 60) throw InvalidInput("stage count too large");
  const double denom = std::ldexp(1.0, n) - 1.0;
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) w[static_cast<std::size_t>(j - 1)] = std::ldexp(1.0, j) / denom;
  return w;
}

double multi_stage_loss(std::span<const double> stage_losses) {
  const auto w = stage_weights(static_cast<int>(stage_losses.size()));
  return std::inner_product(w.begin(), w.end(), stage_losses.begin(), 0.0);
}

double reweighted_loss(std::span<const double> base, std::span<const double> confidence_logits, Reweight mode,
                       double lambda) {
  if (base.empty()) throw InvalidInput("no voxels to reweight");
  if (mode != Reweight::none && confidence_logits.size() != base.size())
    throw InvalidInput("confidence map does not match the losses");
  double sum = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    switch (mode) {
      case Reweight::none:
        sum += base[i];
        break;
      case Reweight::exp_penalty: {
        const double c = std::exp(confidence_logits[i]);
        sum += c * base[i] + lambda * std::exp(-c);
        break;
      }
      case Reweight::log_penalty: {
        const double c = 1.0 + std::exp(confidence_logits[i]);
        assert(c > 0.0);
        sum += c * base[i] - lambda * std::log(c);
        break;
      }
    }
  }
  return sum / static_cast<double>(base.size());
}

}  // namespace gsmem
