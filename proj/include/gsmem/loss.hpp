// Forward-only scene completion losses over probability grids.
#pragma once

#include "gsmem/grid.hpp"

#include <span>
#include <vector>

namespace gsmem {

enum class Reweight { none, exp_penalty, log_penalty };

struct LossConfig {
  double lambda_focal = 100.0;
  double lambda_lovasz = 2.0;
  double focal_gamma = 2.0;
  int stage_count = 1;
  Reweight reweight = Reweight::none;
  double reweight_lambda = 0.2;

  void validate() const;
};

/// Per masked voxel -(1 - p_t)^gamma log p_t, in mask order; p_t >= 1e-12.
std::vector<double> focal_terms(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask, double gamma);
/// Mean of focal_terms.
double focal_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask, double gamma = 2.0);

/// Lovasz extension of the Jaccard loss for one binary problem: errors and
/// foreground flags in any order.
double lovasz_binary(std::span<const double> errors, std::span<const std::uint8_t> foreground);
/// Lovasz-softmax over all channels (empty included), averaged over the
/// classes present in the masked ground truth.
double lovasz_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask);

/// -(log P + log R + log S) for soft occupancy x = 1 - p_empty against the
/// occupied indicator. A term whose denominator is zero is skipped; each
/// -log is capped at 100. Throws when the masked ground truth is all empty
/// or all occupied.
double geo_scale_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask);

struct SscLoss {
  double focal = 0.0;
  double lovasz = 0.0;
  double geo = 0.0;
  double total = 0.0;
};

/// lambda_focal * focal + lambda_lovasz * lovasz + geo.
SscLoss ssc_loss(const VoxelGrid& pred, const VoxelGrid& gt, const VoxelMask& mask, const LossConfig& cfg = {});

/// w_j = 2^j / (2^n - 1) for j = 1..n. The weights sum to 2.
std::vector<double> stage_weights(int n);
/// sum_j w_j L_j with n = losses.size().
double multi_stage_loss(std::span<const double> stage_losses);

/// Mean over voxels of the reweighted loss. exp_penalty: C' = e^c,
/// C' L + lambda e^-C'. log_penalty: C' = 1 + e^c, C' L - lambda log C'.
double reweighted_loss(std::span<const double> base, std::span<const double> confidence_logits, Reweight mode,
                       double lambda = 0.2);

}  // namespace gsmem
