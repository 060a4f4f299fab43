// Per-primitive confidence from semantic entropy and opacity.
#pragma once

#include "gsmem/core.hpp"

#include <span>
#include <vector>

namespace gsmem {

enum class ConfidenceTransform { power, sharp_sigmoid };
enum class ConfidenceNormalize { none, softmax };

struct ConfidenceConfig {
  double h_max = 3.0;
  double sharpness = 3.0;
  ConfidenceTransform transform = ConfidenceTransform::power;
  double sigmoid_beta = 10.0;
  double sigmoid_gamma = 1.5;
  ConfidenceNormalize normalize = ConfidenceNormalize::none;
  double softmax_temperature = 0.2;

  void validate() const;
};

/// Shannon entropy (natural log) of softmax(logits).
double entropy(const Eigen::VectorXd& logits);

/// Semantic factor alone: (1 - min(H / h_max, 1))^p, or sigmoid(-beta (H - gamma)).
double semantic_confidence(double entropy, const ConfidenceConfig& cfg);

/// semantic_confidence(H(c)) * opacity. Ignores cfg.normalize.
double confidence(const GaussianPrimitive& g, const ConfidenceConfig& cfg = {});

/// Element-wise confidence; with normalize = softmax the raw scores are
/// softmax-normalized across the batch at cfg.softmax_temperature.
std::vector<double> confidence_batch(std::span<const GaussianPrimitive> primitives,
                                     const ConfidenceConfig& cfg = {});

}  // namespace gsmem
