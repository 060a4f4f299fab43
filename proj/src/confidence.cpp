#include "gsmem/confidence.hpp"

#include <algorithm>
#include <cmath>

namespace gsmem {

void ConfidenceConfig::validate() const {
  if (!(h_max > 0.0)) throw InvalidInput("h_max must be positive");
  if (!(sharpness > 0.0)) throw InvalidInput("sharpness must be positive");
  if (!(softmax_temperature > 0.0)) throw InvalidInput("softmax temperature must be positive");
}

double entropy(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd p = softmax(logits);
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
  return std::max(h, 0.0);
}

double semantic_confidence(double h, const ConfidenceConfig& cfg) {
  if (cfg.transform == ConfidenceTransform::sharp_sigmoid)
    return 1.0 / (1.0 + std::exp(cfg.sigmoid_beta * (h - cfg.sigmoid_gamma)));
  const double ratio = std::min(h / cfg.h_max, 1.0);
  return std::pow(1.0 - ratio, cfg.sharpness);
}

double confidence(const GaussianPrimitive& g, const ConfidenceConfig& cfg) {
  return semantic_confidence(entropy(g.logits), cfg) * g.opacity;
}

std::vector<double> confidence_batch(std::span<const GaussianPrimitive> primitives, const ConfidenceConfig& cfg) {
  std::vector<double> out;
  out.reserve(primitives.size());
  for (const auto& g : primitives) out.push_back(confidence(g, cfg));
  if (cfg.normalize == ConfidenceNormalize::none) return out;

  if (out.empty()) throw InvalidInput("softmax normalization needs a nonempty batch");
  const double m = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& c : out) {
    c = std::exp((c - m) / cfg.softmax_temperature);
    sum += c;
  }
  for (double& c : out) c /= sum;
  return out;
}

}  // namespace gsmem
