#include "gsmem/confidence.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace gsmem;

namespace {

GaussianPrimitive with_logits(Eigen::VectorXd logits, double opacity) {
  return make_primitive(Vec3::Zero(), Vec3::Ones(), Quat(1, 0, 0, 0), opacity, std::move(logits));
}

Eigen::VectorXd one_hot(int n, int k, double mag = 50.0) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  c[k] = mag;
  return c;
}

}  // namespace

TEST_CASE("defaults") {
  const ConfidenceConfig c;
  CHECK(c.h_max == 3.0);
  CHECK(c.sharpness == 3.0);
  CHECK(c.transform == ConfidenceTransform::power);
  CHECK(c.sigmoid_beta == 10.0);
  CHECK(c.sigmoid_gamma == 1.5);
  CHECK(c.normalize == ConfidenceNormalize::none);
  CHECK(c.softmax_temperature == 0.2);
}

TEST_CASE("entropy values") {
  CHECK(entropy(one_hot(11, 4)) < 1e-18);
  CHECK(entropy(Eigen::VectorXd::Zero(11)) == doctest::Approx(std::log(11.0)).epsilon(1e-14));
  CHECK(entropy(Eigen::VectorXd::Constant(2, 3.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd c(11);
    for (auto& x : c) x = n(rng);
    CHECK(entropy(c) == doctest::Approx(oracle::entropy(c)).epsilon(1e-12));
    CHECK(std::abs(entropy(c) - entropy((c.array() + 17.5).matrix())) <= 1e-9);
  }
}

TEST_CASE("power confidence values") {
  CHECK(confidence(with_logits(one_hot(11, 0), 1.0)) == 1.0);
  const double h = oracle::entropy(Eigen::VectorXd::Zero(11));
  const double expect = std::pow(1.0 - h / 3.0, 3.0);
  CHECK(expect == doctest::Approx(0.008084).epsilon(1e-3));
  CHECK(std::abs(confidence(with_logits(Eigen::VectorXd::Zero(11), 1.0)) - expect) <= 1e-12);
  CHECK(std::abs(confidence(with_logits(Eigen::VectorXd::Zero(11), 0.5)) - 0.5 * expect) <= 1e-12);
}

TEST_CASE("semantic factor saturates at h_max and is monotone") {
  ConfidenceConfig cfg;
  cfg.h_max = 1.0;
  CHECK(semantic_confidence(1.0, cfg) == 0.0);
  CHECK(semantic_confidence(2.5, cfg) == 0.0);
  double prev = 2.0;
  for (double h = 0.0; h <= 3.0; h += 0.05) {
    const double s = semantic_confidence(h, ConfidenceConfig{});
    CHECK(s <= prev);
    CHECK(s >= 0.0);
    prev = s;
  }
}

TEST_CASE("sharp sigmoid is strictly decreasing and bounded") {
  ConfidenceConfig cfg;
  cfg.transform = ConfidenceTransform::sharp_sigmoid;
  CHECK(semantic_confidence(1.5, cfg) == doctest::Approx(0.5));
  double prev = 2.0;
  for (double h = 0.0; h <= 2.4; h += 0.05) {
    const double s = semantic_confidence(h, cfg);
    CHECK(s < prev);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(s == doctest::Approx(1.0 / (1.0 + std::exp(10.0 * (h - 1.5)))).epsilon(1e-12));
    prev = s;
  }
}

TEST_CASE("confidence stays in [0,1] for random inputs") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 5.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto transform : {ConfidenceTransform::power, ConfidenceTransform::sharp_sigmoid}) {
    ConfidenceConfig cfg;
    cfg.transform = transform;
    for (int t = 0; t < 200; ++t) {
      Eigen::VectorXd c(11);
      for (auto& x : c) x = n(rng);
      const double v = confidence(with_logits(c, u(rng)), cfg);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("batch normalization") {
  const std::vector<GaussianPrimitive> twins{with_logits(one_hot(11, 2, 3.0), 0.7), with_logits(one_hot(11, 2, 3.0), 0.7)};
  ConfidenceConfig cfg;
  const auto raw = confidence_batch(twins, cfg);
  CHECK(raw[0] == confidence(twins[0], cfg));
  cfg.normalize = ConfidenceNormalize::softmax;
  const auto norm = confidence_batch(twins, cfg);
  CHECK(norm[0] == doctest::Approx(0.5));
  CHECK(norm[1] == doctest::Approx(0.5));

  // Raw scores 1 and 0: a one-hot opaque primitive and a transparent one.
  const std::vector<GaussianPrimitive> pair{with_logits(one_hot(11, 0), 1.0), with_logits(one_hot(11, 0), 0.0)};
  const auto p = confidence_batch(pair, cfg);
  const double e5 = std::exp(5.0);
  CHECK(p[0] == doctest::Approx(e5 / (e5 + 1.0)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1.0 / (e5 + 1.0)).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.99331).epsilon(1e-5));

  CHECK_THROWS_AS(confidence_batch(std::vector<GaussianPrimitive>{}, cfg), InvalidInput);
  cfg.normalize = ConfidenceNormalize::none;
  CHECK(confidence_batch(std::vector<GaussianPrimitive>{}, cfg).empty());
}

TEST_CASE("config validation") {
  ConfidenceConfig cfg;
  cfg.h_max = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.sharpness = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.softmax_temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}
