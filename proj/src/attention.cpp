#include "gsmem/attention.hpp"

#include "gsmem/binary_io.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace gsmem {

namespace {

constexpr std::uint32_t kWtsVersion = 1;

template <typename F>
void for_each_matrix(EncoderWeights& w, F&& f) {
  f(w.wq); f(w.wk); f(w.wv); f(w.wo);
  f(w.ffn_w1); f(w.ffn_b1); f(w.ffn_w2); f(w.ffn_b2);
  f(w.refine_w); f(w.refine_b);
}

template <typename F>
void for_each_matrix(const EncoderWeights& w, F&& f) {
  f(w.wq); f(w.wk); f(w.wv); f(w.wo);
  f(w.ffn_w1); f(w.ffn_b1); f(w.ffn_w2); f(w.ffn_b2);
  f(w.refine_w); f(w.refine_b);
}

void allocate(EncoderWeights& w) {
  const int d = w.dims.d_model, ff = w.dims.d_ff, r = w.dims.refine_width();
  w.wq.resize(d, d);
  w.wk.resize(d, d);
  w.wv.resize(d, d);
  w.wo.resize(d, d);
  w.ffn_w1.resize(d, ff);
  w.ffn_b1.resize(ff);
  w.ffn_w2.resize(ff, d);
  w.ffn_b2.resize(d);
  w.refine_w.resize(d, r);
  w.refine_b.resize(r);
}

// Row-major visit of a dense Eigen object.
template <typename M, typename F>
void visit_row_major(M& m, F&& f) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) f(m(i, j));
}

Eigen::MatrixXd scale_rows(const Eigen::MatrixXd& m, const std::vector<double>& s) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) *= s[static_cast<std::size_t>(i)];
  return out;
}

bool all_zero(const Eigen::RowVectorXd& d, Eigen::Index start, Eigen::Index len) {
  return (d.segment(start, len).array() == 0.0).all();
}

}  // namespace

void EncoderDims::validate() const {
  if (d_model < 1 || n_heads < 1 || d_ff < 1) throw InvalidInput("encoder dims must be positive");
  if (d_model % n_heads != 0) throw InvalidInput("d_model must be divisible by n_heads");
  if (classes < 2) throw InvalidInput("class count must be >= 2");
  if (!(refine_gain >= 0.0) || !(residual_gain >= 0.0)) throw InvalidInput("weight gains must be nonnegative");
}

bool EncoderWeights::operator==(const EncoderWeights& o) const {
  return dims.d_model == o.dims.d_model && dims.n_heads == o.dims.n_heads && dims.d_ff == o.dims.d_ff &&
         dims.classes == o.dims.classes && seed == o.seed && wq == o.wq && wk == o.wk && wv == o.wv &&
         wo == o.wo && ffn_w1 == o.ffn_w1 && ffn_b1 == o.ffn_b1 && ffn_w2 == o.ffn_w2 && ffn_b2 == o.ffn_b2 &&
         refine_w == o.refine_w && refine_b == o.refine_b;
}

EncoderWeights init_weights(const EncoderDims& dims, std::uint64_t seed) {
  dims.validate();
  EncoderWeights w;
  w.dims = dims;
  w.seed = seed;
  allocate(w);
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.d_model));
  const auto draw = [&](double gain) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return static_cast<double>(static_cast<float>((2.0 * u - 1.0) * scale * gain));
  };
  for (auto* m : {&w.wq, &w.wk, &w.wv}) visit_row_major(*m, [&](double& x) { x = draw(1.0); });
  visit_row_major(w.wo, [&](double& x) { x = draw(dims.residual_gain); });
  visit_row_major(w.ffn_w1, [&](double& x) { x = draw(1.0); });
  visit_row_major(w.ffn_b1, [&](double& x) { x = draw(1.0); });
  visit_row_major(w.ffn_w2, [&](double& x) { x = draw(dims.residual_gain); });
  visit_row_major(w.ffn_b2, [&](double& x) { x = draw(dims.residual_gain); });
  visit_row_major(w.refine_w, [&](double& x) { x = draw(dims.refine_gain); });
  visit_row_major(w.refine_b, [&](double& x) { x = draw(dims.refine_gain); });
  return w;
}

EncoderWeights init_weights(int d_model, int n_heads, int d_ff, int classes, std::uint64_t seed) {
  EncoderDims dims;
  dims.d_model = d_model;
  dims.n_heads = n_heads;
  dims.d_ff = d_ff;
  dims.classes = classes;
  return init_weights(dims, seed);
}

std::uint64_t weights_checksum(const EncoderWeights& w) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for_each_matrix(w, [&](const auto& m) {
    visit_row_major(m, [&](const double& x) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    });
  });
  return h;
}

void write_weights(std::ostream& os, const EncoderWeights& w) {
  using namespace binary;
  put_magic(os, "TGSW");
  put<std::uint32_t>(os, kWtsVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(w.dims.d_model));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(w.dims.n_heads));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(w.dims.d_ff));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(w.dims.classes));
  put<std::uint64_t>(os, w.seed);
  for_each_matrix(w, [&](const auto& m) {
    visit_row_major(m, [&](const double& x) { put<float>(os, static_cast<float>(x)); });
  });
  if (!os) throw FormatError("failed to write weights");
}

EncoderWeights read_weights(std::istream& is) {
  using namespace binary;
  expect_magic(is, "TGSW");
  if (get<std::uint32_t>(is) != kWtsVersion) throw FormatError("unsupported weights version");
  EncoderWeights w;
  w.dims.d_model = static_cast<int>(get<std::uint32_t>(is));
  w.dims.n_heads = static_cast<int>(get<std::uint32_t>(is));
  w.dims.d_ff = static_cast<int>(get<std::uint32_t>(is));
  w.dims.classes = static_cast<int>(get<std::uint32_t>(is));
  w.seed = get<std::uint64_t>(is);
  if (w.dims.d_model > 4096 || w.dims.d_ff > 65536 || w.dims.classes > 4096) throw FormatError("implausible dims");
  try {
    w.dims.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid weight dims: ") + e.what());
  }
  allocate(w);
  for_each_matrix(w, [&](auto& m) { visit_row_major(m, [&](double& x) { x = get<float>(is); }); });
  return w;
}

void save_weights(const std::filesystem::path& path, const EncoderWeights& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_weights(os, w);
}

EncoderWeights load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_weights(is);
}

Eigen::MatrixXd mha(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v, int n_heads) {
  if (k.rows() == 0) throw InvalidInput("attention needs at least one key");
  if (n_heads < 1 || q.cols() % n_heads != 0) throw InvalidInput("model width must be divisible by n_heads");
  if (k.cols() != q.cols() || v.cols() != q.cols() || v.rows() != k.rows())
    throw InvalidInput("attention operand shapes disagree");
  const Eigen::Index dh = q.cols() / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Eigen::MatrixXd out(q.rows(), q.cols());
  for (int h = 0; h < n_heads; ++h) {
    const Eigen::Index c0 = h * dh;
    Eigen::MatrixXd s = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * inv_sqrt;
    const Eigen::VectorXd row_max = s.rowwise().maxCoeff();
    s.colwise() -= row_max;
    s = s.array().exp().matrix();
    const Eigen::VectorXd row_sum = s.rowwise().sum();
    s.array().colwise() /= row_sum.array();
    out.middleCols(c0, dh).noalias() = s * v.middleCols(c0, dh);
  }
  return out;
}

Eigen::MatrixXd cca(const PrimitiveBatch& query, const PrimitiveBatch& keyval, const EncoderWeights& w) {
  query.validate();
  keyval.validate();
  if (query.empty() || keyval.empty()) throw InvalidInput("cca needs nonempty batches");
  const int d = w.dims.d_model;
  if (query.features.cols() != d || keyval.features.cols() != d) throw InvalidInput("feature width != d_model");
  const Eigen::MatrixXd q = query.features * w.wq;
  const Eigen::MatrixXd k = keyval.features * w.wk;
  const Eigen::MatrixXd v = scale_rows(keyval.features * w.wv, keyval.confidences);
  const Eigen::MatrixXd heads = scale_rows(mha(q, k, v, w.dims.n_heads), query.confidences);
  return heads * w.wo;
}

GaussianPrimitive apply_refinement(const GaussianPrimitive& g, const Eigen::RowVectorXd& delta) {
  GaussianPrimitive out = g;
  const Eigen::Index sem = g.logits.size();
  if (delta.size() != 11 + sem) throw InvalidInput("refinement delta has wrong width");
  if (!all_zero(delta, 0, 3)) out.mean += delta.segment(0, 3).transpose();
  if (!all_zero(delta, 3, 3)) {
    const Vec3 log_s = g.scale.array().log().matrix() + delta.segment(3, 3).transpose();
    out.scale = log_s.array().exp().matrix().cwiseMax(kMinScale);
  }
  if (!all_zero(delta, 6, 4)) {
    const Quat q = g.rotation + delta.segment(6, 4).transpose();
    const double n = q.norm();
    if (n > 1e-12) out.rotation = q / n;
  }
  if (!all_zero(delta, 10, 1)) {
    const double a = std::clamp(g.opacity, 1e-6, 1.0 - 1e-6);
    const double z = std::log(a / (1.0 - a)) + delta[10];
    out.opacity = 1.0 / (1.0 + std::exp(-z));
  }
  if (!all_zero(delta, 11, sem)) out.logits += delta.segment(11, sem).transpose();
  return out;
}

PrimitiveBatch temporal_encoder_block(const PrimitiveBatch& query, const PrimitiveBatch& keyval,
                                      const EncoderWeights& w, const ConfidenceConfig& conf) {
  Eigen::MatrixXd f = query.features + cca(query, keyval, w);
  const Eigen::MatrixXd hidden = ((f * w.ffn_w1).rowwise() + w.ffn_b1).cwiseMax(0.0);
  f += (hidden * w.ffn_w2).rowwise() + w.ffn_b2;
  const Eigen::MatrixXd deltas = (f * w.refine_w).rowwise() + w.refine_b;

  PrimitiveBatch out;
  out.primitives.reserve(query.size());
  for (std::size_t i = 0; i < query.size(); ++i)
    out.primitives.push_back(apply_refinement(query.primitives[i], deltas.row(static_cast<Eigen::Index>(i))));
  out.features = std::move(f);
  out.confidences = confidence_batch(out.primitives, conf);
  return out;
}

std::pair<PrimitiveBatch, PrimitiveBatch> dte_step(const PrimitiveBatch& current, const PrimitiveBatch& history,
                                                   const EncoderWeights& w, int n_blocks,
                                                   const ConfidenceConfig& conf) {
  if (current.empty()) throw InvalidInput("dte_step needs a nonempty current batch");
  if (n_blocks < 0) throw InvalidInput("n_blocks must be >= 0");
  PrimitiveBatch cur = current;
  if (history.empty()) {
    for (int b = 0; b < n_blocks; ++b) cur = temporal_encoder_block(cur, cur, w, conf);
    return {std::move(cur), PrimitiveBatch{}};
  }
  PrimitiveBatch hist = history;
  for (int b = 0; b < n_blocks; ++b) {
    PrimitiveBatch next_cur = temporal_encoder_block(cur, hist, w, conf);
    PrimitiveBatch next_hist = temporal_encoder_block(hist, cur, w, conf);
    cur = std::move(next_cur);
    hist = std::move(next_hist);
  }
  return {std::move(cur), std::move(hist)};
}

}  // namespace gsmem
