// Forward-only attention stack for temporal refinement of primitive batches:
// multi-head attention, confidence-aware cross attention (value rows scaled by
// key-side confidence, concatenated head output scaled by query-side
// confidence before W_o), the FFN + refinement block, and the dual-stream
// temporal encoder step with shared weights.
#pragma once

#include "gsmem/confidence.hpp"
#include "gsmem/core.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>

namespace gsmem {

struct EncoderDims {
  int d_model = 32;
  int n_heads = 4;
  int d_ff = 64;
  int classes = kDefaultClasses;
  /// Extra factor on the refinement head at init. Untrained weights move
  /// primitives at random, so the pipelines keep this small.
  double refine_gain = 1e-3;
  /// Extra factor on W_o, W_2 and b_2. Without normalization the residual
  /// stream of untrained weights grows geometrically with depth, and memory
  /// features pass through every block again on each revisit.
  double residual_gain = 0.1;

  int refine_width() const { return 3 + 3 + 4 + 1 + (classes - 1); }
  void validate() const;
};

struct EncoderWeights {
  EncoderDims dims;
  std::uint64_t seed = 0;
  Eigen::MatrixXd wq, wk, wv, wo;  // d x d
  Eigen::MatrixXd ffn_w1;          // d x d_ff
  Eigen::RowVectorXd ffn_b1;       // d_ff
  Eigen::MatrixXd ffn_w2;          // d_ff x d
  Eigen::RowVectorXd ffn_b2;       // d
  Eigen::MatrixXd refine_w;        // d x refine_width
  Eigen::RowVectorXd refine_b;     // refine_width

  bool operator==(const EncoderWeights& o) const;
};

/// Entries are (2u - 1) / sqrt(d_model), u = (mt19937_64() >> 11) * 2^-53,
/// drawn in the order wq, wk, wv, wo, ffn_w1, ffn_b1, ffn_w2, ffn_b2,
/// refine_w, refine_b (row-major), rounded to float precision so that `.wts`
/// files replay exactly. The residual branch outputs are further scaled by
/// residual_gain and the refinement head by refine_gain.
EncoderWeights init_weights(const EncoderDims& dims, std::uint64_t seed);
EncoderWeights init_weights(int d_model, int n_heads, int d_ff, int classes, std::uint64_t seed);

/// FNV-1a 64 over the f32 bytes of every matrix in init order.
std::uint64_t weights_checksum(const EncoderWeights& w);

void write_weights(std::ostream& os, const EncoderWeights& w);
EncoderWeights read_weights(std::istream& is);
void save_weights(const std::filesystem::path& path, const EncoderWeights& w);
EncoderWeights load_weights(const std::filesystem::path& path);

/// Per head softmax(Q_h K_h^T / sqrt(d / n_heads)) V_h, heads concatenated.
Eigen::MatrixXd mha(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v, int n_heads);

Eigen::MatrixXd cca(const PrimitiveBatch& query, const PrimitiveBatch& keyval, const EncoderWeights& w);

/// Applies one refinement delta (dmu, dlog s, dq, dlogit a, dc). Zero blocks of
/// the delta leave the corresponding attributes bitwise unchanged.
GaussianPrimitive apply_refinement(const GaussianPrimitive& g, const Eigen::RowVectorXd& delta);

/// x + CCA, then + FFN, then refinement deltas; confidences are recomputed
/// from the refined primitives.
PrimitiveBatch temporal_encoder_block(const PrimitiveBatch& query, const PrimitiveBatch& keyval,
                                      const EncoderWeights& w, const ConfidenceConfig& conf = {});

/// Two weight-sharing streams: current attends to history and history to
/// current, block by block. With an empty history the current batch refines
/// itself (self-attention) and the history output stays empty.
std::pair<PrimitiveBatch, PrimitiveBatch> dte_step(const PrimitiveBatch& current, const PrimitiveBatch& history,
                                                   const EncoderWeights& w, int n_blocks,
                                                   const ConfidenceConfig& conf = {});

}  // namespace gsmem
