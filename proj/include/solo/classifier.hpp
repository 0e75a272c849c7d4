#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "solo/embeddings.hpp"
#include "solo/rng.hpp"

namespace solo {

struct ClassifierArch {
  std::size_t input_dim = 64;
  std::size_t hidden = 512;
  std::size_t mlp_hidden = 512;
  double dropout_rate = 0.5;

  void validate() const;  // raises on bad dims or dropout outside [0,1)
};

// One direction's gate parameters. Gate order everywhere in this module:
// input, forget, cell candidate, output.
struct LstmDirection {
  std::vector<double> w[4];  // hidden x input_dim, row-major
  std::vector<double> u[4];  // hidden x hidden, row-major
  std::vector<double> b[4];  // hidden
};

// Named view over one parameter tensor; `decay` marks tensors that receive
// decoupled weight decay (weight matrices yes, biases no).
struct TensorView {
  const char* name;
  std::vector<double>* data;
  std::size_t rows;
  std::size_t cols;
  bool decay;
};

struct ConstTensorView {
  const char* name;
  const std::vector<double>* data;
  std::size_t rows;
  std::size_t cols;
  bool decay;
};

struct ClassifierParams {
  ClassifierArch arch;
  LstmDirection fwd, bwd;
  std::vector<double> mlp_w1;  // mlp_hidden x 2*hidden
  std::vector<double> mlp_b1;  // mlp_hidden
  std::vector<double> mlp_w2;  // 1 x mlp_hidden
  std::vector<double> mlp_b2;  // 1

  static ClassifierParams zeros(const ClassifierArch& arch);
  // Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero except the
  // forget-gate bias which starts at +1.
  static ClassifierParams init(const ClassifierArch& arch, RngStream& rng);

  // Fixed tensor order shared by the optimizer and the checkpoint payload:
  // fwd w_i,w_f,w_g,w_o, u_i..u_o, b_i..b_o; bwd likewise; then
  // mlp_w1, mlp_b1, mlp_w2, mlp_b2.
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
};

// Post-activation state of one direction, rows in consumption order
// (the backward direction's row s corresponds to original frame T-1-s).
struct DirectionTrace {
  std::vector<double> gate[4];  // T x hidden each: i, f, g, o
  std::vector<double> c;        // T x hidden
  std::vector<double> h;        // T x hidden
};

struct ForwardTrace {
  DirectionTrace fwd, bwd;
  std::vector<double> feature;  // 2*hidden: fwd final state, bwd final state
  std::vector<double> pre1;     // mlp_hidden, pre-ReLU
  std::vector<double> act1;     // mlp_hidden, post ReLU and dropout
  std::vector<double> mask;     // per-unit dropout scale (all 1 in eval mode)
  double logit = 0.0;
  double prob = 0.5;
};

// Hidden-state rows in consumption order; when `reversed`, the sequence is
// consumed from its last frame to its first. Optionally fills `trace`.
std::vector<double> lstm_direction_forward(const LstmDirection& dir,
                                           const ClassifierArch& arch,
                                           const EmbeddingSequence& seq,
                                           bool reversed,
                                           DirectionTrace* trace = nullptr);

// Full forward pass. In training mode a fresh inverted-dropout mask is drawn
// from `rng`; in eval mode the mask is the identity and `rng` may be null.
double forward(const ClassifierParams& params, const EmbeddingSequence& seq,
               ForwardTrace& trace, bool training, RngStream* rng);

// Same pass with a caller-supplied mask (per-unit inverted-dropout scales);
// lets gradient checks replay the exact function that was differentiated.
double forward_masked(const ClassifierParams& params,
                      const EmbeddingSequence& seq,
                      const std::vector<double>& mask, ForwardTrace& trace);

double forward_eval(const ClassifierParams& params,
                    const EmbeddingSequence& seq);

// -(y ln p + (1-y) ln(1-p)) with p clamped to [1e-7, 1-1e-7].
double bce_loss(double p, int y);

// Accumulates (+=) the exact gradient of bce_loss(forward(seq), y) into
// `grads`, which must be shaped like `params` (see ClassifierParams::zeros).
// The stored dropout mask is part of the differentiated function.
void backward(const ClassifierParams& params, const EmbeddingSequence& seq,
              const ForwardTrace& trace, int y, ClassifierParams& grads);

struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct Checkpoint {
  ClassifierParams params;
  CheckpointMeta meta;
};

// Layout: magic "SOLOCKPT", u32 header length, JSON header (arch, epoch,
// metrics, seed, tensor order), then each tensor as float32 little-endian in
// the fixed order above.
void save_checkpoint(const ClassifierParams& params, const CheckpointMeta& meta,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace solo
