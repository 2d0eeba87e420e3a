#pragma once

// Stage-1 generator: gated residual fusion of image/text embeddings, sequence
// expansion with sinusoidal positions, a stacked bidirectional LSTM and a tanh
// output projection producing a T x F Mel-spectrogram. Forward and backward
// passes are written out by hand and checked against finite differences.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "art2music/melspec.hpp"

namespace art2music::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using mel::MelSpectrogram;

struct ModelDims {
  std::uint32_t input_dim = 1024;         // d_x: concatenated image + text embedding
  std::uint32_t fused_dim = 512;          // d_h
  std::uint32_t residual_dim = 512;       // d_r: text embedding
  std::uint32_t decoder_input_dim = 512;  // d_in
  std::uint32_t hidden = 512;             // per direction
  std::uint32_t layers = 4;
  std::uint32_t frames = 896;             // T
  std::uint32_t mel_bands = 80;           // F

  bool has_residual_projection() const { return residual_dim != fused_dim; }
  void validate() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// ---------------------------------------------------------------------------
// Gated residual fusion

struct FusionParams {
  Matrix gate;                          // d_h x (d_x + d_h)
  Matrix projection;                    // d_h x d_x
  std::optional<Matrix> residual_proj;  // d_h x d_r, only when d_r != d_h
};

struct FusionInput {
  Vector x;  // image and text embeddings, concatenated
  Vector r;  // text embedding (residual path)
};

FusionInput make_fusion_input(std::span<const float> image, std::span<const float> text);

/// h = g * (W_x x) + (1 - g) * r~, with g = sigmoid(W_g [x; r~]) and r~ = W_r r (or r).
Vector gated_fuse(const FusionParams& params, const FusionInput& input);

struct FusionGrads {
  Matrix gate;
  Matrix projection;
  std::optional<Matrix> residual_proj;
  Vector x;
  Vector r;
};

FusionGrads gated_fuse_grad(const FusionParams& params, const FusionInput& input, const Vector& upstream);

// ---------------------------------------------------------------------------
// Bidirectional LSTM

/// Gate blocks are stacked in the order i, f, g, o (each `hidden` rows).
struct LstmDirection {
  Matrix w_ih;  // 4H x in
  Matrix w_hh;  // 4H x H
  Vector bias;  // 4H
};

struct LstmLayer {
  LstmDirection forward;
  LstmDirection backward;
};

/// Activations kept for back-propagation through one direction.
struct DirectionTrace {
  Matrix gates;  // T x 4H, post-activation
  Matrix cell;   // T x H
  Matrix hidden; // T x H
};

struct LayerTrace {
  Matrix input;  // T x in
  DirectionTrace forward;
  DirectionTrace backward;
};

/// Runs one direction. When `reverse` is set the sequence is consumed from the last row to
/// the first; the returned rows stay aligned with input time.
Matrix lstm_direction_forward(const LstmDirection& dir, const Matrix& input, bool reverse,
                              DirectionTrace* trace = nullptr);

/// T x 2H: forward hidden states in the first H columns, backward ones in the last H.
Matrix lstm_layer_forward(const LstmLayer& layer, const Matrix& input, LayerTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Decoder and full model

struct DecoderParams {
  Matrix in_proj;    // d_in x d_h
  Vector in_bias;    // d_in
  std::vector<LstmLayer> layers;
  Matrix out_proj;   // F x 2H
  Vector out_bias;   // F
  Matrix positions;  // T x d_in, fixed sinusoidal table (not learned)
};

struct ModelParams {
  ModelDims dims;
  FusionParams fusion;
  DecoderParams decoder;
};

/// Standard sinusoidal table: even columns sin(t / 10000^(2i/d)), odd columns cos(...).
Matrix positional_table(int frames, int dim);

/// Row t = in_proj * h + in_bias + positions[t].
Matrix expand_sequence(const Vector& fused, const DecoderParams& decoder);

/// Deterministic initialisation: weights uniform(-k, k) with k = 1/sqrt(hidden) for LSTM
/// tensors and 1/sqrt(fan_in) elsewhere; LSTM biases zero except the forget gate (1.0).
/// Values are rounded to float32 so that saved models reload bit-identically.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

struct ForwardTrace {
  Vector fused;
  std::vector<LayerTrace> layers;
  Matrix top;     // T x 2H, output of the last LSTM layer
  Matrix output;  // T x F, post-tanh
};

/// T x F prediction in (-1, 1).
Matrix forward(const ModelParams& params, const FusionInput& input, ForwardTrace* trace = nullptr);

MelSpectrogram decode_mel(const ModelParams& params, const FusionInput& input);

struct ModelGrads {
  ModelParams params;  // same layout as the model; positions unused
  Vector x;
  Vector r;
};

/// Gradients of a scalar loss given dLoss/dOutput (T x F).
ModelGrads backward(const ModelParams& params, const FusionInput& input, const ForwardTrace& trace,
                    const Matrix& d_output);

ModelParams zeros_like(const ModelParams& params);

/// Visits learnable tensors in serialisation order: fusion (gate, projection, residual
/// projection), then each layer's forward and backward (w_ih, w_hh, bias), then the
/// input projection (weights, bias) and output projection (weights, bias).
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn(p.fusion.gate);
  fn(p.fusion.projection);
  if (p.fusion.residual_proj) fn(*p.fusion.residual_proj);
  for (auto& layer : p.decoder.layers) {
    for (auto* dir : {&layer.forward, &layer.backward}) {
      fn(dir->w_ih);
      fn(dir->w_hh);
      fn(dir->bias);
    }
  }
  fn(p.decoder.in_proj);
  fn(p.decoder.in_bias);
  fn(p.decoder.out_proj);
  fn(p.decoder.out_bias);
}

std::size_t parameter_count(const ModelParams& params);

// ---------------------------------------------------------------------------
// Frequency-weighted L1 loss

struct LossWeights {
  std::vector<double> w;

  /// w_f = 1.0 + 0.5 * (f - 1) / (F - 1) for f = 1..F.
  static LossWeights ramp(int bands);
  static LossWeights uniform(int bands);
};

double freq_weighted_l1(const Matrix& pred, const Matrix& target, const LossWeights& weights);
double freq_weighted_l1(const MelSpectrogram& pred, const MelSpectrogram& target, const LossWeights& weights);

/// Subgradient w.r.t. pred: w_f * sign(pred - target) / (T F), sign(0) = 0.
Matrix freq_weighted_l1_grad(const Matrix& pred, const Matrix& target, const LossWeights& weights);
Matrix freq_weighted_l1_grad(const MelSpectrogram& pred, const MelSpectrogram& target,
                             const LossWeights& weights);

// ---------------------------------------------------------------------------
// Training

struct Sample {
  FusionInput input;
  Matrix target;  // T x F, values in [-1, 1]
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimiser steps taken so far
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> trace;
  std::size_t selected_epoch = 0;
};

/// Mini-batch Adam. Batches are drawn from a seeded shuffle each epoch; the training loss
/// reported per epoch is the mean of the per-sample losses seen during that epoch (before
/// each update). When `validation` is non-empty the parameters of the epoch with the lowest
/// validation loss are returned, otherwise those after the last epoch.
TrainResult train(const ModelParams& init, std::span<const Sample> training, std::span<const Sample> validation,
                  const TrainConfig& config, const LossWeights& weights);

double dataset_loss(const ModelParams& params, std::span<const Sample> samples, const LossWeights& weights);

// ---------------------------------------------------------------------------
// A2MP v1 parameter files. Tensors are stored as float32.

std::vector<std::uint8_t> save_params(const ModelParams& params);
ModelParams load_params(std::span<const std::uint8_t> bytes);
/// As above, but rejects a stream whose header dims differ from `expected`.
ModelParams load_params(std::span<const std::uint8_t> bytes, const ModelDims& expected);

void save_params_file(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params_file(const std::filesystem::path& path);

}  // namespace art2music::nn
