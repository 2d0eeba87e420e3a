#include "art2music/neuralnet.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "art2music/binary_io.hpp"
#include "art2music/error.hpp"

namespace art2music::nn {

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

Vector sigmoid(const Vector& a) { return a.unaryExpr([](double v) { return sigmoid(v); }); }

void check_dim(const char* what, Eigen::Index expected, Eigen::Index actual) {
  if (expected != actual) {
    throw DimensionError(dimension_message(what, static_cast<std::size_t>(expected),
                                           static_cast<std::size_t>(actual)));
  }
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : rng_(seed) {}
  // Uniform on [-k, k), independent of the standard library's distribution implementation.
  double operator()(double k) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return round_to_float((2.0 * u - 1.0) * k);
  }
  std::uint64_t bits() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

template <class T>
void fill_uniform(T& tensor, UniformSource& src, double k) {
  for (Eigen::Index i = 0; i < tensor.size(); ++i) tensor.data()[i] = src(k);
}

}  // namespace

void ModelDims::validate() const {
  if (input_dim == 0 || fused_dim == 0 || residual_dim == 0 || decoder_input_dim == 0 || hidden == 0 ||
      layers == 0 || frames == 0 || mel_bands == 0) {
    throw InvalidArgument("model dimensions must all be positive");
  }
}

FusionInput make_fusion_input(std::span<const float> image, std::span<const float> text) {
  FusionInput in;
  in.x.resize(static_cast<Eigen::Index>(image.size() + text.size()));
  for (std::size_t i = 0; i < image.size(); ++i) in.x[static_cast<Eigen::Index>(i)] = image[i];
  for (std::size_t i = 0; i < text.size(); ++i) in.x[static_cast<Eigen::Index>(image.size() + i)] = text[i];
  in.r.resize(static_cast<Eigen::Index>(text.size()));
  for (std::size_t i = 0; i < text.size(); ++i) in.r[static_cast<Eigen::Index>(i)] = text[i];
  return in;
}

// ---------------------------------------------------------------------------
// Fusion

namespace {

struct FusionForward {
  Vector r_tilde;
  Vector joint;  // [x; r~]
  Vector gate;
  Vector projected;
  Vector out;
};

FusionForward fusion_forward(const FusionParams& p, const FusionInput& in) {
  const Eigen::Index d_h = p.projection.rows();
  check_dim("fusion input x", p.projection.cols(), in.x.size());
  if (p.residual_proj) {
    check_dim("fusion residual r", p.residual_proj->cols(), in.r.size());
    check_dim("residual projection rows", d_h, p.residual_proj->rows());
  } else {
    check_dim("fusion residual r (no residual projection)", d_h, in.r.size());
  }
  check_dim("gate rows", d_h, p.gate.rows());
  check_dim("gate columns", in.x.size() + d_h, p.gate.cols());

  FusionForward f;
  f.r_tilde = p.residual_proj ? Vector(*p.residual_proj * in.r) : in.r;
  f.joint.resize(in.x.size() + d_h);
  f.joint << in.x, f.r_tilde;
  f.gate = sigmoid(p.gate * f.joint);
  f.projected = p.projection * in.x;
  f.out = f.gate.cwiseProduct(f.projected) + (Vector::Ones(d_h) - f.gate).cwiseProduct(f.r_tilde);
  return f;
}

}  // namespace

Vector gated_fuse(const FusionParams& params, const FusionInput& input) {
  return fusion_forward(params, input).out;
}

FusionGrads gated_fuse_grad(const FusionParams& params, const FusionInput& input, const Vector& upstream) {
  const FusionForward f = fusion_forward(params, input);
  check_dim("fusion upstream gradient", f.out.size(), upstream.size());
  const Eigen::Index d_x = input.x.size();
  const Eigen::Index d_h = f.out.size();

  const Vector d_gate = upstream.cwiseProduct(f.projected - f.r_tilde);
  const Vector d_pre = d_gate.cwiseProduct(f.gate).cwiseProduct(Vector::Ones(d_h) - f.gate);
  const Vector d_joint = params.gate.transpose() * d_pre;
  const Vector d_projected = upstream.cwiseProduct(f.gate);
  const Vector d_r_tilde = upstream.cwiseProduct(Vector::Ones(d_h) - f.gate) + d_joint.tail(d_h);

  FusionGrads g;
  g.gate = d_pre * f.joint.transpose();
  g.projection = d_projected * input.x.transpose();
  g.x = params.projection.transpose() * d_projected + d_joint.head(d_x);
  if (params.residual_proj) {
    g.residual_proj = d_r_tilde * input.r.transpose();
    g.r = params.residual_proj->transpose() * d_r_tilde;
  } else {
    g.r = d_r_tilde;
  }
  return g;
}

// ---------------------------------------------------------------------------
// LSTM

Matrix lstm_direction_forward(const LstmDirection& dir, const Matrix& input, bool reverse, DirectionTrace* trace) {
  const Eigen::Index hidden = dir.w_hh.cols();
  const Eigen::Index steps = input.rows();
  check_dim("lstm input width", dir.w_ih.cols(), input.cols());
  check_dim("lstm gate rows", 4 * hidden, dir.w_ih.rows());

  Matrix pre = input * dir.w_ih.transpose();
  pre.rowwise() += dir.bias.transpose();

  Matrix out(steps, hidden);
  if (trace) {
    trace->gates.resize(steps, 4 * hidden);
    trace->cell.resize(steps, hidden);
    trace->hidden.resize(steps, hidden);
  }
  Vector h = Vector::Zero(hidden);
  Vector c = Vector::Zero(hidden);
  Vector a(4 * hidden);
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index t = reverse ? steps - 1 - s : s;
    a.noalias() = dir.w_hh * h;
    a += pre.row(t).transpose();
    const Vector i = sigmoid(a.segment(0, hidden));
    const Vector f = sigmoid(a.segment(hidden, hidden));
    const Vector g = a.segment(2 * hidden, hidden).array().tanh().matrix();
    const Vector o = sigmoid(a.segment(3 * hidden, hidden));
    c = f.cwiseProduct(c) + i.cwiseProduct(g);
    h = o.cwiseProduct(c.array().tanh().matrix());
    out.row(t) = h.transpose();
    if (trace) {
      trace->gates.row(t) << i.transpose(), f.transpose(), g.transpose(), o.transpose();
      trace->cell.row(t) = c.transpose();
      trace->hidden.row(t) = h.transpose();
    }
  }
  return out;
}

Matrix lstm_layer_forward(const LstmLayer& layer, const Matrix& input, LayerTrace* trace) {
  const Eigen::Index hidden = layer.forward.w_hh.cols();
  check_dim("backward direction hidden size", hidden, layer.backward.w_hh.cols());
  Matrix out(input.rows(), 2 * hidden);
  out.leftCols(hidden) = lstm_direction_forward(layer.forward, input, false, trace ? &trace->forward : nullptr);
  out.rightCols(hidden) =
      lstm_direction_forward(layer.backward, input, true, trace ? &trace->backward : nullptr);
  if (trace) trace->input = input;
  return out;
}

namespace {

// Accumulates parameter gradients into `grad` and returns dLoss/dInput.
Matrix lstm_direction_backward(const LstmDirection& dir, const Matrix& input, const DirectionTrace& tr,
                               const Matrix& d_hidden, bool reverse, LstmDirection& grad) {
  const Eigen::Index hidden = dir.w_hh.cols();
  const Eigen::Index steps = input.rows();
  Matrix d_pre(steps, 4 * hidden);
  Matrix h_prev_rows = Matrix::Zero(steps, hidden);
  Vector dh_next = Vector::Zero(hidden);
  Vector dc_next = Vector::Zero(hidden);
  const Vector ones = Vector::Ones(hidden);

  for (Eigen::Index s = steps - 1; s >= 0; --s) {
    const Eigen::Index t = reverse ? steps - 1 - s : s;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const bool has_prev = s > 0;

    const Vector i = tr.gates.row(t).segment(0, hidden).transpose();
    const Vector f = tr.gates.row(t).segment(hidden, hidden).transpose();
    const Vector g = tr.gates.row(t).segment(2 * hidden, hidden).transpose();
    const Vector o = tr.gates.row(t).segment(3 * hidden, hidden).transpose();
    const Vector c_prev = has_prev ? Vector(tr.cell.row(prev).transpose()) : Vector::Zero(hidden);
    const Vector tc = tr.cell.row(t).transpose().array().tanh().matrix();
    if (has_prev) h_prev_rows.row(t) = tr.hidden.row(prev);

    const Vector dh = d_hidden.row(t).transpose() + dh_next;
    const Vector dc = dh.cwiseProduct(o).cwiseProduct(ones - tc.cwiseProduct(tc)) + dc_next;
    const Vector d_o = dh.cwiseProduct(tc);
    const Vector d_i = dc.cwiseProduct(g);
    const Vector d_f = dc.cwiseProduct(c_prev);
    const Vector d_g = dc.cwiseProduct(i);
    dc_next = dc.cwiseProduct(f);

    Vector dp(4 * hidden);
    dp << d_i.cwiseProduct(i).cwiseProduct(ones - i), d_f.cwiseProduct(f).cwiseProduct(ones - f),
        d_g.cwiseProduct(ones - g.cwiseProduct(g)), d_o.cwiseProduct(o).cwiseProduct(ones - o);
    d_pre.row(t) = dp.transpose();
    dh_next.noalias() = dir.w_hh.transpose() * dp;
  }

  grad.w_ih.noalias() += d_pre.transpose() * input;
  grad.w_hh.noalias() += d_pre.transpose() * h_prev_rows;
  grad.bias += d_pre.colwise().sum().transpose();
  return d_pre * dir.w_ih;
}

Matrix lstm_layer_backward(const LstmLayer& layer, const LayerTrace& trace, const Matrix& d_out, LstmLayer& grad) {
  const Eigen::Index hidden = layer.forward.w_hh.cols();
  Matrix d_in = lstm_direction_backward(layer.forward, trace.input, trace.forward, d_out.leftCols(hidden), false,
                                        grad.forward);
  d_in += lstm_direction_backward(layer.backward, trace.input, trace.backward, d_out.rightCols(hidden), true,
                                  grad.backward);
  return d_in;
}

}  // namespace

// ---------------------------------------------------------------------------
// Decoder

Matrix positional_table(int frames, int dim) {
  Matrix table(frames, dim);
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < dim; ++j) {
      const int pair = j / 2;
      const double angle = t / std::pow(10000.0, (2.0 * pair) / dim);
      table(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

Matrix expand_sequence(const Vector& fused, const DecoderParams& decoder) {
  check_dim("decoder input projection width", decoder.in_proj.cols(), fused.size());
  check_dim("positional table width", decoder.in_proj.rows(), decoder.positions.cols());
  const Vector step = decoder.in_proj * fused + decoder.in_bias;
  Matrix seq = decoder.positions;
  seq.rowwise() += step.transpose();
  return seq;
}

namespace {

LstmDirection make_direction(Eigen::Index in, Eigen::Index hidden) {
  return {Matrix::Zero(4 * hidden, in), Matrix::Zero(4 * hidden, hidden), Vector::Zero(4 * hidden)};
}

ModelParams zero_model(const ModelDims& d) {
  d.validate();
  ModelParams p;
  p.dims = d;
  p.fusion.gate = Matrix::Zero(d.fused_dim, d.input_dim + d.fused_dim);
  p.fusion.projection = Matrix::Zero(d.fused_dim, d.input_dim);
  if (d.has_residual_projection()) p.fusion.residual_proj = Matrix::Zero(d.fused_dim, d.residual_dim);
  p.decoder.in_proj = Matrix::Zero(d.decoder_input_dim, d.fused_dim);
  p.decoder.in_bias = Vector::Zero(d.decoder_input_dim);
  for (std::uint32_t l = 0; l < d.layers; ++l) {
    const Eigen::Index in = l == 0 ? d.decoder_input_dim : 2 * d.hidden;
    p.decoder.layers.push_back({make_direction(in, d.hidden), make_direction(in, d.hidden)});
  }
  p.decoder.out_proj = Matrix::Zero(d.mel_bands, 2 * d.hidden);
  p.decoder.out_bias = Vector::Zero(d.mel_bands);
  p.decoder.positions = positional_table(static_cast<int>(d.frames), static_cast<int>(d.decoder_input_dim));
  return p;
}

}  // namespace

ModelParams zeros_like(const ModelParams& params) { return zero_model(params.dims); }

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = zero_model(dims);
  UniformSource src(seed);
  fill_uniform(p.fusion.gate, src, 1.0 / std::sqrt(static_cast<double>(dims.input_dim + dims.fused_dim)));
  fill_uniform(p.fusion.projection, src, 1.0 / std::sqrt(static_cast<double>(dims.input_dim)));
  if (p.fusion.residual_proj) {
    fill_uniform(*p.fusion.residual_proj, src, 1.0 / std::sqrt(static_cast<double>(dims.residual_dim)));
  }
  const double k_lstm = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  for (auto& layer : p.decoder.layers) {
    for (auto* dir : {&layer.forward, &layer.backward}) {
      fill_uniform(dir->w_ih, src, k_lstm);
      fill_uniform(dir->w_hh, src, k_lstm);
      dir->bias.setZero();
      dir->bias.segment(dims.hidden, dims.hidden).setOnes();
    }
  }
  const double k_in = 1.0 / std::sqrt(static_cast<double>(dims.fused_dim));
  fill_uniform(p.decoder.in_proj, src, k_in);
  fill_uniform(p.decoder.in_bias, src, k_in);
  const double k_out = 1.0 / std::sqrt(2.0 * dims.hidden);
  fill_uniform(p.decoder.out_proj, src, k_out);
  fill_uniform(p.decoder.out_bias, src, k_out);
  return p;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

Matrix forward(const ModelParams& params, const FusionInput& input, ForwardTrace* trace) {
  const ModelDims& d = params.dims;
  check_dim("fusion input x", d.input_dim, input.x.size());
  check_dim("fusion residual r", d.residual_dim, input.r.size());

  Vector fused = gated_fuse(params.fusion, input);
  Matrix seq = expand_sequence(fused, params.decoder);
  if (trace) trace->layers.resize(params.decoder.layers.size());
  for (std::size_t l = 0; l < params.decoder.layers.size(); ++l) {
    seq = lstm_layer_forward(params.decoder.layers[l], seq, trace ? &trace->layers[l] : nullptr);
  }
  Matrix z = seq * params.decoder.out_proj.transpose();
  z.rowwise() += params.decoder.out_bias.transpose();
  Matrix out = z.array().tanh().matrix();
  if (trace) {
    trace->fused = std::move(fused);
    trace->top = std::move(seq);
    trace->output = out;
  }
  return out;
}

MelSpectrogram decode_mel(const ModelParams& params, const FusionInput& input) {
  MelSpectrogram spec;
  spec.normalization = mel::Normalization::minmax_unit;
  spec.config.n_mels = static_cast<int>(params.dims.mel_bands);
  spec.config.target_frames = static_cast<int>(params.dims.frames);
  spec.values = forward(params, input).cast<float>();
  // tanh may round to exactly +-1 in float; keep the open-interval contract.
  const float edge = std::nextafter(1.0f, 0.0f);
  spec.values = spec.values.cwiseMin(edge).cwiseMax(-edge);
  return spec;
}

ModelGrads backward(const ModelParams& params, const FusionInput& input, const ForwardTrace& trace,
                    const Matrix& d_output) {
  check_dim("output gradient rows", trace.output.rows(), d_output.rows());
  check_dim("output gradient cols", trace.output.cols(), d_output.cols());
  ModelGrads g{zeros_like(params), {}, {}};

  const Matrix d_z = d_output.cwiseProduct((1.0 - trace.output.array().square()).matrix());
  g.params.decoder.out_proj.noalias() = d_z.transpose() * trace.top;
  g.params.decoder.out_bias = d_z.colwise().sum().transpose();
  Matrix d_seq = d_z * params.decoder.out_proj;

  for (std::size_t l = params.decoder.layers.size(); l-- > 0;) {
    d_seq = lstm_layer_backward(params.decoder.layers[l], trace.layers[l], d_seq, g.params.decoder.layers[l]);
  }

  const Vector d_step = d_seq.colwise().sum().transpose();
  g.params.decoder.in_proj.noalias() = d_step * trace.fused.transpose();
  g.params.decoder.in_bias = d_step;
  const Vector d_fused = params.decoder.in_proj.transpose() * d_step;

  FusionGrads fg = gated_fuse_grad(params.fusion, input, d_fused);
  g.params.fusion.gate = std::move(fg.gate);
  g.params.fusion.projection = std::move(fg.projection);
  g.params.fusion.residual_proj = std::move(fg.residual_proj);
  g.x = std::move(fg.x);
  g.r = std::move(fg.r);
  return g;
}

// ---------------------------------------------------------------------------
// Loss

LossWeights LossWeights::ramp(int bands) {
  if (bands < 1) throw InvalidArgument("loss weights need at least one band");
  LossWeights lw;
  lw.w.resize(static_cast<std::size_t>(bands));
  for (int f = 1; f <= bands; ++f) {
    lw.w[static_cast<std::size_t>(f - 1)] =
        bands == 1 ? 1.0 : 1.0 + 0.5 * static_cast<double>(f - 1) / static_cast<double>(bands - 1);
  }
  return lw;
}

LossWeights LossWeights::uniform(int bands) {
  if (bands < 1) throw InvalidArgument("loss weights need at least one band");
  return {std::vector<double>(static_cast<std::size_t>(bands), 1.0)};
}

namespace {

void check_loss_shapes(const Matrix& pred, const Matrix& target, const LossWeights& weights) {
  check_dim("loss frames", target.rows(), pred.rows());
  check_dim("loss bands", target.cols(), pred.cols());
  check_dim("loss weight count", pred.cols(), static_cast<Eigen::Index>(weights.w.size()));
  if (pred.size() == 0) throw InvalidArgument("loss over an empty spectrogram");
}

void check_tags(const MelSpectrogram& a, const MelSpectrogram& b) {
  if (a.normalization != b.normalization) {
    throw InvalidArgument(std::string("normalization mismatch: ") + mel::to_string(a.normalization) + " vs " +
                          mel::to_string(b.normalization));
  }
}

}  // namespace

double freq_weighted_l1(const Matrix& pred, const Matrix& target, const LossWeights& weights) {
  check_loss_shapes(pred, target, weights);
  double sum = 0.0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    for (Eigen::Index f = 0; f < pred.cols(); ++f) {
      sum += weights.w[static_cast<std::size_t>(f)] * std::abs(pred(t, f) - target(t, f));
    }
  }
  return sum / static_cast<double>(pred.rows() * pred.cols());
}

double freq_weighted_l1(const MelSpectrogram& pred, const MelSpectrogram& target, const LossWeights& weights) {
  check_tags(pred, target);
  return freq_weighted_l1(Matrix(pred.values.cast<double>()), Matrix(target.values.cast<double>()), weights);
}

Matrix freq_weighted_l1_grad(const Matrix& pred, const Matrix& target, const LossWeights& weights) {
  check_loss_shapes(pred, target, weights);
  const double scale = 1.0 / static_cast<double>(pred.rows() * pred.cols());
  Matrix g(pred.rows(), pred.cols());
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    for (Eigen::Index f = 0; f < pred.cols(); ++f) {
      const double d = pred(t, f) - target(t, f);
      const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      g(t, f) = weights.w[static_cast<std::size_t>(f)] * sign * scale;
    }
  }
  return g;
}

Matrix freq_weighted_l1_grad(const MelSpectrogram& pred, const MelSpectrogram& target,
                             const LossWeights& weights) {
  check_tags(pred, target);
  return freq_weighted_l1_grad(Matrix(pred.values.cast<double>()), Matrix(target.values.cast<double>()), weights);
}

// ---------------------------------------------------------------------------
// Training

namespace {

Vector flatten(const ModelParams& p) {
  Vector flat(static_cast<Eigen::Index>(parameter_count(p)));
  Eigen::Index pos = 0;
  for_each_tensor(p, [&](const auto& t) {
    flat.segment(pos, t.size()) = Eigen::Map<const Vector>(t.data(), t.size());
    pos += t.size();
  });
  return flat;
}

void unflatten(const Vector& flat, ModelParams& p) {
  Eigen::Index pos = 0;
  for_each_tensor(p, [&](auto& t) {
    Eigen::Map<Vector>(t.data(), t.size()) = flat.segment(pos, t.size());
    pos += t.size();
  });
}

void check_sample(const ModelDims& d, const Sample& s) {
  check_dim("sample target frames", d.frames, s.target.rows());
  check_dim("sample target bands", d.mel_bands, s.target.cols());
  check_dim("sample input x", d.input_dim, s.input.x.size());
  check_dim("sample input r", d.residual_dim, s.input.r.size());
}

}  // namespace

double dataset_loss(const ModelParams& params, std::span<const Sample> samples, const LossWeights& weights) {
  if (samples.empty()) throw InvalidArgument("loss over an empty dataset");
  double sum = 0.0;
  for (const Sample& s : samples) sum += freq_weighted_l1(forward(params, s.input), s.target, weights);
  return sum / static_cast<double>(samples.size());
}

TrainResult train(const ModelParams& init, std::span<const Sample> training, std::span<const Sample> validation,
                  const TrainConfig& config, const LossWeights& weights) {
  if (training.empty()) throw InvalidArgument("training set is empty");
  if (config.epochs == 0) throw InvalidArgument("epochs must be >= 1");
  if (config.batch_size == 0) throw InvalidArgument("batch size must be >= 1");
  if (!(config.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be non-negative");
  for (const Sample& s : training) check_sample(init.dims, s);
  for (const Sample& s : validation) check_sample(init.dims, s);

  TrainResult result;
  ModelParams params = init;
  Vector theta = flatten(params);
  Vector m = Vector::Zero(theta.size());
  Vector v = Vector::Zero(theta.size());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(training.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step = 0;
  std::optional<double> best_val;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      ++step;
      Vector grad = Vector::Zero(theta.size());
      // Per-sample gradients are reduced in batch order so results are reproducible.
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = training[order[k]];
        ForwardTrace trace;
        const Matrix out = forward(params, s.input, &trace);
        const double loss = freq_weighted_l1(out, s.target, weights);
        if (!std::isfinite(loss)) throw TrainingError(step, "non-finite training loss");
        epoch_loss += loss;
        const Matrix d_out = freq_weighted_l1_grad(out, s.target, weights) * inv_batch;
        grad += flatten(backward(params, s.input, trace, d_out).params);
      }
      const double t = static_cast<double>(step);
      m = config.beta1 * m + (1.0 - config.beta1) * grad;
      v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
      const double bc1 = 1.0 - std::pow(config.beta1, t);
      const double bc2 = 1.0 - std::pow(config.beta2, t);
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double update = config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.epsilon);
        theta[i] = round_to_float(theta[i] - update);
      }
      unflatten(theta, params);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.steps = step;
    stats.train_loss = epoch_loss / static_cast<double>(training.size());
    if (!validation.empty()) {
      stats.val_loss = dataset_loss(params, validation, weights);
      if (!std::isfinite(*stats.val_loss)) throw TrainingError(step, "non-finite validation loss");
      if (!best_val || *stats.val_loss < *best_val) {
        best_val = stats.val_loss;
        result.params = params;
        result.selected_epoch = epoch;
      }
    }
    result.trace.push_back(stats);
  }
  if (validation.empty()) {
    result.params = std::move(params);
    result.selected_epoch = config.epochs;
  }
  return result;
}

// ---------------------------------------------------------------------------
// A2MP v1

namespace {
constexpr std::uint8_t kParamsVersion = 1;
}

std::vector<std::uint8_t> save_params(const ModelParams& params) {
  const ModelDims& d = params.dims;
  ByteWriter w;
  w.raw("A2MP");
  w.u8(kParamsVersion);
  for (std::uint32_t v : {d.input_dim, d.fused_dim, d.residual_dim, d.decoder_input_dim, d.hidden, d.layers,
                          d.frames, d.mel_bands}) {
    w.u32(v);
  }
  w.bytes().reserve(w.bytes().size() + 4 * parameter_count(params));
  for_each_tensor(params, [&](const auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) w.f32(static_cast<float>(t(r, c)));
    }
  });
  return w.take();
}

ModelParams load_params(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "A2MP") throw FormatError("not an A2MP stream (bad magic)");
  const std::uint8_t version = r.u8();
  if (version != kParamsVersion) throw FormatError("unsupported A2MP version " + std::to_string(version));
  ModelDims d;
  d.input_dim = r.u32();
  d.fused_dim = r.u32();
  d.residual_dim = r.u32();
  d.decoder_input_dim = r.u32();
  d.hidden = r.u32();
  d.layers = r.u32();
  d.frames = r.u32();
  d.mel_bands = r.u32();
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("A2MP header: ") + e.what());
  }
  ModelParams p = zero_model(d);
  for_each_tensor(p, [&](auto& t) {
    for (Eigen::Index row = 0; row < t.rows(); ++row) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(row, c) = r.f32();
    }
  });
  if (r.remaining() != 0) throw FormatError("trailing bytes after A2MP payload");
  return p;
}

ModelParams load_params(std::span<const std::uint8_t> bytes, const ModelDims& expected) {
  ByteReader r(bytes);
  if (r.str(4) != "A2MP") throw FormatError("not an A2MP stream (bad magic)");
  r.skip(1);
  const std::uint32_t header[8] = {r.u32(), r.u32(), r.u32(), r.u32(), r.u32(), r.u32(), r.u32(), r.u32()};
  const std::uint32_t want[8] = {expected.input_dim, expected.fused_dim,  expected.residual_dim,
                                 expected.decoder_input_dim, expected.hidden, expected.layers,
                                 expected.frames, expected.mel_bands};
  static const char* names[8] = {"d_x", "d_h", "d_r", "d_in", "hidden", "layers", "frames", "mel_bands"};
  for (int i = 0; i < 8; ++i) {
    if (header[i] != want[i]) {
      throw DimensionError(dimension_message(std::string("A2MP header ") + names[i], want[i], header[i]));
    }
  }
  return load_params(bytes);
}

void save_params_file(const ModelParams& params, const std::filesystem::path& path) {
  write_file_bytes(path, save_params(params));
}

ModelParams load_params_file(const std::filesystem::path& path) { return load_params(read_file_bytes(path)); }

}  // namespace art2music::nn
