#include "art2music/melspec.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "art2music/binary_io.hpp"
#include "art2music/error.hpp"
#include "fft.hpp"

namespace art2music::mel {

namespace {

using Complex = std::complex<double>;
using ComplexFrames = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> hann_window(int n) {
  // Periodic Hann, matching the usual STFT convention.
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

std::size_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t j = i % period;
  if (j < 0) j += period;
  if (j >= n) j = period - j;
  return static_cast<std::size_t>(j);
}

int frame_count(std::size_t n, int hop) { return 1 + static_cast<int>(n / static_cast<std::size_t>(hop)); }

ComplexFrames stft(std::span<const double> signal, int n_fft, int hop, const std::vector<double>& window) {
  const auto n = static_cast<std::int64_t>(signal.size());
  const int frames = frame_count(signal.size(), hop);
  const int pad = n_fft / 2;
  detail::RealFft fft(n_fft);
  ComplexFrames out(frames, fft.bins());
  std::vector<double> frame(n_fft);
  for (int t = 0; t < frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * hop - pad;
    for (int k = 0; k < n_fft; ++k) frame[k] = signal[reflect_index(start + k, n)] * window[k];
    fft.forward(frame.data(), out.row(t).data());
  }
  return out;
}

std::vector<double> istft(const ComplexFrames& spec, int n_fft, int hop, const std::vector<double>& window,
                          std::size_t length) {
  const auto frames = static_cast<std::size_t>(spec.rows());
  const std::size_t full = n_fft + hop * (frames - 1);
  std::vector<double> acc(full, 0.0);
  std::vector<double> norm(full, 0.0);
  detail::RealFft fft(n_fft);
  std::vector<double> frame(n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    fft.inverse(spec.row(static_cast<Eigen::Index>(t)).data(), frame.data());
    const std::size_t offset = t * hop;
    for (int k = 0; k < n_fft; ++k) {
      acc[offset + k] += frame[k] * window[k];
      norm[offset + k] += window[k] * window[k];
    }
  }
  std::vector<double> out(length, 0.0);
  const std::size_t pad = n_fft / 2;
  for (std::size_t i = 0; i < length && pad + i < full; ++i) {
    const double w = norm[pad + i];
    out[i] = w > 1e-10 ? acc[pad + i] / w : 0.0;
  }
  return out;
}

std::vector<double> to_double(const audio::AudioBuffer& buffer) {
  return {buffer.samples.begin(), buffer.samples.end()};
}

}  // namespace

const char* to_string(Normalization n) { return n == Normalization::raw_db ? "raw_db" : "minmax_unit"; }

void MelConfig::validate() const {
  if (sample_rate_hz <= 0) throw InvalidArgument("sample_rate_hz must be positive");
  if (fft_size < 2) throw InvalidArgument("fft_size must be at least 2");
  if (hop_length < 1 || hop_length > fft_size) throw InvalidArgument("hop_length must lie in [1, fft_size]");
  if (n_mels < 1) throw InvalidArgument("n_mels must be >= 1");
  if (target_frames < 1) throw InvalidArgument("target_frames must be >= 1");
  const double fmax = effective_fmax();
  if (fmin_hz < 0.0 || !(fmin_hz < fmax) || fmax > sample_rate_hz / 2.0) {
    throw InvalidArgument("need 0 <= fmin < fmax <= sample_rate/2");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {
std::vector<double> mel_edges(const MelConfig& config) {
  const double lo = hz_to_mel(config.fmin_hz);
  const double hi = hz_to_mel(config.effective_fmax());
  std::vector<double> edges(config.n_mels + 2);
  for (int i = 0; i < config.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (config.n_mels + 1));
  }
  return edges;
}
}  // namespace

std::vector<double> mel_center_frequencies(const MelConfig& config) {
  config.validate();
  auto edges = mel_edges(config);
  return {edges.begin() + 1, edges.end() - 1};
}

Eigen::MatrixXd mel_filterbank(const MelConfig& config) {
  config.validate();
  const auto edges = mel_edges(config);
  const int bins = config.n_bins();
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(config.n_mels, bins);
  for (int m = 0; m < config.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    const double enorm = 2.0 / (right - left);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate_hz / config.fft_size;
      const double lower = (f - left) / (center - left);
      const double upper = (right - f) / (right - center);
      fb(m, k) = std::max(0.0, std::min(lower, upper)) * enorm;
    }
    if (fb.row(m).maxCoeff() <= 0.0) {
      throw InvalidArgument("n_mels=" + std::to_string(config.n_mels) + " is too large for fft_size=" +
                            std::to_string(config.fft_size) + ": mel filter " + std::to_string(m) +
                            " covers no FFT bin");
    }
  }
  return fb;
}

Eigen::MatrixXd stft_power(const audio::AudioBuffer& buffer, const MelConfig& config) {
  config.validate();
  if (buffer.sample_rate_hz != config.sample_rate_hz) {
    throw InvalidArgument("sample-rate mismatch: buffer is " + std::to_string(buffer.sample_rate_hz) +
                          " Hz, config expects " + std::to_string(config.sample_rate_hz) + " Hz");
  }
  if (buffer.empty()) throw InvalidArgument("audio buffer must hold at least one sample");
  const auto signal = to_double(buffer);
  const ComplexFrames spec = stft(signal, config.fft_size, config.hop_length, hann_window(config.fft_size));
  return spec.cwiseAbs2();
}

MelSpectrogram mel_spectrogram(const audio::AudioBuffer& buffer, const MelConfig& config) {
  return mel_spectrogram(buffer, config, mel_filterbank(config));
}

MelSpectrogram mel_spectrogram(const audio::AudioBuffer& buffer, const MelConfig& config,
                               const Eigen::MatrixXd& filterbank) {
  const Eigen::MatrixXd power = stft_power(buffer, config);
  if (filterbank.rows() != config.n_mels || filterbank.cols() != power.cols()) {
    throw DimensionError("filterbank shape does not match config");
  }
  Eigen::MatrixXd db = (power * filterbank.transpose()).unaryExpr([](double p) {
    return 10.0 * std::log10(std::max(p, kPowerFloor));
  });
  const double floor = db.maxCoeff() - kTopDb;
  MelSpectrogram out;
  out.config = config;
  out.normalization = Normalization::raw_db;
  out.values = db.unaryExpr([floor](double v) { return std::max(v, floor); }).cast<float>();
  return out;
}

MelSpectrogram normalize_unit(const MelSpectrogram& spec) {
  MelSpectrogram out = spec;
  out.normalization = Normalization::minmax_unit;
  if (spec.values.size() == 0) return out;
  if (!spec.values.allFinite()) throw InvalidArgument("spectrogram holds non-finite values");
  const double lo = spec.values.minCoeff();
  const double hi = spec.values.maxCoeff();
  if (hi == lo) {
    out.values.setConstant(-1.0f);
    return out;
  }
  const double scale = 2.0 / (hi - lo);
  out.values = spec.values.unaryExpr([&](float v) {
    return static_cast<float>(std::clamp((static_cast<double>(v) - lo) * scale - 1.0, -1.0, 1.0));
  });
  return out;
}

MelSpectrogram denormalize_unit(const MelSpectrogram& spec, double min_db, double max_db) {
  if (spec.normalization == Normalization::raw_db) return spec;
  MelSpectrogram out = spec;
  out.normalization = Normalization::raw_db;
  out.values = spec.values.unaryExpr([&](float v) {
    return static_cast<float>(min_db + (static_cast<double>(v) + 1.0) * 0.5 * (max_db - min_db));
  });
  return out;
}

MelSpectrogram fix_length(const MelSpectrogram& spec, int target_frames) {
  if (target_frames < 1) throw InvalidArgument("target_frames must be >= 1");
  MelSpectrogram out;
  out.config = spec.config;
  out.config.target_frames = target_frames;
  out.normalization = spec.normalization;
  out.values = RowMatrixF::Zero(target_frames, spec.values.cols());
  const int keep = std::min(target_frames, spec.frames());
  out.values.topRows(keep) = spec.values.topRows(keep);
  return out;
}

audio::AudioBuffer griffin_lim_invert(const MelSpectrogram& input, int iterations) {
  if (iterations < 1) throw InvalidArgument("griffin_lim_invert needs at least one iteration");
  const MelSpectrogram spec = denormalize_unit(input);
  MelConfig config = spec.config;
  config.n_mels = spec.bands();
  config.validate();

  const Eigen::MatrixXd fb = mel_filterbank(config);
  const Eigen::MatrixXd pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::MatrixXd mel_power =
      spec.values.cast<double>().unaryExpr([](double db) { return std::pow(10.0, db / 10.0); });
  const Eigen::MatrixXd magnitude = (mel_power * pinv.transpose()).cwiseMax(0.0).cwiseSqrt();

  const int frames = spec.frames();
  const int n_fft = config.fft_size;
  const int hop = config.hop_length;
  const std::size_t length = static_cast<std::size_t>(std::max(frames - 1, 1)) * hop;
  const auto window = hann_window(n_fft);

  std::mt19937_64 rng(0x6a09e667f3bcc909ULL);
  ComplexFrames estimate(frames, magnitude.cols());
  for (int t = 0; t < frames; ++t) {
    for (Eigen::Index k = 0; k < magnitude.cols(); ++k) {
      const double phase = 2.0 * std::numbers::pi * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
      estimate(t, k) = std::polar(magnitude(t, k), phase);
    }
  }

  std::vector<double> signal;
  for (int it = 0; it < iterations; ++it) {
    signal = istft(estimate, n_fft, hop, window, length);
    const ComplexFrames rebuilt = stft(signal, n_fft, hop, window);
    for (int t = 0; t < frames; ++t) {
      for (Eigen::Index k = 0; k < magnitude.cols(); ++k) {
        const Complex z = t < rebuilt.rows() ? rebuilt(t, k) : Complex{};
        const double a = std::abs(z);
        estimate(t, k) = a > 0.0 ? magnitude(t, k) * (z / a) : Complex{magnitude(t, k), 0.0};
      }
    }
  }
  signal = istft(estimate, n_fft, hop, window, length);

  audio::AudioBuffer out;
  out.sample_rate_hz = config.sample_rate_hz;
  out.samples.resize(signal.size());
  std::transform(signal.begin(), signal.end(), out.samples.begin(),
                 [](double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); });
  return out;
}

namespace {
constexpr std::uint8_t kMelsVersion = 1;
}

std::vector<std::uint8_t> encode_mels(const MelSpectrogram& spec) {
  ByteWriter w;
  w.raw("MELS");
  w.u8(kMelsVersion);
  w.u32(static_cast<std::uint32_t>(spec.frames()));
  w.u32(static_cast<std::uint32_t>(spec.bands()));
  w.u8(static_cast<std::uint8_t>(spec.normalization));
  w.bytes().reserve(w.bytes().size() + 4 * static_cast<std::size_t>(spec.values.size()));
  for (Eigen::Index t = 0; t < spec.values.rows(); ++t) {
    for (Eigen::Index f = 0; f < spec.values.cols(); ++f) w.f32(spec.values(t, f));
  }
  return w.take();
}

MelSpectrogram decode_mels(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "MELS") throw FormatError("not a MELS stream (bad magic)");
  const std::uint8_t version = r.u8();
  if (version != kMelsVersion) throw FormatError("unsupported MELS version " + std::to_string(version));
  const std::uint32_t frames = r.u32();
  const std::uint32_t bands = r.u32();
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw FormatError("unknown MELS normalization tag " + std::to_string(tag));
  if (frames == 0 || bands == 0) throw FormatError("MELS stream declares an empty matrix");

  MelSpectrogram spec;
  spec.normalization = static_cast<Normalization>(tag);
  spec.config.n_mels = static_cast<int>(bands);
  spec.config.target_frames = static_cast<int>(frames);
  spec.values.resize(frames, bands);
  for (std::uint32_t t = 0; t < frames; ++t) {
    for (std::uint32_t f = 0; f < bands; ++f) spec.values(t, f) = r.f32();
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after MELS payload");
  return spec;
}

void save_mels(const MelSpectrogram& spec, const std::filesystem::path& path) {
  write_file_bytes(path, encode_mels(spec));
}

MelSpectrogram load_mels(const std::filesystem::path& path) {
  try {
    return decode_mels(read_file_bytes(path));
  } catch (const TruncatedError&) {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace art2music::mel
