#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "art2music/audio_io.hpp"

namespace art2music::mel {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MelConfig {
  int sample_rate_hz = 22050;
  int fft_size = 1024;
  int hop_length = 256;
  int n_mels = 80;
  int target_frames = 896;
  double fmin_hz = 0.0;
  double fmax_hz = -1.0;  // <= 0 means sample_rate / 2

  double effective_fmax() const { return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0; }
  int n_bins() const { return fft_size / 2 + 1; }
  void validate() const;

  friend bool operator==(const MelConfig&, const MelConfig&) = default;
};

enum class Normalization : std::uint8_t { raw_db = 0, minmax_unit = 1 };

const char* to_string(Normalization n);

/// T x F matrix (rows are frames). Values are dB for raw_db and lie in [-1, 1] for minmax_unit.
struct MelSpectrogram {
  RowMatrixF values;
  MelConfig config;
  Normalization normalization = Normalization::raw_db;

  int frames() const { return static_cast<int>(values.rows()); }
  int bands() const { return static_cast<int>(values.cols()); }
};

/// Dynamic range kept below the per-clip maximum by mel_spectrogram.
inline constexpr double kTopDb = 80.0;
inline constexpr double kPowerFloor = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Centre frequencies (Hz) of the filterbank's triangles, index 0..n_mels-1.
std::vector<double> mel_center_frequencies(const MelConfig& config);

/// frames x (fft_size/2 + 1) magnitude-squared STFT, Hann window, reflect-centred.
Eigen::MatrixXd stft_power(const audio::AudioBuffer& buffer, const MelConfig& config);

/// n_mels x (fft_size/2 + 1) triangular filters with area normalisation.
Eigen::MatrixXd mel_filterbank(const MelConfig& config);

MelSpectrogram mel_spectrogram(const audio::AudioBuffer& buffer, const MelConfig& config);

/// Same as mel_spectrogram with a precomputed filterbank.
MelSpectrogram mel_spectrogram(const audio::AudioBuffer& buffer, const MelConfig& config,
                               const Eigen::MatrixXd& filterbank);

MelSpectrogram normalize_unit(const MelSpectrogram& spec);

/// Maps minmax_unit values back to dB assuming -1 -> min_db and +1 -> max_db.
MelSpectrogram denormalize_unit(const MelSpectrogram& spec, double min_db = -kTopDb, double max_db = 0.0);

/// Pads (with zero rows) or truncates at the end to exactly target_frames rows.
MelSpectrogram fix_length(const MelSpectrogram& spec, int target_frames);

/// Waveform reconstruction by Griffin-Lim phase recovery. This is a classical
/// substitute for a neural vocoder. minmax_unit input is first mapped to dB
/// with denormalize_unit's defaults.
audio::AudioBuffer griffin_lim_invert(const MelSpectrogram& spec, int iterations = 32);

// MELS v1 container.
std::vector<std::uint8_t> encode_mels(const MelSpectrogram& spec);
MelSpectrogram decode_mels(std::span<const std::uint8_t> bytes);
void save_mels(const MelSpectrogram& spec, const std::filesystem::path& path);
MelSpectrogram load_mels(const std::filesystem::path& path);

}  // namespace art2music::mel
