#pragma once

// Objective evaluation metrics and the rating-output schema validator.

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "art2music/melspec.hpp"

namespace art2music::metrics {

/// frames x D Mel-cepstral coefficients (coefficient 0 excluded).
using Cepstra = Eigen::MatrixXd;

inline constexpr int kDefaultCepstra = 13;

/// Orthonormal DCT-II of every dB frame, keeping coefficients 1..d. Requires raw_db input.
Cepstra mel_cepstra(const mel::MelSpectrogram& spec, int d = kDefaultCepstra);
Cepstra mel_cepstra(const Eigen::MatrixXd& db_frames, int d = kDefaultCepstra);

/// Mean per-frame Mel-cepstral distortion in dB (no time warping).
double mcd(const Cepstra& a, const Cepstra& b);

/// Log-spectral distance of two frames x bins power matrices (floored at 1e-10).
double lsd(const Eigen::MatrixXd& power_a, const Eigen::MatrixXd& power_b);
/// Same on raw_db Mel spectrograms, using log10 P = dB / 10.
double lsd(const mel::MelSpectrogram& a, const mel::MelSpectrogram& b);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;
};

/// Streaming mean/scatter accumulator; partial accumulators merge exactly (Chan et al.).
class GaussianAccumulator {
 public:
  explicit GaussianAccumulator(Eigen::Index dim);

  void add(const Eigen::Ref<const Eigen::VectorXd>& x);
  void merge(const GaussianAccumulator& other);
  std::size_t count() const noexcept { return count_; }
  /// Unbiased covariance; needs at least two samples.
  GaussianStats finish() const;

 private:
  std::size_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
};

/// Rows of `embeddings` are samples.
GaussianStats fit_gaussian(const Eigen::MatrixXd& embeddings);

/// ||mu_p - mu_q||^2 + tr(S_p + S_q - 2 (S_p S_q)^(1/2)).
double frechet_distance(const GaussianStats& p, const GaussianStats& q);

double embedding_cosine(std::span<const float> a, std::span<const float> b);
double embedding_cosine(std::span<const double> a, std::span<const double> b);

struct RatingKeywords {
  std::vector<std::string> text, image, audio;
};

struct RatingExplanations {
  std::string text, image, audio, overall;
};

struct RatingOutput {
  int feeling_alignment = 0;
  RatingKeywords keywords;
  RatingExplanations explanations;
  std::optional<std::string> notes;
};

struct Violation {
  std::string path;        // dot path, e.g. "keywords.audio"
  std::string constraint;  // e.g. "length 1-5"
  std::string found;       // short rendering of the offending value
};

struct RatingResult {
  std::optional<RatingOutput> output;  // set iff violations is empty
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Throws FormatError (with byte position) on malformed JSON; schema problems are
/// reported as violations, all of them, in schema order followed by unknown fields.
RatingResult validate_rating(std::string_view json_text);

}  // namespace art2music::metrics
