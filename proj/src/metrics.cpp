#include "art2music/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "art2music/align.hpp"
#include "art2music/error.hpp"
#include "json.hpp"

namespace art2music::metrics {

namespace {

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + " shape mismatch: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + " contains non-finite values");
}

}  // namespace

Cepstra mel_cepstra(const Eigen::MatrixXd& db, int d) {
  const Eigen::Index f = db.cols();
  if (d < 1 || d >= f) {
    throw InvalidArgument("cepstral order " + std::to_string(d) + " outside [1, " + std::to_string(f - 1) + "]");
  }
  require_finite(db, "dB spectrogram");
  // Rows k = 1..d of the orthonormal DCT-II matrix.
  Eigen::MatrixXd basis(d, f);
  const double scale = std::sqrt(2.0 / static_cast<double>(f));
  for (int k = 1; k <= d; ++k) {
    for (Eigen::Index n = 0; n < f; ++n) {
      basis(k - 1, n) = scale * std::cos(std::numbers::pi * k * (static_cast<double>(n) + 0.5) / f);
    }
  }
  return db * basis.transpose();
}

Cepstra mel_cepstra(const mel::MelSpectrogram& spec, int d) {
  if (spec.normalization != mel::Normalization::raw_db) {
    throw InvalidArgument("mel_cepstra expects a raw_db spectrogram");
  }
  return mel_cepstra(Eigen::MatrixXd(spec.values.cast<double>()), d);
}

double mcd(const Cepstra& a, const Cepstra& b) {
  require_same_shape(a, b, "cepstra");
  if (a.rows() == 0) throw InvalidArgument("mcd of empty cepstra");
  require_finite(a, "cepstra");
  require_finite(b, "cepstra");
  const double k = 10.0 / std::numbers::ln10;
  double total = 0.0;
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    total += k * std::sqrt(2.0 * (a.row(t) - b.row(t)).squaredNorm());
  }
  return total / static_cast<double>(a.rows());
}

namespace {

double lsd_from_log10(const Eigen::MatrixXd& la, const Eigen::MatrixXd& lb) {
  const double f = static_cast<double>(la.cols());
  double total = 0.0;
  for (Eigen::Index t = 0; t < la.rows(); ++t) total += std::sqrt((la.row(t) - lb.row(t)).squaredNorm() / f);
  return total / static_cast<double>(la.rows());
}

}  // namespace

double lsd(const Eigen::MatrixXd& power_a, const Eigen::MatrixXd& power_b) {
  require_same_shape(power_a, power_b, "power spectra");
  if (power_a.size() == 0) throw InvalidArgument("lsd of empty spectra");
  require_finite(power_a, "power spectrum");
  require_finite(power_b, "power spectrum");
  const auto log10_floor = [](const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
    return p.unaryExpr([](double v) { return std::log10(std::max(v, mel::kPowerFloor)); });
  };
  return lsd_from_log10(log10_floor(power_a), log10_floor(power_b));
}

double lsd(const mel::MelSpectrogram& a, const mel::MelSpectrogram& b) {
  if (a.normalization != mel::Normalization::raw_db || b.normalization != mel::Normalization::raw_db) {
    throw InvalidArgument("lsd expects raw_db spectrograms");
  }
  const Eigen::MatrixXd la = a.values.cast<double>() / 10.0;
  const Eigen::MatrixXd lb = b.values.cast<double>() / 10.0;
  require_same_shape(la, lb, "spectrogram");
  if (la.size() == 0) throw InvalidArgument("lsd of empty spectra");
  require_finite(la, "spectrogram");
  require_finite(lb, "spectrogram");
  return lsd_from_log10(la, lb);
}

GaussianAccumulator::GaussianAccumulator(Eigen::Index dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::MatrixXd::Zero(dim, dim)) {
  if (dim < 1) throw InvalidArgument("Gaussian dimension must be positive");
}

void GaussianAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != mean_.size()) {
    throw DimensionError(dimension_message("embedding dimension", mean_.size(), x.size()));
  }
  if (!x.allFinite()) throw InvalidArgument("embedding contains non-finite values");
  ++count_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_).transpose();
}

void GaussianAccumulator::merge(const GaussianAccumulator& other) {
  if (other.mean_.size() != mean_.size()) {
    throw DimensionError(dimension_message("accumulator dimension", mean_.size(), other.mean_.size()));
  }
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_), nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const Eigen::VectorXd delta = other.mean_ - mean_;
  mean_ += delta * (nb / n);
  m2_ += other.m2_ + delta * delta.transpose() * (na * nb / n);
  count_ += other.count_;
}

GaussianStats GaussianAccumulator::finish() const {
  if (count_ < 2) throw InvalidArgument("fitting a Gaussian needs at least 2 samples, got " + std::to_string(count_));
  GaussianStats g;
  g.mean = mean_;
  const Eigen::MatrixXd cov = m2_ / static_cast<double>(count_ - 1);
  g.covariance = 0.5 * (cov + cov.transpose());
  g.count = count_;
  return g;
}

GaussianStats fit_gaussian(const Eigen::MatrixXd& embeddings) {
  if (embeddings.rows() < 2) {
    throw InvalidArgument("fitting a Gaussian needs at least 2 samples, got " + std::to_string(embeddings.rows()));
  }
  GaussianAccumulator acc(embeddings.cols());
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) acc.add(embeddings.row(i).transpose());
  return acc.finish();
}

namespace {

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kNegativeEigenTolerance = 1e-8;
constexpr double kSingularRidge = 1e-10;

void check_covariance(const Eigen::MatrixXd& s, const char* which) {
  if (!s.allFinite()) throw InvalidArgument(std::string(which) + " covariance has non-finite entries");
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
    throw InvalidArgument(std::string(which) + " covariance is not symmetric");
  }
}

// Eigenvalues of a symmetric matrix with tiny negatives clamped to zero; anything more
// negative than the relative tolerance means the input was not PSD.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& s, const char* which,
                                                         Eigen::VectorXd& clamped) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) throw InvalidArgument(std::string(which) + ": eigendecomposition failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double tol = kNegativeEigenTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol) {
    throw InvalidArgument(std::string(which) + " is not positive semi-definite (eigenvalue " +
                          std::to_string(ev.minCoeff()) + ")");
  }
  clamped = ev.cwiseMax(0.0);
  return es;
}

bool is_singular(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();
  return ev.minCoeff() <= kNegativeEigenTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff());
}

}  // namespace

double frechet_distance(const GaussianStats& p, const GaussianStats& q) {
  const Eigen::Index d = p.mean.size();
  if (q.mean.size() != d) throw DimensionError(dimension_message("Gaussian dimension", d, q.mean.size()));
  if (p.covariance.rows() != d || p.covariance.cols() != d || q.covariance.rows() != d || q.covariance.cols() != d) {
    throw DimensionError("covariance shape does not match mean dimension");
  }
  if (!p.mean.allFinite() || !q.mean.allFinite()) throw InvalidArgument("Gaussian mean has non-finite entries");
  check_covariance(p.covariance, "first");
  check_covariance(q.covariance, "second");

  Eigen::MatrixXd sp = p.covariance;
  Eigen::MatrixXd sq = q.covariance;
  if (is_singular(sp) || is_singular(sq)) {
    sp.diagonal().array() += kSingularRidge;
    sq.diagonal().array() += kSingularRidge;
  }

  Eigen::VectorXd lp;
  const auto esp = psd_eigen(sp, "first covariance", lp);
  const Eigen::MatrixXd sp_half = esp.eigenvectors() * lp.cwiseSqrt().asDiagonal() * esp.eigenvectors().transpose();
  Eigen::MatrixXd m = sp_half * sq * sp_half;
  m = 0.5 * (m + m.transpose());
  Eigen::VectorXd lm;
  psd_eigen(m, "covariance product", lm);
  Eigen::VectorXd lq;
  psd_eigen(sq, "second covariance", lq);

  const double mean_term = (p.mean - q.mean).squaredNorm();
  const double trace_term = sp.trace() + sq.trace() - 2.0 * lm.cwiseSqrt().sum();
  return std::max(0.0, mean_term + trace_term);
}

double embedding_cosine(std::span<const float> a, std::span<const float> b) {
  return align::cosine_similarity(a, b);
}

double embedding_cosine(std::span<const double> a, std::span<const double> b) {
  return align::cosine_similarity(a, b);
}

// ---------------------------------------------------------------------------
// Rating schema

namespace {

using nlohmann::json;

std::string render(const json* v) {
  if (!v) return "missing";
  std::string s = v->dump();
  if (s.size() > 60) s = s.substr(0, 57) + "...";
  return s;
}

class Checker {
 public:
  std::vector<Violation> violations;

  void fail(std::string path, std::string constraint, const json* found) {
    violations.push_back({std::move(path), std::move(constraint), render(found)});
  }

  const json* field(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  // Returns the object at `path`, or nullptr after recording a violation.
  const json* object(const json& parent, const char* key, const std::string& path) {
    const json* v = field(parent, key);
    if (!v || !v->is_object()) {
      fail(path, "object required", v);
      return nullptr;
    }
    return v;
  }

  void unknown_keys(const json& obj, std::initializer_list<const char*> known, const std::string& prefix) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
      if (!ok) fail(prefix + it.key(), "unknown field", &it.value());
    }
  }

  std::optional<int> score(const json& scores) {
    const std::string path = "scores.Feeling_alignment";
    const json* v = field(scores, "Feeling_alignment");
    if (!v || !v->is_number_integer()) {
      fail(path, "integer required", v);
      return std::nullopt;
    }
    const auto s = v->get<long long>();
    if (s < 0 || s > 10) {
      fail(path, "range [0,10]", v);
      return std::nullopt;
    }
    return static_cast<int>(s);
  }

  std::vector<std::string> keyword_list(const json& keywords, const char* key) {
    const std::string path = std::string("keywords.") + key;
    const json* v = field(keywords, key);
    if (!v || !v->is_array()) {
      fail(path, "list of strings required", v);
      return {};
    }
    std::vector<std::string> out;
    bool types_ok = true;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_string() || e.get_ref<const std::string&>().empty()) {
        fail(path + "." + std::to_string(i), "non-empty string required", &e);
        types_ok = false;
      } else {
        out.push_back(e.get<std::string>());
      }
    }
    if (v->empty() || v->size() > 5) fail(path, "length 1-5", v);
    return types_ok ? out : std::vector<std::string>{};
  }

  std::string explanation(const json& explanations, const char* key) {
    const std::string path = std::string("explanations.") + key;
    const json* v = field(explanations, key);
    if (!v || !v->is_string() || v->get_ref<const std::string&>().empty()) {
      fail(path, "non-empty string required", v);
      return {};
    }
    return v->get<std::string>();
  }
};

}  // namespace

RatingResult validate_rating(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw FormatError("malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }

  Checker c;
  RatingResult result;
  if (!doc.is_object()) {
    c.fail("(root)", "object required", &doc);
    result.violations = std::move(c.violations);
    return result;
  }

  RatingOutput out;
  if (const json* scores = c.object(doc, "scores", "scores")) {
    if (auto s = c.score(*scores)) out.feeling_alignment = *s;
    c.unknown_keys(*scores, {"Feeling_alignment"}, "scores.");
  }
  if (const json* kw = c.object(doc, "keywords", "keywords")) {
    out.keywords.text = c.keyword_list(*kw, "text");
    out.keywords.image = c.keyword_list(*kw, "image");
    out.keywords.audio = c.keyword_list(*kw, "audio");
    c.unknown_keys(*kw, {"text", "image", "audio"}, "keywords.");
  }
  if (const json* ex = c.object(doc, "explanations", "explanations")) {
    out.explanations.text = c.explanation(*ex, "text");
    out.explanations.image = c.explanation(*ex, "image");
    out.explanations.audio = c.explanation(*ex, "audio");
    out.explanations.overall = c.explanation(*ex, "overall");
    c.unknown_keys(*ex, {"text", "image", "audio", "overall"}, "explanations.");
  }
  if (const json* notes = c.field(doc, "notes"); notes && !notes->is_null()) {
    if (notes->is_string()) {
      out.notes = notes->get<std::string>();
    } else {
      c.fail("notes", "string required", notes);
    }
  }
  c.unknown_keys(doc, {"scores", "keywords", "explanations", "notes"}, "");

  result.violations = std::move(c.violations);
  if (result.violations.empty()) result.output = std::move(out);
  return result;
}

}  // namespace art2music::metrics
