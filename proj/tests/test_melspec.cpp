#include <doctest.h>

#include <cstring>
#include <random>

#include "art2music/error.hpp"
#include "art2music/melspec.hpp"
#include "oracles.hpp"

using namespace art2music;
using namespace art2music::mel;
using audio::AudioBuffer;

namespace {

int argmax_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  Eigen::Index k;
  m.row(r).maxCoeff(&k);
  return static_cast<int>(k);
}

int argmax_row(const RowMatrixF& m, Eigen::Index r) {
  Eigen::Index k;
  m.row(r).maxCoeff(&k);
  return static_cast<int>(k);
}

MelSpectrogram from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  MelSpectrogram s;
  s.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (float v : row) s.values(r, c++) = v;
    ++r;
  }
  return s;
}

}  // namespace

TEST_CASE("config validation") {
  MelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.effective_fmax() == 11025.0);
  MelConfig bad = c;
  bad.hop_length = 2048;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.fmax_hz = 20000;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.fmin_hz = 12000;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.n_mels = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("stft frame count is 1 + floor(N / hop)") {
  MelConfig c;
  for (std::size_t n : {1u, 255u, 256u, 257u, 1000u, 5000u, 220500u}) {
    AudioBuffer b{std::vector<float>(n, 0.0f), c.sample_rate_hz};
    const auto p = stft_power(b, c);
    CHECK(p.rows() == static_cast<Eigen::Index>(1 + n / 256));
    CHECK(p.cols() == 513);
  }
  AudioBuffer ten{std::vector<float>(220500, 0.0f), 22050};
  CHECK(stft_power(ten, c).rows() == 862);
  CHECK(stft_power(ten, c).isZero(0.0));
}

TEST_CASE("stft errors") {
  MelConfig c;
  CHECK_THROWS_AS(stft_power(AudioBuffer{{0.1f}, 16000}, c), InvalidArgument);
  CHECK_THROWS_AS(stft_power(AudioBuffer{{}, 22050}, c), InvalidArgument);
}

TEST_CASE("stft frame matches a naive DFT of the windowed frame") {
  MelConfig c;
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  AudioBuffer b{std::vector<float>(4096), 22050};
  for (auto& s : b.samples) s = u(rng);
  const auto p = stft_power(b, c);
  // Frame 5 starts at 5*256 - 512 in the original signal: fully inside, no reflection.
  std::vector<double> frame(1024);
  for (int i = 0; i < 1024; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 1024.0);  // periodic Hann
    frame[i] = w * b.samples[5 * 256 - 512 + i];
  }
  const auto ref = oracle::dft_power(frame);
  for (int k = 0; k < 513; ++k) CHECK(p(5, k) == doctest::Approx(ref[k]).epsilon(1e-9).scale(1e-9));
}

TEST_CASE("440 Hz sine peaks at STFT bin 20") {
  MelConfig c;
  AudioBuffer b{oracle::sine(440.0, 1.0, 22050, 1.0), 22050};
  const auto p = stft_power(b, c);
  for (Eigen::Index t = 2; t < p.rows() - 2; ++t) CHECK(argmax_row(p, t) == 20);
  // Naive DFT of one windowed interior frame agrees.
  std::vector<double> frame(1024);
  for (int i = 0; i < 1024; ++i) {
    frame[i] = (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 1024.0)) * b.samples[4096 + i];
  }
  const auto ref = oracle::dft_power(frame);
  CHECK(std::max_element(ref.begin(), ref.end()) - ref.begin() == 20);
}

TEST_CASE("filterbank shape, positivity and centres") {
  MelConfig c;
  const auto fb = mel_filterbank(c);
  CHECK(fb.rows() == 80);
  CHECK(fb.cols() == 513);
  CHECK(fb.minCoeff() >= 0.0);
  for (Eigen::Index m = 0; m < fb.rows(); ++m) CHECK(fb.row(m).sum() > 0.0);
  const auto centres = mel_center_frequencies(c);
  const auto ref = oracle::mel_centers(80, 0.0, 11025.0);
  REQUIRE(centres.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(centres[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));
}

TEST_CASE("filterbank rejects bands too narrow for the FFT grid") {
  MelConfig c;
  c.fft_size = 64;
  c.hop_length = 16;
  c.n_mels = 128;
  CHECK_THROWS_AS(mel_filterbank(c), InvalidArgument);
}

TEST_CASE("mel spectrogram of a 440 Hz sine peaks in the band nearest 440 Hz") {
  MelConfig c;
  AudioBuffer b{oracle::sine(440.0, 1.0, 22050), 22050};
  const auto s = mel_spectrogram(b, c);
  CHECK(s.normalization == Normalization::raw_db);
  const int expected = oracle::nearest_band(oracle::mel_centers(80, 0.0, 11025.0), 440.0);
  for (Eigen::Index t = 2; t < s.values.rows() - 2; ++t) CHECK(argmax_row(s.values, t) == expected);
  CHECK(s.values.maxCoeff() - s.values.minCoeff() <= 80.0f + 1e-3f);
}

TEST_CASE("silence gives a constant spectrogram") {
  MelConfig c;
  const auto s = mel_spectrogram(AudioBuffer{std::vector<float>(5000, 0.0f), 22050}, c);
  CHECK(s.values.maxCoeff() == s.values.minCoeff());
  CHECK(s.values(0, 0) == doctest::Approx(-100.0));
}

TEST_CASE("scaling the waveform shifts dB values by 20 log10(c)") {
  MelConfig c;
  std::mt19937 rng(11);
  std::normal_distribution<float> g(0.0f, 0.1f);
  AudioBuffer a{std::vector<float>(8000), 22050};
  for (auto& s : a.samples) s = g(rng);
  AudioBuffer b = a;
  for (auto& s : b.samples) s *= 0.5f;
  const auto sa = mel_spectrogram(a, c);
  const auto sb = mel_spectrogram(b, c);
  const float shift = static_cast<float>(20.0 * std::log10(0.5));
  const float floor_a = sa.values.maxCoeff() - 80.0f;
  for (Eigen::Index t = 0; t < sa.values.rows(); ++t) {
    for (Eigen::Index f = 0; f < sa.values.cols(); ++f) {
      if (sa.values(t, f) > floor_a + 30.0f) CHECK(sb.values(t, f) - sa.values(t, f) == doctest::Approx(shift).epsilon(1e-3));
    }
  }
}

TEST_CASE("normalize_unit endpoints, midpoint and degenerate case") {
  auto s = normalize_unit(from_rows({{0.0f, 5.0f, 10.0f}}));
  CHECK(s.normalization == Normalization::minmax_unit);
  CHECK(s.values(0, 0) == -1.0f);
  CHECK(s.values(0, 1) == 0.0f);
  CHECK(s.values(0, 2) == 1.0f);
  auto mid = normalize_unit(from_rows({{-80.0f, -40.0f, 0.0f}}));
  CHECK(mid.values(0, 1) == 0.0f);
  auto flat = normalize_unit(from_rows({{3.0f, 3.0f}, {3.0f, 3.0f}}));
  CHECK((flat.values.array() == -1.0f).all());
  // Idempotent on full-range input.
  CHECK(normalize_unit(s).values == s.values);
}

TEST_CASE("normalized entries of real audio stay inside [-1, 1]") {
  MelConfig c;
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  AudioBuffer b{std::vector<float>(20000), 22050};
  for (auto& s : b.samples) s = u(rng);
  const auto n = normalize_unit(mel_spectrogram(b, c));
  CHECK(n.values.minCoeff() >= -1.0f);
  CHECK(n.values.maxCoeff() <= 1.0f);
}

TEST_CASE("denormalize_unit maps [-1, 1] onto [-80, 0] dB") {
  auto n = normalize_unit(from_rows({{-80.0f, -40.0f, 0.0f}}));
  const auto d = denormalize_unit(n);
  CHECK(d.normalization == Normalization::raw_db);
  CHECK(d.values(0, 0) == doctest::Approx(-80.0));
  CHECK(d.values(0, 1) == doctest::Approx(-40.0));
  CHECK(d.values(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("fix_length pads with zero rows, truncates and is idempotent") {
  MelSpectrogram s;
  s.normalization = Normalization::minmax_unit;
  s.values = RowMatrixF::Constant(862, 4, 0.5f);
  const auto p = fix_length(s, 896);
  CHECK(p.frames() == 896);
  CHECK(p.config.target_frames == 896);
  CHECK((p.values.topRows(862).array() == 0.5f).all());
  CHECK((p.values.bottomRows(34).array() == 0.0f).all());
  s.values = RowMatrixF::Random(1000, 4);
  const auto t = fix_length(s, 896);
  CHECK(t.values == s.values.topRows(896));
  CHECK(fix_length(t, 896).values == t.values);
  CHECK(fix_length(fix_length(s, 300), 300).values == fix_length(s, 300).values);
  CHECK_THROWS_AS(fix_length(s, 0), InvalidArgument);
}

TEST_CASE("MELS round trip is bit exact and corrupt streams are rejected") {
  MelSpectrogram s;
  s.normalization = Normalization::minmax_unit;
  s.values = RowMatrixF::Random(17, 9);
  s.config.n_mels = 9;
  s.config.target_frames = 17;
  const auto bytes = encode_mels(s);
  CHECK(bytes.size() == 4 + 1 + 4 + 4 + 1 + 17 * 9 * 4);
  const auto back = decode_mels(bytes);
  CHECK(back.normalization == s.normalization);
  CHECK(std::memcmp(back.values.data(), s.values.data(), sizeof(float) * 17 * 9) == 0);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_mels(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_mels(bad), FormatError);
  bad = bytes;
  bad[13] = 7;
  CHECK_THROWS_AS(decode_mels(bad), FormatError);
  CHECK_THROWS_AS(decode_mels(std::span(bytes).first(bytes.size() - 1)), TruncatedError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_mels(bad), FormatError);

  oracle::TempDir dir("mels");
  save_mels(s, dir.path / "a.mels");
  CHECK(load_mels(dir.path / "a.mels").values == s.values);
  CHECK_THROWS_AS(load_mels(dir.path / "missing.mels"), IoError);
}

TEST_CASE("Griffin-Lim keeps the dominant frequency and output length") {
  MelConfig c;
  c.target_frames = 128;
  AudioBuffer b{oracle::sine(440.0, 1.5, 22050), 22050};
  const auto spec = mel_spectrogram(b, c);
  const auto wav = griffin_lim_invert(spec, 32);
  CHECK(wav.sample_rate_hz == 22050);
  CHECK(wav.size() == static_cast<std::size_t>((spec.frames() - 1) * c.hop_length));

  // Dominant bin of a windowed analysis frame (bin width 22050 / 1024 Hz) within one bin of 440 Hz.
  for (std::size_t start : {4096u, 8192u, 16384u}) {
    std::vector<double> frame(1024);
    for (int i = 0; i < 1024; ++i) {
      frame[i] = (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 1024.0)) * wav.samples[start + i];
    }
    const auto p = oracle::dft_power(frame);
    const auto peak = std::max_element(p.begin() + 1, p.end()) - p.begin();
    CHECK(std::abs(peak * 22050.0 / 1024 - 440.0) <= 22050.0 / 1024);
  }

  const auto again = mel_spectrogram(wav, c);
  const int expected = oracle::nearest_band(oracle::mel_centers(80, 0.0, 11025.0), 440.0);
  for (Eigen::Index t = 4; t < again.values.rows() - 4; ++t) CHECK(argmax_row(again.values, t) == expected);
}

TEST_CASE("Griffin-Lim of a silent spectrogram is near zero and deterministic") {
  MelSpectrogram s;
  s.values = RowMatrixF::Constant(20, 80, -100.0f);
  const auto wav = griffin_lim_invert(s, 8);
  double rms = 0.0;
  for (float v : wav.samples) rms += static_cast<double>(v) * v;
  CHECK(std::sqrt(rms / wav.size()) < 1e-3);
  CHECK_THROWS_AS(griffin_lim_invert(s, 0), InvalidArgument);

  MelSpectrogram n;
  n.normalization = Normalization::minmax_unit;
  n.values = RowMatrixF::Random(30, 80);
  CHECK(griffin_lim_invert(n, 4) == griffin_lim_invert(n, 4));
}
