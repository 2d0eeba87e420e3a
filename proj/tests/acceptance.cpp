// Acceptance checks 1-11. One PASS/FAIL line per check; exit status is non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "art2music/align.hpp"
#include "art2music/audio_io.hpp"
#include "art2music/cli.hpp"
#include "art2music/melspec.hpp"
#include "art2music/metrics.hpp"
#include "art2music/neuralnet.hpp"
#include "corpus.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

using namespace art2music;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kOverfitReduction = 0.90;
constexpr int kOverfitSteps = 500;
constexpr double kOverfitLr = 1e-4 * 10;
constexpr double kOverfitSeconds = 60.0;
constexpr double kMcdTol = 1e-9;
constexpr double kLsdTol = 1e-12;
constexpr double kFrechetTol = 1e-9;
constexpr double kIdentityTol = 1e-9;
constexpr double kGriffinLimSeconds = 10.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... v) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, v...);
  return buf;
}

// 1
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  double fusion = 0, decoder = 0, loss = 0;
  for (int i = 0; i < 20; ++i) fusion = std::max(fusion, gradcheck::fusion_instance(rng, i % 2 == 1));
  for (int i = 0; i < 20; ++i) decoder = std::max(decoder, gradcheck::decoder_instance(rng));
  for (int i = 0; i < 20; ++i) loss = std::max(loss, gradcheck::loss_instance(rng));
  const double secs = seconds_since(t0);
  const double worst = std::max({fusion, decoder, loss});
  return {worst < kGradTol && secs < kGradSeconds,
          fmt("max rel err fusion %.2e, decoder %.2e, loss %.2e (< %.0e); %.2f s (< %.0f s)", fusion, decoder, loss,
              kGradTol, secs, kGradSeconds)};
}

// 2
Outcome loss_weights() {
  bool ok = true;
  std::string d;
  for (int f : {2, 80, 128}) {
    const auto w = nn::LossWeights::ramp(f);
    ok = ok && w.w.front() == 1.0 && w.w.back() == 1.5;
    d += fmt("F=%d: w1=%.17g wF=%.17g; ", f, w.w.front(), w.w.back());
  }
  nn::Matrix a(1, 2), b = nn::Matrix::Zero(1, 2);
  a << 1.0, 1.0;
  const double l = nn::freq_weighted_l1(a, b, nn::LossWeights::ramp(2));
  ok = ok && l == 1.25;
  return {ok, d + fmt("closed form %.17g (== 1.25)", l)};
}

// 3
Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = fixture::tiny_dims();
  const auto samples = fixture::overfit_samples(d, 1234, 8);
  const auto w = nn::LossWeights::ramp(d.mel_bands);
  const auto init = nn::init_params(d, 0);
  nn::TrainConfig cfg;
  cfg.learning_rate = kOverfitLr;
  cfg.batch_size = samples.size();
  cfg.epochs = kOverfitSteps;
  cfg.seed = 0;
  const double before = nn::dataset_loss(init, samples, w);
  const auto r = nn::train(init, samples, {}, cfg, w);
  const double after = nn::dataset_loss(r.params, samples, w);
  const double secs = seconds_since(t0);
  const double reduction = 1.0 - after / before;
  const std::size_t steps = r.trace.back().steps;
  return {reduction >= kOverfitReduction && secs < kOverfitSeconds && steps <= static_cast<std::size_t>(kOverfitSteps),
          fmt("loss %.5f -> %.5f, reduction %.1f%% (>= %.0f%%) in %zu Adam steps at lr %.0e; %.2f s (< %.0f s)",
              before, after, 100 * reduction, 100 * kOverfitReduction, steps, kOverfitLr, secs, kOverfitSeconds)};
}

// 4
Outcome metric_closed_forms() {
  metrics::Cepstra a = metrics::Cepstra::Zero(5, 13), b = a;
  b.col(0).setOnes();
  const double mcd = metrics::mcd(a, b);
  const double mcd_err = std::abs(mcd - 10.0 / std::log(10.0) * std::sqrt(2.0));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(1e-4, 5.0);
  Eigen::MatrixXd p(6, 40);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  const double lsd_err = std::abs(metrics::lsd(10.0 * p, p) - 1.0);

  metrics::GaussianStats g0{Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Constant(1, 1, 1.0), 2};
  metrics::GaussianStats g1{Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 4.0), 2};
  const double fr_err = std::abs(metrics::frechet_distance(g0, g1) - 2.0);

  Eigen::MatrixXd x(30, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  const auto fit = metrics::fit_gaussian(x);
  Eigen::MatrixXd db = -80.0 * Eigen::MatrixXd::Ones(6, 40) + 10.0 * p;
  const double same = std::max({std::abs(metrics::mcd(metrics::mel_cepstra(db), metrics::mel_cepstra(db))),
                                std::abs(metrics::lsd(p, p)), std::abs(metrics::frechet_distance(fit, fit))});
  return {mcd_err < kMcdTol && lsd_err < kLsdTol && fr_err < kFrechetTol && same < kIdentityTol,
          fmt("MCD %.12f (err %.1e < 1e-9), LSD err %.1e (< 1e-12), Frechet err %.1e (< 1e-9), identical inputs max "
              "%.1e (< 1e-9)",
              mcd, mcd_err, lsd_err, fr_err, same)};
}

// 5
// Rescaled copies of a corpus. Power-of-two factors are exact in float32, so every row,
// planted ties included, must match. Arbitrary factors round each element (relative
// direction change ~1e-7), so those are compared on rows whose best/second-best gap
// exceeds kRescaleGap; every row's best similarity must still agree within kRescaleGap.
constexpr double kRescaleGap = 1e-5;

align::EmbeddingTable rescaled(const std::vector<std::string>& ids, const std::vector<std::vector<float>>& vecs,
                               const std::function<float()>& factor) {
  align::EmbeddingTable t(static_cast<std::uint32_t>(vecs[0].size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto v = vecs[i];
    const float s = factor();
    for (auto& e : v) e *= s;
    t.add(ids[i], v);
  }
  return t;
}

Outcome matcher() {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<std::size_t> na(1, 200), nm(1, 100);
  std::uniform_int_distribution<std::uint32_t> nd(1, 64);
  std::uniform_int_distribution<int> pow2(-8, 8);
  std::uniform_real_distribution<float> real(0.05f, 20.0f);
  std::size_t rows = 0, mismatches = 0, exact_mismatches = 0, real_rows = 0, real_mismatches = 0;
  double worst_sim = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = corpus::random_corpus(rng, na(rng), nm(rng), nd(rng));
    const auto got = align::match_triplets(c.art, c.music, c.art_emb, c.music_emb);
    const auto want = oracle::brute_force_match(c.art_vecs, c.music_vecs, c.music_ids);
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i].music_id != c.music_ids[want[i]];
    rows += got.size();

    std::vector<std::string> art_ids;
    for (const auto& a : c.art) art_ids.push_back(a.id);
    const auto p2 = [&] { return std::ldexp(1.0f, pow2(rng)); };
    const auto r = [&] { return real(rng); };
    const auto exact = align::match_triplets(c.art, c.music, rescaled(art_ids, c.art_vecs, p2),
                                             rescaled(c.music_ids, c.music_vecs, p2));
    const auto approx = align::match_triplets(c.art, c.music, rescaled(art_ids, c.art_vecs, r),
                                              rescaled(c.music_ids, c.music_vecs, r));
    for (std::size_t i = 0; i < got.size(); ++i) {
      exact_mismatches += exact[i].music_id != got[i].music_id || exact[i].similarity != got[i].similarity;
      worst_sim = std::max(worst_sim, std::abs(approx[i].similarity - got[i].similarity));
      double best = -2, second = -2;
      for (const auto& m : c.music_vecs) {
        const double s = oracle::cosine(c.art_vecs[i], m);
        if (s > best) {
          second = best;
          best = s;
        } else if (s > second) {
          second = s;
        }
      }
      if (best - second > kRescaleGap) {
        ++real_rows;
        real_mismatches += approx[i].music_id != got[i].music_id;
      }
    }
  }
  const bool ok = mismatches == 0 && exact_mismatches == 0 && real_mismatches == 0 && worst_sim < kRescaleGap;
  return {ok, fmt("50 corpora, %zu rows: %zu oracle mismatches; power-of-two rescaling %zu mismatches; real rescaling "
                  "%zu/%zu separated rows mismatched, max similarity shift %.1e (< %.0e)",
                  rows, mismatches, exact_mismatches, real_mismatches, real_rows, worst_sim, kRescaleGap)};
}

// 6
Outcome spectrogram() {
  mel::MelConfig c;
  const audio::AudioBuffer ten{oracle::sine(440.0, 10.0, 22050), 22050};
  const auto raw = mel::mel_spectrogram(ten, c);
  const auto norm = mel::normalize_unit(raw);
  const auto fixed = mel::fix_length(norm, c.target_frames);
  const float lo = fixed.values.minCoeff(), hi = fixed.values.maxCoeff();

  const audio::AudioBuffer one{oracle::sine(440.0, 1.0, 22050), 22050};
  const auto power = mel::stft_power(one, c);
  const auto spec = mel::mel_spectrogram(one, c);
  const int band = oracle::nearest_band(oracle::mel_centers(c.n_mels, 0.0, c.effective_fmax()), 440.0);
  bool bins_ok = true, bands_ok = true;
  for (Eigen::Index t = 2; t < power.rows() - 2; ++t) {
    Eigen::Index k, m;
    power.row(t).maxCoeff(&k);
    spec.values.row(t).maxCoeff(&m);
    bins_ok = bins_ok && k == 20;
    bands_ok = bands_ok && m == band;
  }
  const bool ok = raw.frames() == 862 && fixed.frames() == 896 && lo >= -1.0f && hi <= 1.0f && bins_ok && bands_ok;
  return {ok, fmt("raw frames %td (862), fixed %td (896), range [%.3f, %.3f], STFT peak bin 20: %s, mel peak band %d: %s",
                  raw.frames(), fixed.frames(), lo, hi, bins_ok ? "yes" : "no", band, bands_ok ? "yes" : "no")};
}

// 7
Outcome round_trips() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  audio::AudioBuffer wav{std::vector<float>(3001), 22050};
  for (auto& s : wav.samples) s = u(rng);
  const auto wav_bytes = audio::encode_wav(wav, audio::SampleFormat::float32);
  const bool wav_ok = audio::decode_wav(wav_bytes) == wav &&
                      audio::encode_wav(audio::decode_wav(wav_bytes), audio::SampleFormat::float32) == wav_bytes;

  mel::MelSpectrogram m;
  m.normalization = mel::Normalization::minmax_unit;
  m.values = mel::RowMatrixF::Random(896, 80);
  const auto mel_bytes = mel::encode_mels(m);
  const auto m2 = mel::decode_mels(mel_bytes);
  const bool mels_ok = m2.values == m.values && m2.normalization == m.normalization && mel::encode_mels(m2) == mel_bytes;

  auto dims = fixture::tiny_dims();
  dims.residual_dim = 5;
  const auto params = nn::init_params(dims, 3);
  const auto p_bytes = nn::save_params(params);
  const bool a2mp_ok = nn::save_params(nn::load_params(p_bytes)) == p_bytes && nn::load_params(p_bytes).dims == dims;

  align::EmbeddingTable t(7);
  std::normal_distribution<float> g;
  for (int i = 0; i < 25; ++i) {
    std::vector<float> v(7);
    for (auto& e : v) e = g(rng);
    t.add("item" + std::to_string(i), v);
  }
  const auto e_bytes = align::encode_emb(t);
  const bool emb_ok = align::decode_emb(e_bytes) == t && align::encode_emb(align::decode_emb(e_bytes)) == e_bytes;

  // Through the filesystem as well.
  oracle::TempDir dir("accept_rt");
  audio::write_wav(wav, dir.path / "x.wav", audio::SampleFormat::float32);
  mel::save_mels(m, dir.path / "x.mels");
  nn::save_params_file(params, dir.path / "x.a2mp");
  align::save_emb(t, dir.path / "x.emb");
  const bool files_ok = audio::read_wav(dir.path / "x.wav") == wav && mel::load_mels(dir.path / "x.mels").values == m.values &&
                        nn::save_params(nn::load_params_file(dir.path / "x.a2mp")) == p_bytes &&
                        align::load_emb(dir.path / "x.emb") == t;
  const auto yn = [](bool b) { return b ? "ok" : "MISMATCH"; };
  return {wav_ok && mels_ok && a2mp_ok && emb_ok && files_ok,
          fmt("WAV float32 %s, MELS %s, A2MP %s, EMB1 %s, via files %s", yn(wav_ok), yn(mels_ok), yn(a2mp_ok),
              yn(emb_ok), yn(files_ok))};
}

// 8
Outcome griffin_lim() {
  mel::MelConfig c;
  const audio::AudioBuffer sine{oracle::sine(440.0, 3.0, 22050), 22050};
  const auto spec = mel::mel_spectrogram(sine, c);
  const auto wav = mel::griffin_lim_invert(spec, 32);
  const auto again = mel::mel_spectrogram(wav, c);
  const auto dominant = [](const mel::MelSpectrogram& s) {
    Eigen::VectorXf mean = s.values.middleRows(4, s.values.rows() - 8).colwise().mean().transpose();
    Eigen::Index k;
    mean.maxCoeff(&k);
    return static_cast<int>(k);
  };
  const int before = dominant(spec), after = dominant(again);

  // Default-size reconstruction: 896 frames x 80 bands, 32 iterations.
  const auto full = mel::fix_length(mel::normalize_unit(mel::mel_spectrogram(
                                        audio::AudioBuffer{oracle::sine(440.0, 10.0, 22050), 22050}, c)),
                                    c.target_frames);
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = mel::griffin_lim_invert(full, 32);
  const double secs = seconds_since(t0);
  return {before == after && secs < kGriffinLimSeconds,
          fmt("dominant mel band %d -> %d; default-size reconstruction (%td x %td, 32 iterations, %zu samples) %.2f s "
              "(< %.0f s)",
              before, after, full.frames(), full.bands(), out.size(), secs, kGriffinLimSeconds)};
}

// 9
Outcome statistics() {
  // Planted corpus: per (painting, music) polarity cell a fixed count, with keyword
  // similarities high on the diagonal and lower off it.
  const std::vector<std::string> pos{"joy", "calm"}, neg{"gloom", "dread"}, stop{};
  const auto lex = align::SentimentLexicon::from_lists(pos, neg, stop);
  const std::vector<std::string> kw[3] = {{"joy", "calm"}, {"chair"}, {"gloom", "dread"}};
  const std::size_t planted[3][3] = {{7, 2, 1}, {3, 5, 2}, {1, 2, 6}};
  const double base[3][3] = {{0.85, 0.35, -0.15}, {0.30, 0.65, 0.05}, {-0.25, 0.15, 0.75}};
  std::vector<align::TripletRecord> triplets;
  std::size_t hist_expected[20] = {};
  std::size_t below = 0, same = 0;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      for (std::size_t n = 0; n < planted[i][k]; ++n) {
        align::TripletRecord t;
        t.art_id = "a" + std::to_string(triplets.size());
        t.music_id = "m" + std::to_string(triplets.size());
        t.art_keywords = kw[i];
        t.music_keywords = kw[k];
        // Deliberately wrong stored polarities: the report must recompute them from keywords.
        t.art_polarity = t.music_polarity = align::Polarity::neutral;
        t.keyword_similarity = base[i][k] + 0.01 * static_cast<double>(n);
        ++hist_expected[static_cast<int>(std::floor((t.keyword_similarity + 1.0) / 0.1 + 1e-9))];
        below += t.keyword_similarity < 0.25;
        same += i == k;
        triplets.push_back(t);
      }
    }
  }
  const auto r = cli::stats_report(triplets, 0.1, &lex);
  bool counts_ok = true, diag_ok = true, hist_ok = true;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      counts_ok = counts_ok && r["heatmap"]["counts"][i][k].get<std::size_t>() == planted[i][k];
      if (k != i) {
        diag_ok = diag_ok && r["heatmap"]["mean_similarity"][i][i].get<double>() > r["heatmap"]["mean_similarity"][i][k].get<double>() &&
                  r["heatmap"]["mean_similarity"][i][i].get<double>() > r["heatmap"]["mean_similarity"][k][i].get<double>();
      }
    }
  }
  for (int b = 0; b < 20; ++b) hist_ok = hist_ok && r["histogram"]["bins"][b]["count"].get<std::size_t>() == hist_expected[b];
  int painting_sum = 0, music_sum = 0;
  for (const char* p : {"positive", "neutral", "negative"}) {
    painting_sum += r["polarity_distribution"]["painting"][p].get<int>();
    music_sum += r["polarity_distribution"]["music"][p].get<int>();
  }
  const double n = static_cast<double>(triplets.size());
  // Painting 10/10/9 of 29 is 34.48/34.48/31.03; largest remainder with positive first gives 35/34/31.
  const bool share_ok = r["polarity_distribution"]["painting"]["positive"] == 35 &&
                        r["polarity_distribution"]["painting"]["neutral"] == 34 &&
                        r["polarity_distribution"]["painting"]["negative"] == 31;
  const bool pct_ok = std::abs(r["same_polarity_pct"].get<double>() - 100.0 * same / n) < 1e-12;
  const bool below_ok = std::abs(r["below_025_pct"].get<double>() - 100.0 * below / n) < 1e-12;
  const bool ok = counts_ok && diag_ok && hist_ok && painting_sum == 100 && music_sum == 100 && share_ok && pct_ok &&
                  below_ok && r["triplets"] == triplets.size();
  return {ok, fmt("%zu triplets; cell tallies %s, histogram tallies %s, strict diagonal dominance %s, shares sum to "
                  "%d/%d, same-polarity %.4f%%, below 0.25 %.4f%%",
                  triplets.size(), counts_ok ? "exact" : "WRONG", hist_ok ? "exact" : "WRONG", diag_ok ? "yes" : "no",
                  painting_sum, music_sum, r["same_polarity_pct"].get<double>(), r["below_025_pct"].get<double>())};
}

// 10
Outcome rating_schema() {
  using nlohmann::json;
  const auto read = [](const std::string& name) {
    std::ifstream in(std::string(A2M_TEST_DATA) + "/rating/" + name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int accepted = 0;
  for (const auto& [f, score] : {std::pair{"s1.json", 9}, {"s2.json", 8}, {"s3.json", 6}}) {
    const auto r = metrics::validate_rating(read(f));
    accepted += r.ok() && r.output->feeling_alignment == score;
  }
  const json base = json::parse(read("s1.json"));
  struct Mutation {
    std::function<void(json&)> apply;
    std::string path;
  };
  const std::vector<Mutation> mutations = {
      {[](json& j) { j["scores"]["Feeling_alignment"] = 11; }, "scores.Feeling_alignment"},
      {[](json& j) { j["scores"]["Feeling_alignment"] = 9.5; }, "scores.Feeling_alignment"},
      {[](json& j) { j["keywords"]["image"].push_back("sixth"); }, "keywords.image"},
      {[](json& j) { j["keywords"]["text"] = json::array(); }, "keywords.text"},
      {[](json& j) { j["explanations"].erase("text"); }, "explanations.text"},
      {[](json& j) { j["explanations"].erase("image"); }, "explanations.image"},
      {[](json& j) { j["explanations"].erase("audio"); }, "explanations.audio"},
      {[](json& j) { j["explanations"].erase("overall"); }, "explanations.overall"},
  };
  int rejected = 0;
  for (const auto& m : mutations) {
    json j = base;
    m.apply(j);
    const auto r = metrics::validate_rating(j.dump());
    rejected += !r.ok() && r.violations.size() == 1 && r.violations[0].path == m.path;
  }
  return {accepted == 3 && rejected == 8,
          fmt("case outputs accepted %d/3; mutations rejected at the expected path %d/8", accepted, rejected)};
}

// 11
Outcome determinism() {
  oracle::TempDir a("accept_run_a"), b("accept_run_b");
  toy::write_corpus(a.path);
  toy::write_corpus(b.path);
  const auto ra = toy::run_pipeline(a.path);
  const auto rb = toy::run_pipeline(b.path);
  if (!ra.ok() || !rb.ok()) {
    std::string why;
    for (const auto& s : ra.steps) {
      if (s.code != 0) why += s.err;
    }
    return {false, "pipeline failed: " + why};
  }
  std::size_t identical = 0;
  std::string differing;
  for (const auto& f : ra.outputs) {
    const std::string x = toy::slurp(a.path / f), y = toy::slurp(b.path / f);
    if (!x.empty() && x == y) {
      ++identical;
    } else {
      differing += " " + f.string();
    }
  }
  return {identical == ra.outputs.size(),
          fmt("%zu/%zu outputs byte-identical across two seeded runs (MELS, A2MP, WAV, CSV, JSON)%s", identical,
              ra.outputs.size(), differing.empty() ? "" : (";" + differing).c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"gradient correctness", gradients},
      {"loss-weight exactness", loss_weights},
      {"overfit sanity", overfit},
      {"metric closed forms", metric_closed_forms},
      {"matcher oracle", matcher},
      {"spectrogram pipeline", spectrogram},
      {"round trips", round_trips},
      {"Griffin-Lim substitute", griffin_lim},
      {"statistics fidelity", statistics},
      {"rating schema", rating_schema},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu checks failed\n", failed, checks.size());
  return failed == 0 ? 0 : 1;
}
