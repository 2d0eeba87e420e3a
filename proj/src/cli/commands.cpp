#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "art2music/audio_io.hpp"
#include "art2music/format.hpp"
#include "art2music/metrics.hpp"

namespace art2music::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Round every float in place so the serialised text is stable across platforms.
void round_floats(json& j) {
  if (j.is_number_float()) {
    j = round_significant(j.get<double>());
  } else if (j.is_structured()) {
    for (auto& v : j) round_floats(v);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

// Reports go to --out when given, otherwise to stdout.
void emit_report(const Context& ctx, const json& report) {
  const std::string text = dump_json(report) + "\n";
  if (ctx.out_path) {
    write_text(*ctx.out_path, text);
  } else {
    ctx.out << text;
  }
}

const fs::path& need_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw UsageError(std::string("missing required path (") + flag + ")");
  return p;
}

const fs::path& need_out(const Context& ctx, const char* what) {
  if (!ctx.out_path) throw UsageError(std::string("--out is required (") + what + ")");
  return *ctx.out_path;
}

bool has_extension(const fs::path& p, std::string_view ext) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

// Files named directly plus the matching files of named directories, sorted by path.
std::vector<fs::path> collect_files(const std::vector<fs::path>& inputs, std::string_view ext) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& entry : fs::directory_iterator(in)) {
        if (entry.is_regular_file() && has_extension(entry.path(), ext)) files.push_back(entry.path());
      }
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw IoError("no such file or directory: " + in.string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

std::optional<align::SentimentLexicon> optional_lexicon(const PathSettings& p, std::ostream& err) {
  if (p.positive_words.empty() && p.negative_words.empty()) return std::nullopt;
  if (p.positive_words.empty() || p.negative_words.empty()) {
    throw UsageError("both --positive and --negative word lists are needed");
  }
  std::vector<std::string> ambiguous;
  const std::optional<fs::path> stop = p.stopwords.empty() ? std::nullopt : std::optional<fs::path>(p.stopwords);
  auto lex = align::load_lexicon(p.positive_words, p.negative_words, stop, &ambiguous);
  if (!ambiguous.empty()) {
    err << "warning: ignoring word(s) listed as both positive and negative:";
    for (const auto& w : ambiguous) err << " " << w;
    err << "\n";
  }
  return lex;
}

mel::MelSpectrogram to_db(const mel::MelSpectrogram& s) { return mel::denormalize_unit(s); }

}  // namespace

std::string dump_json(const json& j) {
  json copy = j;
  round_floats(copy);
  return copy.dump(2);
}

// ---------------------------------------------------------------------------

int cmd_melspec(const Context& ctx, const std::vector<fs::path>& inputs) {
  if (inputs.empty()) throw UsageError("melspec needs at least one input file or directory");
  const fs::path& out_dir = need_out(ctx, "output directory");
  const mel::MelConfig& cfg = ctx.config.mel;
  const auto files = collect_files(inputs, ".wav");
  if (files.empty()) {
    ctx.err << "warning: no .wav files found\n";
    return kExitOk;
  }
  fs::create_directories(out_dir);
  const Eigen::MatrixXd fb = mel::mel_filterbank(cfg);

  int failures = 0;
  for (const auto& file : files) {
    try {
      audio::AudioBuffer buf = audio::read_wav(file);
      if (buf.sample_rate_hz != cfg.sample_rate_hz) buf = audio::resample(buf, cfg.sample_rate_hz);
      const mel::MelSpectrogram raw = mel::mel_spectrogram(buf, cfg, fb);
      const mel::MelSpectrogram fixed = mel::fix_length(mel::normalize_unit(raw), cfg.target_frames);
      const fs::path dst = out_dir / (file.stem().string() + ".mels");
      mel::save_mels(fixed, dst);
      ctx.out << file.filename().string() << ": frames " << raw.frames() << " -> " << fixed.frames() << ", dB ["
              << format_g9(raw.values.minCoeff()) << ", " << format_g9(raw.values.maxCoeff()) << "] -> "
              << dst.string() << "\n";
    } catch (const Error& e) {
      ++failures;
      ctx.err << "error: " << file.string() << ": " << e.what() << "\n";
    }
  }
  return failures == 0 ? kExitOk : kExitDataError;
}

// ---------------------------------------------------------------------------

int cmd_align(const Context& ctx) {
  const PathSettings& p = ctx.config.paths;
  const fs::path& out = need_out(ctx, "triplet file");
  const auto art = align::read_art_manifest(need_path(p.art_manifest, "--art"));
  const auto music = align::read_music_manifest(need_path(p.music_manifest, "--music"));
  const auto art_emb = align::load_emb(need_path(p.art_embeddings, "--art-emb"));
  const auto music_emb = align::load_emb(need_path(p.music_embeddings, "--music-emb"));
  const auto lexicon = optional_lexicon(p, ctx.err);
  if (!lexicon) throw UsageError("align needs --positive and --negative word lists");

  std::optional<align::EmbeddingTable> kw_table;
  if (!p.keyword_embeddings.empty()) kw_table = align::load_emb(p.keyword_embeddings);
  const align::KeywordEmbedder embedder = kw_table ? align::KeywordEmbedder(&*kw_table) : align::KeywordEmbedder();

  auto triplets = align::match_triplets(art, music, art_emb, music_emb);
  align::annotate_triplets(triplets, art, music, *lexicon, embedder);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  align::write_triplets(out, triplets);
  ctx.out << "aligned " << art.size() << " art records against " << music.size() << " music records -> "
          << out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

json stats_report(std::span<const align::TripletRecord> input, double bin_width,
                  const align::SentimentLexicon* lexicon) {
  if (input.empty()) throw InvalidArgument("statistics need at least one triplet");
  std::vector<align::TripletRecord> triplets(input.begin(), input.end());
  if (lexicon) {
    for (auto& t : triplets) {
      t.art_polarity = align::classify_polarity(t.art_keywords, *lexicon);
      t.music_polarity = align::classify_polarity(t.music_keywords, *lexicon);
    }
  }

  json report;
  report["triplets"] = triplets.size();

  json bins = json::array();
  for (const auto& b : align::similarity_histogram(triplets, bin_width)) {
    bins.push_back({{"start", b.start}, {"end", b.start + bin_width}, {"count", b.count}});
  }
  report["histogram"] = {{"bin_width", bin_width}, {"bins", bins}};

  const auto heat = align::polarity_heatmap(triplets);
  std::array<std::array<std::size_t, 3>, 3> counts{};
  std::vector<align::Polarity> art_pol, music_pol;
  std::size_t same = 0, below = 0;
  for (const auto& t : triplets) {
    ++counts[static_cast<std::size_t>(t.art_polarity)][static_cast<std::size_t>(t.music_polarity)];
    art_pol.push_back(t.art_polarity);
    music_pol.push_back(t.music_polarity);
    if (t.art_polarity == t.music_polarity) ++same;
    if (t.keyword_similarity < 0.25) ++below;
  }
  json means = json::array(), count_rows = json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    json mrow = json::array(), crow = json::array();
    for (std::size_t k = 0; k < 3; ++k) {
      mrow.push_back(heat[i][k] ? json(*heat[i][k]) : json(nullptr));
      crow.push_back(counts[i][k]);
    }
    means.push_back(mrow);
    count_rows.push_back(crow);
  }
  report["heatmap"] = {{"labels", {"positive", "neutral", "negative"}},
                       {"rows", "painting"},
                       {"columns", "music"},
                       {"mean_similarity", means},
                       {"counts", count_rows}};

  const auto share = [](const align::PolarityShare& s) {
    return json{{"positive", s.positive}, {"neutral", s.neutral}, {"negative", s.negative}};
  };
  report["polarity_distribution"] = {{"painting", share(align::polarity_distribution(art_pol))},
                                     {"music", share(align::polarity_distribution(music_pol))}};
  const double n = static_cast<double>(triplets.size());
  report["same_polarity_pct"] = 100.0 * static_cast<double>(same) / n;
  report["below_025_pct"] = 100.0 * static_cast<double>(below) / n;
  return report;
}

int cmd_stats(const Context& ctx) {
  const PathSettings& p = ctx.config.paths;
  const auto triplets = align::read_triplets(need_path(p.triplets, "triplets file"));
  if (triplets.empty()) throw InvalidArgument("triplet file " + p.triplets.string() + " is empty");
  const auto lexicon = optional_lexicon(p, ctx.err);
  emit_report(ctx, stats_report(triplets, ctx.config.histogram_bin_width, lexicon ? &*lexicon : nullptr));
  return kExitOk;
}

// ---------------------------------------------------------------------------

namespace {

nn::FusionInput conditioning(const align::EmbeddingTable& image, const align::EmbeddingTable& text,
                             const std::string& image_id, const std::string& text_id, const nn::ModelDims& dims) {
  const auto img = image.at(image_id);
  const auto txt = text.at(text_id);
  if (txt.size() != dims.residual_dim) {
    throw DimensionError(dimension_message("text embedding dimension (d_r)", dims.residual_dim, txt.size()));
  }
  if (img.size() + txt.size() != dims.input_dim) {
    throw DimensionError(
        dimension_message("image + text embedding dimension (d_x)", dims.input_dim, img.size() + txt.size()));
  }
  return nn::make_fusion_input(img, txt);
}

nn::Matrix load_target(const fs::path& path, const nn::ModelDims& dims) {
  mel::MelSpectrogram spec = mel::load_mels(path);
  if (spec.normalization == mel::Normalization::raw_db) spec = mel::normalize_unit(spec);
  if (spec.frames() != static_cast<int>(dims.frames) || spec.bands() != static_cast<int>(dims.mel_bands)) {
    throw DimensionError(path.string() + ": target is " + std::to_string(spec.frames()) + "x" +
                         std::to_string(spec.bands()) + ", model expects " + std::to_string(dims.frames) + "x" +
                         std::to_string(dims.mel_bands));
  }
  return spec.values.cast<double>();
}

std::size_t round_count(double n, double fraction) {
  return static_cast<std::size_t>(std::llround(n * fraction));
}

}  // namespace

int cmd_train(const Context& ctx) {
  const PipelineConfig& cfg = ctx.config;
  const PathSettings& p = cfg.paths;
  if (cfg.training.epochs == 0) throw InvalidArgument("training.epochs must be at least 1");
  const fs::path model_path = ctx.out_path ? *ctx.out_path : need_path(p.model, "--out model path");

  const auto triplets = align::read_triplets(need_path(p.triplets, "--triplets"));
  if (triplets.empty()) throw InvalidArgument("triplet file " + p.triplets.string() + " is empty");
  const auto image = align::load_emb(need_path(p.image_embeddings, "--image-emb"));
  const auto text = align::load_emb(need_path(p.text_embeddings, "--text-emb"));
  const fs::path& mels = need_path(p.mels_dir, "--mels");

  std::vector<nn::Sample> samples;
  samples.reserve(triplets.size());
  for (const auto& t : triplets) {
    nn::Sample s;
    s.input = conditioning(image, text, t.art_id, t.art_id, cfg.model);
    s.target = load_target(mels / (t.music_id + ".mels"), cfg.model);
    samples.push_back(std::move(s));
  }

  // Seeded 8:1:1-style split over triplet order.
  const std::size_t n = samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(cfg.training.seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  const std::size_t n_val = round_count(static_cast<double>(n), cfg.training.validation_fraction);
  const std::size_t n_test = round_count(static_cast<double>(n), cfg.training.test_fraction);
  if (n_val + n_test >= n) throw InvalidArgument("too few triplets (" + std::to_string(n) + ") for the split");
  const std::size_t n_train = n - n_val - n_test;

  std::vector<nn::Sample> train_set, val_set, test_set;
  json split = {{"train", json::array()}, {"validation", json::array()}, {"test", json::array()}};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    const char* part = k < n_train ? "train" : (k < n_train + n_val ? "validation" : "test");
    auto& dst = k < n_train ? train_set : (k < n_train + n_val ? val_set : test_set);
    dst.push_back(samples[i]);
    split[part].push_back(triplets[i].art_id);
  }

  nn::TrainConfig tc;
  tc.learning_rate = cfg.training.learning_rate;
  tc.batch_size = cfg.training.batch_size;
  tc.epochs = cfg.training.epochs;
  tc.seed = cfg.training.seed;
  const auto weights = nn::LossWeights::ramp(static_cast<int>(cfg.model.mel_bands));
  const nn::ModelParams init = nn::init_params(cfg.model, cfg.training.seed);
  const nn::TrainResult result = nn::train(init, train_set, val_set, tc, weights);

  std::ostringstream csv;
  csv << "epoch,train_loss,val_loss\n";
  for (const auto& e : result.trace) {
    csv << e.epoch << "," << format_g9(e.train_loss) << "," << (e.val_loss ? format_g9(*e.val_loss) : "") << "\n";
    ctx.out << "epoch " << e.epoch << ": train " << format_g9(e.train_loss);
    if (e.val_loss) ctx.out << ", validation " << format_g9(*e.val_loss);
    ctx.out << "\n";
  }

  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  nn::save_params_file(result.params, model_path);
  const fs::path csv_path = with_suffix(model_path, ".loss.csv");
  write_text(csv_path, csv.str());
  split["seed"] = cfg.training.seed;
  split["selected_epoch"] = result.selected_epoch;
  if (!test_set.empty()) split["test_loss"] = nn::dataset_loss(result.params, test_set, weights);
  const fs::path split_path = with_suffix(model_path, ".split.json");
  write_text(split_path, dump_json(split) + "\n");
  ctx.out << "selected epoch " << result.selected_epoch << "; wrote " << model_path.string() << ", "
          << csv_path.string() << ", " << split_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_generate(const Context& ctx, const GenerateArgs& args) {
  const PipelineConfig& cfg = ctx.config;
  const PathSettings& p = cfg.paths;
  const fs::path& wav_path = need_out(ctx, "output WAV path");
  if (args.image_id.empty() || args.text_id.empty()) throw UsageError("generate needs --id or --image-id/--text-id");

  const nn::ModelParams params = nn::load_params_file(need_path(p.model, "--model"));
  const auto image = align::load_emb(need_path(p.image_embeddings, "--image-emb"));
  const auto text = align::load_emb(need_path(p.text_embeddings, "--text-emb"));
  const nn::FusionInput input = conditioning(image, text, args.image_id, args.text_id, params.dims);

  mel::MelSpectrogram spec = nn::decode_mel(params, input);
  spec.config = cfg.mel;
  spec.config.n_mels = static_cast<int>(params.dims.mel_bands);
  spec.config.target_frames = static_cast<int>(params.dims.frames);

  audio::AudioBuffer wav = mel::griffin_lim_invert(spec, cfg.griffin_lim_iterations);
  float peak = 0.0f;
  for (float s : wav.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0f) {
    const float gain = 0.9f / peak;
    for (float& s : wav.samples) s *= gain;
  }

  if (wav_path.has_parent_path()) fs::create_directories(wav_path.parent_path());
  const fs::path mels_path = with_suffix(wav_path, ".mels");
  mel::save_mels(spec, mels_path);
  audio::write_wav(wav, wav_path, audio::SampleFormat::float32);
  const double seconds = static_cast<double>(wav.samples.size()) / wav.sample_rate_hz;
  char dur[32];
  std::snprintf(dur, sizeof(dur), "%.3f", seconds);
  ctx.out << "wrote " << mels_path.string() << " and " << wav_path.string() << " (" << dur << " s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

namespace {

// Pairs generated and reference MELS files: two files directly, or same-named files in two directories.
std::vector<std::pair<fs::path, fs::path>> mels_pairs(const fs::path& gen, const fs::path& ref) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(gen) != fs::is_directory(ref)) {
    throw UsageError("--generated and --reference must both be files or both be directories");
  }
  if (!fs::is_directory(gen)) {
    pairs.emplace_back(gen, ref);
    return pairs;
  }
  for (const auto& g : collect_files({gen}, ".mels")) {
    const fs::path r = ref / g.filename();
    if (!fs::exists(r)) throw InvalidArgument("no reference for " + g.filename().string() + " in " + ref.string());
    pairs.emplace_back(g, r);
  }
  if (pairs.empty()) throw InvalidArgument("no .mels files in " + gen.string());
  return pairs;
}

json pair_report(const std::vector<std::pair<std::string, double>>& values) {
  json pairs = json::array();
  double sum = 0.0;
  for (const auto& [name, v] : values) {
    pairs.push_back({{"name", name}, {"value", v}});
    sum += v;
  }
  return {{"pairs", pairs}, {"mean", sum / static_cast<double>(values.size())}};
}

}  // namespace

int cmd_eval(const Context& ctx, const EvalArgs& args) {
  static const std::vector<std::string> kMetrics = {"mcd", "lsd", "fad", "cossim"};
  std::vector<std::string> wanted;
  if (args.metric == "all") {
    wanted = kMetrics;
  } else if (std::find(kMetrics.begin(), kMetrics.end(), args.metric) != kMetrics.end()) {
    wanted = {args.metric};
  } else {
    throw UsageError("unknown metric '" + args.metric + "' (expected mcd, lsd, fad, cossim or all)");
  }
  const bool have_mels = !args.generated.empty() && !args.reference.empty();
  const bool have_emb = !args.generated_emb.empty() && !args.reference_emb.empty();
  if (args.metric == "all") {
    std::erase_if(wanted, [&](const std::string& m) { return (m == "mcd" || m == "lsd") ? !have_mels : !have_emb; });
    if (wanted.empty()) throw UsageError("eval needs --generated/--reference and/or --generated-emb/--reference-emb");
  } else if ((args.metric == "mcd" || args.metric == "lsd") && !have_mels) {
    throw UsageError(args.metric + " needs --generated and --reference MELS inputs");
  } else if ((args.metric == "fad" || args.metric == "cossim") && !have_emb) {
    throw UsageError(args.metric + " needs --generated-emb and --reference-emb EMB1 inputs");
  }

  json report;
  json table = {{"MCD", nullptr}, {"FAD", nullptr}, {"LSD", nullptr}, {"Cosine Similarity", nullptr}};
  const auto wants = [&](const char* m) { return std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };

  if (wants("mcd") || wants("lsd")) {
    std::vector<std::pair<std::string, double>> mcd_values, lsd_values;
    for (const auto& [g, r] : mels_pairs(args.generated, args.reference)) {
      const mel::MelSpectrogram a = to_db(mel::load_mels(g));
      const mel::MelSpectrogram b = to_db(mel::load_mels(r));
      const std::string name = g.filename().string();
      if (wants("mcd")) mcd_values.emplace_back(name, metrics::mcd(metrics::mel_cepstra(a), metrics::mel_cepstra(b)));
      if (wants("lsd")) lsd_values.emplace_back(name, metrics::lsd(a, b));
    }
    if (wants("mcd")) {
      report["mcd"] = pair_report(mcd_values);
      table["MCD"] = report["mcd"]["mean"];
    }
    if (wants("lsd")) {
      report["lsd"] = pair_report(lsd_values);
      table["LSD"] = report["lsd"]["mean"];
    }
  }

  if (wants("fad") || wants("cossim")) {
    const auto gen = align::load_emb(args.generated_emb);
    const auto ref = align::load_emb(args.reference_emb);
    if (gen.dim() != ref.dim()) throw DimensionError(dimension_message("reference embedding dimension", gen.dim(), ref.dim()));
    if (wants("fad")) {
      const auto to_matrix = [](const align::EmbeddingTable& t) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(t.size()), t.dim());
        for (std::size_t i = 0; i < t.size(); ++i) {
          const auto row = t.row(i);
          for (std::uint32_t k = 0; k < t.dim(); ++k) m(static_cast<Eigen::Index>(i), k) = row[k];
        }
        return m;
      };
      const double fad = metrics::frechet_distance(metrics::fit_gaussian(to_matrix(gen)),
                                                   metrics::fit_gaussian(to_matrix(ref)));
      report["fad"] = {{"value", fad}, {"generated_count", gen.size()}, {"reference_count", ref.size()}};
      table["FAD"] = fad;
    }
    if (wants("cossim")) {
      std::vector<std::pair<std::string, double>> values;
      for (const auto& id : gen.ids()) values.emplace_back(id, metrics::embedding_cosine(gen.at(id), ref.at(id)));
      if (values.empty()) throw InvalidArgument("no embeddings in " + args.generated_emb.string());
      report["cossim"] = pair_report(values);
      table["Cosine Similarity"] = report["cossim"]["mean"];
    }
  }
  report["table"] = table;
  emit_report(ctx, report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_rate_validate(const Context& ctx, const std::vector<fs::path>& inputs) {
  if (inputs.empty()) throw UsageError("rate-validate needs at least one file or directory");
  const auto files = collect_files(inputs, ".json");
  if (files.empty()) ctx.err << "warning: no .json files found\n";

  json entries = json::array();
  std::size_t valid = 0;
  for (const auto& f : files) {
    json entry = {{"path", f.string()}};
    try {
      std::ifstream in(f, std::ios::binary);
      if (!in) throw IoError("cannot open " + f.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      const auto result = metrics::validate_rating(ss.str());
      json violations = json::array();
      for (const auto& v : result.violations) {
        violations.push_back({{"path", v.path}, {"constraint", v.constraint}, {"found", v.found}});
      }
      entry["valid"] = result.ok();
      entry["violations"] = violations;
      if (result.ok()) ++valid;
    } catch (const Error& e) {
      entry["valid"] = false;
      entry["error"] = e.what();
    }
    entries.push_back(entry);
  }
  emit_report(ctx, {{"files", entries}, {"valid", valid}, {"invalid", files.size() - valid}});
  return valid == files.size() ? kExitOk : kExitDataError;
}

}  // namespace art2music::cli
