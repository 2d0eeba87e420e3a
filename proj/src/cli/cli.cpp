#include <CLI11.hpp>
#include <cstdlib>
#include <ostream>

#include "cli/commands.hpp"

namespace art2music::cli {

namespace fs = std::filesystem;

namespace {

struct PathFlags {
  std::string art, music, art_emb, music_emb, image_emb, text_emb, keyword_emb;
  std::string positive, negative, stopwords, triplets, mels, model;
};

void apply(const std::string& flag, fs::path& dst) {
  if (!flag.empty()) dst = flag;
}

void apply_paths(const PathFlags& f, PathSettings& p) {
  apply(f.art, p.art_manifest);
  apply(f.music, p.music_manifest);
  apply(f.art_emb, p.art_embeddings);
  apply(f.music_emb, p.music_embeddings);
  apply(f.image_emb, p.image_embeddings);
  apply(f.text_emb, p.text_embeddings);
  apply(f.keyword_emb, p.keyword_embeddings);
  apply(f.positive, p.positive_words);
  apply(f.negative, p.negative_words);
  apply(f.stopwords, p.stopwords);
  apply(f.triplets, p.triplets);
  apply(f.mels, p.mels_dir);
  apply(f.model, p.model);
}

void add_lexicon_flags(CLI::App* sub, PathFlags& f) {
  sub->add_option("--positive", f.positive, "Positive word list");
  sub->add_option("--negative", f.negative, "Negative word list");
  sub->add_option("--stopwords", f.stopwords, "Stopword list");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Art-to-music toolkit: spectrograms, alignment, training, generation and evaluation", "a2m"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  app.add_option("--config", config_path, "JSON config file (default: $A2M_CONFIG)");
  app.add_option("--seed", seed, "Override training.seed");
  app.add_option("--out", out_path, "Output file or directory");

  PathFlags pf;
  std::vector<std::string> inputs;
  GenerateArgs gen;
  std::string gen_id;
  std::optional<int> iterations;
  EvalArgs ev;
  std::string gen_mels, ref_mels, gen_emb, ref_emb;
  std::optional<double> bin_width;

  auto* melspec = app.add_subcommand("melspec", "Convert WAV files to fixed-length normalised MELS files");
  melspec->add_option("inputs", inputs, "WAV files or directories")->required();

  auto* align_cmd = app.add_subcommand("align", "Match artworks to music clips and write triplets (JSONL)");
  align_cmd->add_option("--art", pf.art, "Art manifest (JSONL)");
  align_cmd->add_option("--music", pf.music, "Music manifest (JSONL)");
  align_cmd->add_option("--art-emb", pf.art_emb, "Commentary embeddings (EMB1)");
  align_cmd->add_option("--music-emb", pf.music_emb, "Caption embeddings (EMB1)");
  align_cmd->add_option("--keyword-emb", pf.keyword_emb, "Keyword embeddings (EMB1)");
  add_lexicon_flags(align_cmd, pf);

  auto* stats = app.add_subcommand("stats", "Similarity histogram, polarity heatmap and shares as JSON");
  stats->add_option("triplets", pf.triplets, "Triplet file (JSONL)");
  stats->add_option("--bin-width", bin_width, "Histogram bin width");
  add_lexicon_flags(stats, pf);

  auto* train = app.add_subcommand("train", "Train the spectrogram generator; --out names the model file");
  train->add_option("--triplets", pf.triplets, "Triplet file (JSONL)");
  train->add_option("--image-emb", pf.image_emb, "Image embeddings keyed by art id (EMB1)");
  train->add_option("--text-emb", pf.text_emb, "Text embeddings keyed by art id (EMB1)");
  train->add_option("--mels", pf.mels, "Directory of <music_id>.mels targets");

  auto* generate = app.add_subcommand("generate", "Predict a spectrogram and reconstruct a waveform; --out names the WAV");
  generate->add_option("--model", pf.model, "Model file (A2MP)");
  generate->add_option("--image-emb", pf.image_emb, "Image embeddings (EMB1)");
  generate->add_option("--text-emb", pf.text_emb, "Text embeddings (EMB1)");
  generate->add_option("--id", gen_id, "Embedding id used for both image and text");
  generate->add_option("--image-id", gen.image_id, "Image embedding id");
  generate->add_option("--text-id", gen.text_id, "Text embedding id");
  generate->add_option("--iterations", iterations, "Griffin-Lim iterations");

  auto* eval = app.add_subcommand("eval", "Compare generated and reference outputs");
  eval->add_option("--metric", ev.metric, "mcd, lsd, fad, cossim or all")
      ->check(CLI::IsMember({"mcd", "lsd", "fad", "cossim", "all"}));
  eval->add_option("--generated", gen_mels, "Generated MELS file or directory");
  eval->add_option("--reference", ref_mels, "Reference MELS file or directory");
  eval->add_option("--generated-emb", gen_emb, "Generated-audio embeddings (EMB1)");
  eval->add_option("--reference-emb", ref_emb, "Reference-audio embeddings (EMB1)");

  auto* rate = app.add_subcommand("rate-validate", "Check rating outputs against the rating schema");
  rate->add_option("inputs", inputs, "JSON files or directories")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsageError;
  }

  PipelineConfig config;
  try {
    if (config_path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env && *env) config_path = env;
    }
    if (!config_path.empty()) config = load_config(config_path);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsageError;
  }
  if (seed) config.training.seed = *seed;
  if (bin_width) config.histogram_bin_width = *bin_width;
  if (iterations) config.griffin_lim_iterations = *iterations;
  apply_paths(pf, config.paths);

  Context ctx{config, out_path.empty() ? std::nullopt : std::optional<fs::path>(out_path), out, err};
  try {
    if (*melspec) return cmd_melspec(ctx, {inputs.begin(), inputs.end()});
    if (*align_cmd) return cmd_align(ctx);
    if (*stats) return cmd_stats(ctx);
    if (*train) return cmd_train(ctx);
    if (*generate) {
      if (!gen_id.empty()) {
        if (gen.image_id.empty()) gen.image_id = gen_id;
        if (gen.text_id.empty()) gen.text_id = gen_id;
      }
      return cmd_generate(ctx, gen);
    }
    if (*eval) {
      ev.generated = gen_mels;
      ev.reference = ref_mels;
      ev.generated_emb = gen_emb;
      ev.reference_emb = ref_emb;
      return cmd_eval(ctx, ev);
    }
    if (*rate) return cmd_rate_validate(ctx, {inputs.begin(), inputs.end()});
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  return kExitUsageError;
}

}  // namespace art2music::cli
