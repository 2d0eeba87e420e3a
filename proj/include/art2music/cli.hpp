#pragma once

// Command-line front end. The a2m binary is a thin wrapper around run_cli so the
// commands can be exercised in-process.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "art2music/align.hpp"
#include "art2music/melspec.hpp"
#include "art2music/neuralnet.hpp"
#include "json.hpp"

namespace art2music::cli {

enum ExitCode : int { kExitOk = 0, kExitDataError = 1, kExitUsageError = 2 };

/// Environment variable naming a default config file.
inline constexpr const char* kConfigEnv = "A2M_CONFIG";

struct TrainingSettings {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
};

struct PathSettings {
  std::filesystem::path art_manifest;
  std::filesystem::path music_manifest;
  std::filesystem::path art_embeddings;    // commentary embeddings used for matching
  std::filesystem::path music_embeddings;  // caption embeddings used for matching
  std::filesystem::path image_embeddings;  // model conditioning, keyed by art id
  std::filesystem::path text_embeddings;   // model conditioning, keyed by art id
  std::filesystem::path keyword_embeddings;
  std::filesystem::path positive_words;
  std::filesystem::path negative_words;
  std::filesystem::path stopwords;
  std::filesystem::path triplets;
  std::filesystem::path mels_dir;
  std::filesystem::path model;
};

struct PipelineConfig {
  mel::MelConfig mel;
  nn::ModelDims model;  // frames and mel_bands always follow `mel`
  TrainingSettings training;
  PathSettings paths;
  double histogram_bin_width = 0.1;
  int griffin_lim_iterations = 32;
};

/// Parses a JSON config document. Unknown sections or keys and wrongly typed values throw
/// InvalidArgument. Relative paths are resolved against `base_dir`.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// JSON report of the triplet statistics (histogram, heatmap, polarity shares, summary
/// percentages). When `lexicon` is given polarities are recomputed from the stored keywords.
nlohmann::json stats_report(std::span<const align::TripletRecord> triplets, double bin_width,
                            const align::SentimentLexicon* lexicon = nullptr);

/// Serialises with sorted keys and every float rounded to 9 significant digits.
std::string dump_json(const nlohmann::json& j);

/// `args` excludes the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace art2music::cli
