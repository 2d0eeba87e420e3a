#pragma once

// Weak alignment of two independent corpora (artworks with commentary, music clips
// with captions) by text-embedding cosine similarity, plus the keyword, polarity and
// similarity statistics computed over the resulting triplets.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace art2music::align {

/// Fixed-dimension float vectors keyed by id, in insertion order.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::uint32_t dim, std::string provider_tag = {})
      : dim_(dim), provider_tag_(std::move(provider_tag)) {}

  /// Throws on a duplicate id, wrong dimension or non-finite entry.
  void add(std::string id, std::span<const float> values);

  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }
  /// Throws InvalidArgument naming the id when absent.
  std::span<const float> at(std::string_view id) const;
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& provider_tag() const noexcept { return provider_tag_; }
  void set_provider_tag(std::string tag) { provider_tag_ = std::move(tag); }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_ == b.data_;
  }

 private:
  std::uint32_t dim_ = 0;
  std::string provider_tag_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// EMB1 container.
std::vector<std::uint8_t> encode_emb(const EmbeddingTable& table);
EmbeddingTable decode_emb(std::span<const std::uint8_t> bytes);
void save_emb(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_emb(const std::filesystem::path& path);

struct ArtRecord {
  std::string id;
  std::string image_path;
  std::string commentary;
  std::string emotion_label;
};

struct MusicRecord {
  std::string id;
  std::string audio_path;
  std::string caption;
  std::vector<std::string> set_labels;
  std::vector<std::string> caption_keywords;
};

enum class Polarity { positive = 0, neutral = 1, negative = 2 };

const char* to_string(Polarity p);
Polarity polarity_from_string(std::string_view s);

struct TripletRecord {
  std::string art_id;
  std::string music_id;
  double similarity = 0.0;          // cosine of the two text embeddings
  double keyword_similarity = 0.0;  // cosine of the mean keyword embeddings (0 when a side has none)
  std::string composite_prompt;
  std::vector<std::string> art_keywords;
  std::vector<std::string> music_keywords;
  Polarity art_polarity = Polarity::neutral;
  Polarity music_polarity = Polarity::neutral;
};

struct SentimentLexicon {
  std::unordered_set<std::string> positive;
  std::unordered_set<std::string> negative;
  std::unordered_set<std::string> stopwords;

  /// Builds a lexicon; words listed as both positive and negative are dropped from both
  /// sets and returned through `ambiguous` (if given).
  static SentimentLexicon from_lists(std::span<const std::string> positive, std::span<const std::string> negative,
                                     std::span<const std::string> stopwords,
                                     std::vector<std::string>* ambiguous = nullptr);

  bool is_sentiment(const std::string& w) const { return positive.contains(w) || negative.contains(w); }
};

/// One word per line; blank lines and lines starting with ';' are skipped; words lowercased.
std::vector<std::string> read_word_list(const std::filesystem::path& path);

SentimentLexicon load_lexicon(const std::filesystem::path& positive, const std::filesystem::path& negative,
                              const std::optional<std::filesystem::path>& stopwords,
                              std::vector<std::string>* ambiguous = nullptr);

/// Lowercased maximal runs of ASCII letters.
std::vector<std::string> tokenize(std::string_view text);

double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Similarities closer than this to the best score count as ties (broken by smallest id).
inline constexpr double kTieTolerance = 1e-12;

struct Match {
  std::size_t music_index = 0;
  double similarity = 0.0;
};

/// For each art record, the music record whose embedding is most cosine-similar to the art
/// record's embedding. Music entries may be reused.
std::vector<Match> match_indices(std::span<const ArtRecord> art, std::span<const MusicRecord> music,
                                 const EmbeddingTable& art_emb, const EmbeddingTable& music_emb);

std::vector<TripletRecord> match_triplets(std::span<const ArtRecord> art, std::span<const MusicRecord> music,
                                          const EmbeddingTable& art_emb, const EmbeddingTable& music_emb);

/// "Art Commentary: <c>. Painting Emotion: <k1, k2>. Audio: <l1,l2>. Audio keywords: <k1, k2>."
std::string build_prompt(const ArtRecord& art, std::span<const std::string> emotion_keywords,
                         const MusicRecord& music);

struct PromptFields {
  std::string commentary;
  std::string painting_emotion;
  std::string audio_labels;
  std::string audio_keywords;
};

/// Inverse of build_prompt for fields that do not contain the field headers.
std::optional<PromptFields> parse_prompt(std::string_view prompt);

std::vector<std::string> extract_keywords(std::string_view text, const SentimentLexicon& lexicon,
                                          std::string_view emotion_label);

Polarity classify_polarity(std::span<const std::string> keywords, const SentimentLexicon& lexicon);

/// Deterministic feature-hashed bag-of-words embedder (256 dims, L2-normalised). Only a
/// stand-in for an external sentence encoder.
class HashingEmbedder {
 public:
  static constexpr std::uint32_t kDim = 256;
  static constexpr std::uint64_t kSeed = 0x9e3779b97f4a7c15ULL;

  std::vector<float> embed(std::string_view text) const;
};

/// Source of keyword vectors for the keyword-similarity statistic.
class KeywordEmbedder {
 public:
  /// Uses the hashing embedder.
  KeywordEmbedder() = default;
  /// Looks words up in `table`; unknown words fall back to the hashing embedder only when
  /// the table's dimension matches it, otherwise they are skipped.
  explicit KeywordEmbedder(const EmbeddingTable* table) : table_(table) {}

  std::optional<std::vector<double>> mean_vector(std::span<const std::string> keywords) const;

 private:
  const EmbeddingTable* table_ = nullptr;
  HashingEmbedder hasher_;
};

/// Cosine between the two sides' mean keyword vectors; 0 when either side has no vector.
double keyword_similarity(std::span<const std::string> art_keywords, std::span<const std::string> music_keywords,
                          const KeywordEmbedder& embedder);

/// Fills keywords, polarities, the composite prompt and keyword similarity of matched triplets.
void annotate_triplets(std::vector<TripletRecord>& triplets, std::span<const ArtRecord> art,
                       std::span<const MusicRecord> music, const SentimentLexicon& lexicon,
                       const KeywordEmbedder& embedder);

struct HistogramBin {
  double start = 0.0;
  std::size_t count = 0;
};

/// Fixed-width bins covering [-1, 1] of the keyword similarity.
std::vector<HistogramBin> similarity_histogram(std::span<const TripletRecord> triplets, double bin_width);

using Heatmap = std::array<std::array<std::optional<double>, 3>, 3>;

/// Mean keyword similarity per (art polarity, music polarity); empty cells stay unset.
Heatmap polarity_heatmap(std::span<const TripletRecord> triplets);

struct PolarityShare {
  int positive = 0;
  int neutral = 0;
  int negative = 0;
};

/// Integer percentages (largest-remainder rounding, so they always sum to 100).
PolarityShare polarity_distribution(std::span<const Polarity> labels);
PolarityShare polarity_distribution(std::span<const ArtRecord> records, const SentimentLexicon& lexicon);
PolarityShare polarity_distribution(std::span<const MusicRecord> records, const SentimentLexicon& lexicon);

// JSON-lines manifests and triplet files.
std::vector<ArtRecord> read_art_manifest(const std::filesystem::path& path);
std::vector<MusicRecord> read_music_manifest(const std::filesystem::path& path);
std::string triplet_to_json_line(const TripletRecord& t);
TripletRecord triplet_from_json_line(std::string_view line);
void write_triplets(const std::filesystem::path& path, std::span<const TripletRecord> triplets);
std::vector<TripletRecord> read_triplets(const std::filesystem::path& path);

/// Music keywords used for polarity: lexicon hits in the caption.
std::vector<std::string> music_emotion_keywords(const MusicRecord& m, const SentimentLexicon& lexicon);

}  // namespace art2music::align
