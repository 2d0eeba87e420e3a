#include "art2music/align.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include "json.hpp"

#include "art2music/binary_io.hpp"
#include "art2music/error.hpp"
#include "art2music/format.hpp"

namespace art2music::align {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Embedding tables

void EmbeddingTable::add(std::string id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw DimensionError(dimension_message("embedding '" + id + "' dimension", dim_, values.size()));
  }
  if (index_.contains(id)) throw InvalidArgument("duplicate embedding id '" + id + "'");
  for (float v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("embedding '" + id + "' has a non-finite entry");
  }
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), values.begin(), values.end());
}

std::span<const float> EmbeddingTable::at(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw InvalidArgument("missing embedding for id '" + std::string(id) + "'");
  return row(it->second);
}

std::vector<std::uint8_t> encode_emb(const EmbeddingTable& table) {
  ByteWriter w;
  w.raw("EMB1");
  w.u32(static_cast<std::uint32_t>(table.size()));
  w.u32(table.dim());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string& id = table.ids()[i];
    if (id.size() > 0xffff) throw InvalidArgument("embedding id longer than 65535 bytes");
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.raw(id);
    for (float v : table.row(i)) w.f32(v);
  }
  return w.take();
}

EmbeddingTable decode_emb(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "EMB1") throw FormatError("not an EMB1 stream (bad magic)");
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim == 0) throw FormatError("EMB1 stream declares dimension 0");
  EmbeddingTable table(dim);
  std::vector<float> values(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string id = r.str(len);
    for (auto& v : values) v = r.f32();
    table.add(std::move(id), values);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after EMB1 payload");
  return table;
}

void save_emb(const EmbeddingTable& table, const std::filesystem::path& path) {
  write_file_bytes(path, encode_emb(table));
}

EmbeddingTable load_emb(const std::filesystem::path& path) {
  EmbeddingTable t = decode_emb(read_file_bytes(path));
  t.set_provider_tag(path.filename().string());
  return t;
}

// ---------------------------------------------------------------------------
// Text utilities

const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::positive:
      return "positive";
    case Polarity::neutral:
      return "neutral";
    case Polarity::negative:
      return "negative";
  }
  return "neutral";
}

Polarity polarity_from_string(std::string_view s) {
  if (s == "positive") return Polarity::positive;
  if (s == "neutral") return Polarity::neutral;
  if (s == "negative") return Polarity::negative;
  throw InvalidArgument("unknown polarity '" + std::string(s) + "'");
}

namespace {

std::string lower_trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

SentimentLexicon SentimentLexicon::from_lists(std::span<const std::string> positive,
                                              std::span<const std::string> negative,
                                              std::span<const std::string> stopwords,
                                              std::vector<std::string>* ambiguous) {
  SentimentLexicon lex;
  for (const auto& w : positive) lex.positive.insert(lower_trim(w));
  for (const auto& w : negative) lex.negative.insert(lower_trim(w));
  for (const auto& w : stopwords) lex.stopwords.insert(lower_trim(w));
  std::vector<std::string> both;
  for (const auto& w : lex.positive) {
    if (lex.negative.contains(w)) both.push_back(w);
  }
  std::sort(both.begin(), both.end());
  for (const auto& w : both) {
    lex.positive.erase(w);
    lex.negative.erase(w);
  }
  if (ambiguous) *ambiguous = std::move(both);
  return lex;
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word list " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    std::string w = lower_trim(line);
    if (w.empty() || w.front() == ';') continue;
    words.push_back(std::move(w));
  }
  return words;
}

SentimentLexicon load_lexicon(const std::filesystem::path& positive, const std::filesystem::path& negative,
                              const std::optional<std::filesystem::path>& stopwords,
                              std::vector<std::string>* ambiguous) {
  const auto pos = read_word_list(positive);
  const auto neg = read_word_list(negative);
  const auto stop = stopwords ? read_word_list(*stopwords) : std::vector<std::string>{};
  return SentimentLexicon::from_lists(pos, neg, stop, ambiguous);
}

// ---------------------------------------------------------------------------
// Similarity and matching

namespace {

template <class T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw DimensionError(dimension_message("cosine operand dimension", a.size(), b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine similarity of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }
double cosine_similarity(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

std::vector<Match> match_indices(std::span<const ArtRecord> art, std::span<const MusicRecord> music,
                                 const EmbeddingTable& art_emb, const EmbeddingTable& music_emb) {
  if (art.empty() || music.empty()) throw InvalidArgument("matching needs non-empty art and music corpora");
  if (art_emb.dim() != music_emb.dim()) {
    throw DimensionError(dimension_message("music embedding dimension", art_emb.dim(), music_emb.dim()));
  }

  std::vector<std::string> missing;
  for (const auto& a : art) {
    if (!art_emb.contains(a.id)) missing.push_back(a.id);
  }
  for (const auto& m : music) {
    if (!music_emb.contains(m.id)) missing.push_back(m.id);
  }
  if (!missing.empty()) {
    std::string msg = "missing embedding for id(s):";
    for (const auto& id : missing) msg += " " + id;
    throw InvalidArgument(msg);
  }

  std::vector<std::span<const float>> mvec(music.size());
  std::vector<double> mnorm(music.size());
  for (std::size_t j = 0; j < music.size(); ++j) {
    mvec[j] = music_emb.at(music[j].id);
    mnorm[j] = norm(mvec[j]);
    if (mnorm[j] == 0.0) throw InvalidArgument("zero-norm embedding for music id '" + music[j].id + "'");
  }

  std::vector<Match> out(art.size());
  std::vector<double> sims(music.size());
  for (std::size_t i = 0; i < art.size(); ++i) {
    const auto a = art_emb.at(art[i].id);
    const double an = norm(a);
    if (an == 0.0) throw InvalidArgument("zero-norm embedding for art id '" + art[i].id + "'");
    double best = -2.0;
    for (std::size_t j = 0; j < music.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) dot += static_cast<double>(a[k]) * mvec[j][k];
      sims[j] = std::clamp(dot / (an * mnorm[j]), -1.0, 1.0);
      best = std::max(best, sims[j]);
    }
    std::size_t pick = music.size();
    for (std::size_t j = 0; j < music.size(); ++j) {
      if (sims[j] >= best - kTieTolerance && (pick == music.size() || music[j].id < music[pick].id)) pick = j;
    }
    out[i] = {pick, sims[pick]};
  }
  return out;
}

std::vector<TripletRecord> match_triplets(std::span<const ArtRecord> art, std::span<const MusicRecord> music,
                                          const EmbeddingTable& art_emb, const EmbeddingTable& music_emb) {
  const auto matches = match_indices(art, music, art_emb, music_emb);
  std::vector<TripletRecord> out(art.size());
  for (std::size_t i = 0; i < art.size(); ++i) {
    out[i].art_id = art[i].id;
    out[i].music_id = music[matches[i].music_index].id;
    out[i].similarity = matches[i].similarity;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompts and keywords

namespace {

std::string join(std::span<const std::string> items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

constexpr std::string_view kHeadCommentary = "Art Commentary: ";
constexpr std::string_view kHeadEmotion = ". Painting Emotion: ";
constexpr std::string_view kHeadAudio = ". Audio: ";
constexpr std::string_view kHeadKeywords = ". Audio keywords: ";

}  // namespace

std::string build_prompt(const ArtRecord& art, std::span<const std::string> emotion_keywords,
                         const MusicRecord& music) {
  std::string out;
  out += kHeadCommentary;
  out += art.commentary;
  out += kHeadEmotion;
  out += join(emotion_keywords, ", ");
  out += kHeadAudio;
  out += join(music.set_labels, ",");
  out += kHeadKeywords;
  out += join(music.caption_keywords, ", ");
  out += ".";
  return out;
}

std::optional<PromptFields> parse_prompt(std::string_view p) {
  if (!p.starts_with(kHeadCommentary) || !p.ends_with(".")) return std::nullopt;
  const std::size_t e = p.find(kHeadEmotion);
  if (e == std::string_view::npos) return std::nullopt;
  const std::size_t a = p.find(kHeadAudio, e + kHeadEmotion.size());
  if (a == std::string_view::npos) return std::nullopt;
  const std::size_t k = p.find(kHeadKeywords, a + kHeadAudio.size());
  if (k == std::string_view::npos) return std::nullopt;
  PromptFields f;
  f.commentary = p.substr(kHeadCommentary.size(), e - kHeadCommentary.size());
  f.painting_emotion = p.substr(e + kHeadEmotion.size(), a - e - kHeadEmotion.size());
  f.audio_labels = p.substr(a + kHeadAudio.size(), k - a - kHeadAudio.size());
  f.audio_keywords = p.substr(k + kHeadKeywords.size(), p.size() - 1 - k - kHeadKeywords.size());
  return f;
}

std::vector<std::string> extract_keywords(std::string_view text, const SentimentLexicon& lexicon,
                                          std::string_view emotion_label) {
  std::vector<std::string> out;
  const std::string label = lower_trim(emotion_label);
  if (!label.empty()) out.push_back(label);
  for (auto& tok : tokenize(text)) {
    if (!lexicon.is_sentiment(tok) || lexicon.stopwords.contains(tok)) continue;
    if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(std::move(tok));
  }
  return out;
}

Polarity classify_polarity(std::span<const std::string> keywords, const SentimentLexicon& lexicon) {
  int pos = 0, neg = 0;
  for (const auto& k : keywords) {
    const std::string w = lower_trim(k);
    if (lexicon.positive.contains(w)) ++pos;
    if (lexicon.negative.contains(w)) ++neg;
  }
  if (pos > neg) return Polarity::positive;
  if (neg > pos) return Polarity::negative;
  return Polarity::neutral;
}

std::vector<std::string> music_emotion_keywords(const MusicRecord& m, const SentimentLexicon& lexicon) {
  return extract_keywords(m.caption, lexicon, "");
}

// ---------------------------------------------------------------------------
// Keyword embeddings

namespace {

std::uint64_t hash_token(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finaliser
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

}  // namespace

std::vector<float> HashingEmbedder::embed(std::string_view text) const {
  std::vector<double> counts(kDim, 0.0);
  for (const auto& tok : tokenize(text)) counts[hash_token(tok, kSeed) % kDim] += 1.0;
  double n = 0.0;
  for (double c : counts) n += c * c;
  n = std::sqrt(n);
  std::vector<float> out(kDim, 0.0f);
  if (n > 0.0) {
    for (std::size_t i = 0; i < kDim; ++i) out[i] = static_cast<float>(counts[i] / n);
  }
  return out;
}

std::optional<std::vector<double>> KeywordEmbedder::mean_vector(std::span<const std::string> keywords) const {
  std::vector<double> sum;
  std::size_t used = 0;
  auto accumulate = [&](std::span<const float> v) {
    if (sum.empty()) sum.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
    ++used;
  };
  for (const auto& k : keywords) {
    if (table_ && table_->contains(k)) {
      accumulate(table_->at(k));
    } else if (!table_ || table_->dim() == HashingEmbedder::kDim) {
      const auto v = hasher_.embed(k);
      if (std::any_of(v.begin(), v.end(), [](float x) { return x != 0.0f; })) accumulate(v);
    }
  }
  if (used == 0) return std::nullopt;
  for (double& s : sum) s /= static_cast<double>(used);
  if (std::all_of(sum.begin(), sum.end(), [](double x) { return x == 0.0; })) return std::nullopt;
  return sum;
}

double keyword_similarity(std::span<const std::string> art_keywords, std::span<const std::string> music_keywords,
                          const KeywordEmbedder& embedder) {
  const auto a = embedder.mean_vector(art_keywords);
  const auto b = embedder.mean_vector(music_keywords);
  if (!a || !b) return 0.0;
  return cosine_similarity(std::span<const double>(*a), std::span<const double>(*b));
}

void annotate_triplets(std::vector<TripletRecord>& triplets, std::span<const ArtRecord> art,
                       std::span<const MusicRecord> music, const SentimentLexicon& lexicon,
                       const KeywordEmbedder& embedder) {
  std::unordered_map<std::string, const ArtRecord*> art_by_id;
  std::unordered_map<std::string, const MusicRecord*> music_by_id;
  for (const auto& a : art) art_by_id.emplace(a.id, &a);
  for (const auto& m : music) music_by_id.emplace(m.id, &m);
  for (auto& t : triplets) {
    const auto ai = art_by_id.find(t.art_id);
    const auto mi = music_by_id.find(t.music_id);
    if (ai == art_by_id.end()) throw InvalidArgument("triplet refers to unknown art id '" + t.art_id + "'");
    if (mi == music_by_id.end()) throw InvalidArgument("triplet refers to unknown music id '" + t.music_id + "'");
    const ArtRecord& a = *ai->second;
    const MusicRecord& m = *mi->second;
    t.art_keywords = extract_keywords(a.commentary, lexicon, a.emotion_label);
    t.music_keywords = music_emotion_keywords(m, lexicon);
    t.art_polarity = classify_polarity(t.art_keywords, lexicon);
    t.music_polarity = classify_polarity(t.music_keywords, lexicon);
    t.composite_prompt = build_prompt(a, t.art_keywords, m);
    t.keyword_similarity = keyword_similarity(t.art_keywords, t.music_keywords, embedder);
  }
}

// ---------------------------------------------------------------------------
// Statistics

std::vector<HistogramBin> similarity_histogram(std::span<const TripletRecord> triplets, double bin_width) {
  if (triplets.empty()) throw InvalidArgument("similarity histogram of an empty triplet set");
  if (!(bin_width > 0.0 && bin_width <= 2.0)) throw InvalidArgument("bin width must lie in (0, 2]");
  // The small slack keeps values sitting on a bin edge (e.g. 0.3 with width 0.1) in the
  // bin that starts there despite binary rounding.
  constexpr double slack = 1e-9;
  const auto bins = static_cast<std::size_t>(std::ceil(2.0 / bin_width - slack));
  std::vector<HistogramBin> hist(bins);
  for (std::size_t b = 0; b < bins; ++b) hist[b].start = -1.0 + static_cast<double>(b) * bin_width;
  for (const auto& t : triplets) {
    const double pos = std::floor((t.keyword_similarity + 1.0) / bin_width + slack);
    const auto idx = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    ++hist[idx].count;
  }
  return hist;
}

Heatmap polarity_heatmap(std::span<const TripletRecord> triplets) {
  if (triplets.empty()) throw InvalidArgument("polarity heatmap of an empty triplet set");
  std::array<std::array<double, 3>, 3> sum{};
  std::array<std::array<std::size_t, 3>, 3> count{};
  for (const auto& t : triplets) {
    const auto p = static_cast<std::size_t>(t.art_polarity);
    const auto q = static_cast<std::size_t>(t.music_polarity);
    sum[p][q] += t.keyword_similarity;
    ++count[p][q];
  }
  Heatmap h{};
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t q = 0; q < 3; ++q) {
      if (count[p][q] > 0) h[p][q] = sum[p][q] / static_cast<double>(count[p][q]);
    }
  }
  return h;
}

PolarityShare polarity_distribution(std::span<const Polarity> labels) {
  if (labels.empty()) throw InvalidArgument("polarity distribution of an empty record set");
  std::array<std::size_t, 3> counts{};
  for (Polarity p : labels) ++counts[static_cast<std::size_t>(p)];
  const double n = static_cast<double>(labels.size());
  std::array<int, 3> pct{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = 100.0 * static_cast<double>(counts[i]) / n;
    pct[i] = static_cast<int>(std::floor(exact));
    frac[i] = exact - pct[i];
    assigned += pct[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < 100; ++k, ++assigned) ++pct[order[k % 3]];
  return {pct[0], pct[1], pct[2]};
}

PolarityShare polarity_distribution(std::span<const ArtRecord> records, const SentimentLexicon& lexicon) {
  std::vector<Polarity> labels;
  labels.reserve(records.size());
  for (const auto& r : records) {
    labels.push_back(classify_polarity(extract_keywords(r.commentary, lexicon, r.emotion_label), lexicon));
  }
  return polarity_distribution(labels);
}

PolarityShare polarity_distribution(std::span<const MusicRecord> records, const SentimentLexicon& lexicon) {
  std::vector<Polarity> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(classify_polarity(music_emotion_keywords(r, lexicon), lexicon));
  return polarity_distribution(labels);
}

// ---------------------------------------------------------------------------
// JSON-lines I/O

namespace {

std::string id_field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  const json& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw FormatError(std::string("field '") + key + "' must be a string");
}

std::string string_field(const json& j, const char* key, bool required) {
  if (!j.contains(key) || j.at(key).is_null()) {
    if (required) throw FormatError(std::string("missing field '") + key + "'");
    return {};
  }
  if (!j.at(key).is_string()) {
    throw FormatError(std::string("field '") + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

// Accepts either a JSON array of strings or one comma-separated string.
std::vector<std::string> list_field(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key) || j.at(key).is_null()) return out;
  const json& v = j.at(key);
  if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) {
        throw FormatError(std::string("field '") + key + "' must hold strings");
      }
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  if (!v.is_string()) {
    throw FormatError(std::string("field '") + key + "' must be a list or string");
  }
  std::string_view s = v.get_ref<const std::string&>();
  while (!s.empty()) {
    const std::size_t c = s.find(',');
    std::string_view item = s.substr(0, c);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

template <class Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected an object");
    try {
      fn(j);
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<ArtRecord> read_art_manifest(const std::filesystem::path& path) {
  std::vector<ArtRecord> out;
  for_each_json_line(path, [&](const json& j) {
    ArtRecord r;
    r.id = id_field(j, "id");
    r.image_path = string_field(j, "image", false);
    r.commentary = string_field(j, "commentary", true);
    r.emotion_label = string_field(j, "emotion", false);
    if (r.commentary.empty()) throw FormatError("empty commentary");
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<MusicRecord> read_music_manifest(const std::filesystem::path& path) {
  std::vector<MusicRecord> out;
  for_each_json_line(path, [&](const json& j) {
    MusicRecord r;
    r.id = id_field(j, "id");
    r.audio_path = string_field(j, "audio", false);
    r.caption = string_field(j, "caption", true);
    r.set_labels = list_field(j, "set_labels");
    r.caption_keywords = list_field(j, "keywords");
    if (r.caption.empty()) throw FormatError("empty caption");
    out.push_back(std::move(r));
  });
  return out;
}

std::string triplet_to_json_line(const TripletRecord& t) {
  json j;
  j["art_id"] = t.art_id;
  j["music_id"] = t.music_id;
  j["similarity"] = round_significant(t.similarity);
  j["keyword_similarity"] = round_significant(t.keyword_similarity);
  j["composite_prompt"] = t.composite_prompt;
  j["art_keywords"] = t.art_keywords;
  j["music_keywords"] = t.music_keywords;
  j["art_polarity"] = to_string(t.art_polarity);
  j["music_polarity"] = to_string(t.music_polarity);
  return j.dump();
}

TripletRecord triplet_from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("triplet line: ") + e.what());
  }
  TripletRecord t;
  try {
    t.art_id = j.at("art_id").get<std::string>();
    t.music_id = j.at("music_id").get<std::string>();
    t.similarity = j.at("similarity").get<double>();
    t.keyword_similarity = j.value("keyword_similarity", 0.0);
    t.composite_prompt = j.value("composite_prompt", std::string{});
    t.art_keywords = j.value("art_keywords", std::vector<std::string>{});
    t.music_keywords = j.value("music_keywords", std::vector<std::string>{});
    t.art_polarity = polarity_from_string(j.value("art_polarity", std::string{"neutral"}));
    t.music_polarity = polarity_from_string(j.value("music_polarity", std::string{"neutral"}));
  } catch (const json::exception& e) {
    throw FormatError(std::string("triplet line: ") + e.what());
  }
  return t;
}

void write_triplets(const std::filesystem::path& path, std::span<const TripletRecord> triplets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : triplets) out << triplet_to_json_line(t) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<TripletRecord> read_triplets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<TripletRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(triplet_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace art2music::align
