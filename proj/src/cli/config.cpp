#include <algorithm>
#include <fstream>
#include <sstream>

#include "art2music/cli.hpp"
#include "art2music/error.hpp"

namespace art2music::cli {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InvalidArgument("config: section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& dst) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw InvalidArgument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->get<long long>() < 0) throw InvalidArgument("expected a non-negative integer");
        }
        dst = it->get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw InvalidArgument("expected a number");
        dst = it->get<T>();
      } else {
        if (!it->is_string()) throw InvalidArgument("expected a string");
        dst = it->get<std::string>();
      }
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  void path(const char* key, std::filesystem::path& dst, const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    std::filesystem::path p(s);
    dst = (p.is_relative() && !base.empty()) ? base / p : p;
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        throw InvalidArgument("config: unknown key '" + name_ + "." + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> seen_;
};

}  // namespace

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config: malformed JSON at byte ") + std::to_string(e.byte));
  }
  if (!doc.is_object()) throw InvalidArgument("config: top level must be an object");

  PipelineConfig cfg;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& name = it.key();
    Section s(it.value(), name);
    if (name == "mel") {
      s.get("sample_rate", cfg.mel.sample_rate_hz);
      s.get("n_fft", cfg.mel.fft_size);
      s.get("hop_length", cfg.mel.hop_length);
      s.get("n_mels", cfg.mel.n_mels);
      s.get("target_frames", cfg.mel.target_frames);
      s.get("fmin", cfg.mel.fmin_hz);
      s.get("fmax", cfg.mel.fmax_hz);
    } else if (name == "model") {
      s.get("d_x", cfg.model.input_dim);
      s.get("d_h", cfg.model.fused_dim);
      s.get("d_r", cfg.model.residual_dim);
      s.get("d_in", cfg.model.decoder_input_dim);
      s.get("hidden", cfg.model.hidden);
      s.get("layers", cfg.model.layers);
    } else if (name == "training") {
      s.get("learning_rate", cfg.training.learning_rate);
      s.get("batch_size", cfg.training.batch_size);
      s.get("epochs", cfg.training.epochs);
      s.get("seed", cfg.training.seed);
      s.get("validation_fraction", cfg.training.validation_fraction);
      s.get("test_fraction", cfg.training.test_fraction);
    } else if (name == "paths") {
      PathSettings& p = cfg.paths;
      s.path("art_manifest", p.art_manifest, base_dir);
      s.path("music_manifest", p.music_manifest, base_dir);
      s.path("art_embeddings", p.art_embeddings, base_dir);
      s.path("music_embeddings", p.music_embeddings, base_dir);
      s.path("image_embeddings", p.image_embeddings, base_dir);
      s.path("text_embeddings", p.text_embeddings, base_dir);
      s.path("keyword_embeddings", p.keyword_embeddings, base_dir);
      s.path("positive_words", p.positive_words, base_dir);
      s.path("negative_words", p.negative_words, base_dir);
      s.path("stopwords", p.stopwords, base_dir);
      s.path("triplets", p.triplets, base_dir);
      s.path("mels_dir", p.mels_dir, base_dir);
      s.path("model", p.model, base_dir);
    } else if (name == "stats") {
      s.get("bin_width", cfg.histogram_bin_width);
    } else if (name == "generate") {
      s.get("iterations", cfg.griffin_lim_iterations);
    } else {
      throw InvalidArgument("config: unknown section '" + name + "'");
    }
    s.reject_unknown();
  }

  cfg.mel.validate();
  cfg.model.frames = static_cast<std::uint32_t>(cfg.mel.target_frames);
  cfg.model.mel_bands = static_cast<std::uint32_t>(cfg.mel.n_mels);
  cfg.model.validate();
  const TrainingSettings& t = cfg.training;
  if (!(t.learning_rate > 0.0)) throw InvalidArgument("config: training.learning_rate must be positive");
  if (t.batch_size == 0) throw InvalidArgument("config: training.batch_size must be positive");
  if (t.validation_fraction < 0.0 || t.test_fraction < 0.0 || t.validation_fraction + t.test_fraction >= 1.0) {
    throw InvalidArgument("config: validation and test fractions must be non-negative and sum below 1");
  }
  if (!(cfg.histogram_bin_width > 0.0 && cfg.histogram_bin_width <= 2.0)) {
    throw InvalidArgument("config: stats.bin_width must lie in (0, 2]");
  }
  if (cfg.griffin_lim_iterations < 1) throw InvalidArgument("config: generate.iterations must be positive");
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace art2music::cli
