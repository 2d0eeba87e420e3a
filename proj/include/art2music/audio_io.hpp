#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace art2music::audio {

/// Mono PCM signal. Samples are finite and lie in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate_hz = 22050;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate_hz; }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

enum class SampleFormat { pcm16, float32 };

inline constexpr std::uint16_t kWaveFormatPcm = 0x0001;
inline constexpr std::uint16_t kWaveFormatFloat = 0x0003;
inline constexpr std::uint16_t kWaveFormatExtensible = 0xFFFE;

/// Decodes a RIFF/WAVE byte stream holding PCM16 or IEEE float32 samples.
/// Multi-channel frames are averaged to mono.
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);

/// Encodes with the canonical 44-byte header.
std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer, SampleFormat format);

AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path, SampleFormat format);

/// Windowed-sinc polyphase resampler (Kaiser window, beta 8.6, 64 taps per phase).
/// Output length is round(n * target / source); output is hard-clipped to [-1, 1].
AudioBuffer resample(const AudioBuffer& buffer, int target_hz);

}  // namespace art2music::audio
