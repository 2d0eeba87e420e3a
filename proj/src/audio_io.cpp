#include "art2music/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

#include "art2music/binary_io.hpp"
#include "art2music/error.hpp"

namespace art2music::audio {

namespace {

struct FmtChunk {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

FmtChunk parse_fmt(ByteReader& r, std::uint32_t size) {
  if (size < 16) throw FormatError("fmt chunk too small (" + std::to_string(size) + " bytes)");
  FmtChunk fmt;
  fmt.tag = r.u16();
  fmt.channels = r.u16();
  fmt.sample_rate = r.u32();
  r.u32();  // byte rate
  fmt.block_align = r.u16();
  fmt.bits = r.u16();
  std::uint32_t consumed = 16;
  if (fmt.tag == kWaveFormatExtensible && size >= 40) {
    r.u16();  // cbSize
    r.u16();  // valid bits
    r.u32();  // channel mask
    // The first two bytes of the sub-format GUID carry the plain format tag.
    fmt.tag = r.u16();
    r.skip(14);
    consumed = 40;
  }
  r.skip(size - consumed);
  return fmt;
}

float clamp_unit(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

}  // namespace

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 12) throw FormatError("malformed RIFF header: file shorter than 12 bytes");
  if (r.str(4) != "RIFF") throw FormatError("malformed RIFF header: missing RIFF magic");
  r.u32();
  if (r.str(4) != "WAVE") throw FormatError("malformed RIFF header: missing WAVE form type");

  std::optional<FmtChunk> fmt;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  while (r.remaining() >= 8 && !have_data) {
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      fmt = parse_fmt(r, size);
    } else if (id == "data") {
      if (!fmt) throw FormatError("malformed RIFF header: data chunk precedes fmt chunk");
      // Tolerate writers that leave the data size unpatched or overstated.
      const std::size_t n = std::min<std::size_t>(size, r.remaining());
      data = bytes.subspan(r.offset(), n);
      have_data = true;
    } else {
      r.skip(std::min<std::size_t>(size, r.remaining()));
    }
    if (!have_data && (size & 1u) && r.remaining() > 0) r.skip(1);
  }
  if (!fmt) throw FormatError("malformed RIFF header: no fmt chunk");
  if (!have_data) throw FormatError("malformed RIFF header: no data chunk");

  if (fmt->tag != kWaveFormatPcm && fmt->tag != kWaveFormatFloat) {
    throw UnsupportedCodecError(fmt->tag, "only PCM16 and IEEE float32 are supported");
  }
  if (fmt->tag == kWaveFormatPcm && fmt->bits != 16) {
    throw UnsupportedCodecError(fmt->tag, "PCM with " + std::to_string(fmt->bits) + " bits per sample");
  }
  if (fmt->tag == kWaveFormatFloat && fmt->bits != 32) {
    throw UnsupportedCodecError(fmt->tag, "float with " + std::to_string(fmt->bits) + " bits per sample");
  }
  if (fmt->channels == 0) throw FormatError("malformed fmt chunk: zero channels");
  if (fmt->sample_rate == 0) throw FormatError("malformed fmt chunk: zero sample rate");

  const std::size_t bytes_per_sample = fmt->bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt->channels;
  const std::size_t frames = data.size() / frame_bytes;

  AudioBuffer out;
  out.sample_rate_hz = static_cast<int>(fmt->sample_rate);
  out.samples.resize(frames);
  ByteReader d(data);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < fmt->channels; ++c) {
      double v = 0.0;
      if (fmt->tag == kWaveFormatPcm) {
        v = d.i16() / 32768.0;
      } else {
        v = d.f32();
        if (!std::isfinite(v)) {
          throw FormatError("non-finite sample at frame " + std::to_string(i));
        }
      }
      acc += v;
    }
    out.samples[i] = clamp_unit(fmt->channels == 1 ? acc : acc / fmt->channels);
  }
  return out;
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer, SampleFormat format) {
  if (buffer.empty()) throw InvalidArgument("cannot write an empty audio buffer");
  if (buffer.sample_rate_hz <= 0) throw InvalidArgument("sample rate must be positive");

  const std::uint16_t bits = format == SampleFormat::pcm16 ? 16 : 32;
  const std::uint16_t tag = format == SampleFormat::pcm16 ? kWaveFormatPcm : kWaveFormatFloat;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(buffer.size() * (bits / 8));
  const auto rate = static_cast<std::uint32_t>(buffer.sample_rate_hz);

  ByteWriter w;
  w.bytes().reserve(44 + data_bytes);
  w.raw("RIFF");
  w.u32(36 + data_bytes);
  w.raw("WAVE");
  w.raw("fmt ");
  w.u32(16);
  w.u16(tag);
  w.u16(1);
  w.u32(rate);
  w.u32(rate * (bits / 8));
  w.u16(bits / 8);
  w.u16(bits);
  w.raw("data");
  w.u32(data_bytes);
  for (float s : buffer.samples) {
    if (format == SampleFormat::float32) {
      w.f32(s);
    } else {
      const double q = std::round(static_cast<double>(s) * 32768.0);
      w.i16(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0)));
    }
  }
  return w.take();
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  try {
    return decode_wav(read_file_bytes(path));
  } catch (const UnsupportedCodecError& e) {
    throw UnsupportedCodecError(e.tag(), path.string());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path, SampleFormat format) {
  write_file_bytes(path, encode_wav(buffer, format));
}

namespace {

constexpr int kTapsPerPhase = 64;
constexpr double kKaiserBeta = 8.6;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

AudioBuffer resample(const AudioBuffer& buffer, int target_hz) {
  if (target_hz <= 0) throw InvalidArgument("resample target rate must be positive");
  if (buffer.empty()) throw InvalidArgument("cannot resample an empty buffer");
  if (target_hz == buffer.sample_rate_hz) return buffer;

  const std::int64_t src = buffer.sample_rate_hz;
  const std::int64_t dst = target_hz;
  const std::int64_t g = std::gcd(src, dst);
  const std::int64_t up = dst / g;
  const std::int64_t down = src / g;

  const double cutoff = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const double half_width = kTapsPerPhase / 2.0;
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);

  // Phase p interpolates at fractional offset p/up past input sample floor(n*down/up).
  std::vector<double> table(static_cast<std::size_t>(up) * kTapsPerPhase);
  for (std::int64_t p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    double sum = 0.0;
    for (int j = 0; j < kTapsPerPhase; ++j) {
      const double tau = frac - (j - (kTapsPerPhase / 2 - 1));
      const double x = tau / half_width;
      const double win = std::abs(x) >= 1.0
                             ? 0.0
                             : std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - x * x)) / i0_beta;
      const double h = cutoff * sinc(cutoff * tau) * win;
      table[static_cast<std::size_t>(p) * kTapsPerPhase + j] = h;
      sum += h;
    }
    for (int j = 0; j < kTapsPerPhase; ++j) table[static_cast<std::size_t>(p) * kTapsPerPhase + j] /= sum;
  }

  const auto n_in = static_cast<std::int64_t>(buffer.size());
  const std::int64_t n_out = (n_in * dst + src / 2) / src;
  AudioBuffer out;
  out.sample_rate_hz = target_hz;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (std::int64_t n = 0; n < n_out; ++n) {
    const std::int64_t pos = n * down;
    const std::int64_t base = pos / up;
    const std::int64_t phase = pos % up;
    const double* h = &table[static_cast<std::size_t>(phase) * kTapsPerPhase];
    double acc = 0.0;
    for (int j = 0; j < kTapsPerPhase; ++j) {
      const std::int64_t k = base + j - (kTapsPerPhase / 2 - 1);
      if (k < 0 || k >= n_in) continue;
      acc += h[j] * buffer.samples[static_cast<std::size_t>(k)];
    }
    out.samples[static_cast<std::size_t>(n)] = clamp_unit(acc);
  }
  return out;
}

}  // namespace art2music::audio
