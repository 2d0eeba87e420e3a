#pragma once

// Small synthetic fixtures shared by unit and acceptance tests.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "art2music/neuralnet.hpp"

namespace fixture {

using art2music::nn::Matrix;
using art2music::nn::ModelDims;
using art2music::nn::Sample;

// Tiny model: T=16, F=8, hidden 16, two layers.
inline ModelDims tiny_dims() {
  ModelDims d;
  d.input_dim = 8;
  d.fused_dim = 8;
  d.residual_dim = 4;
  d.decoder_input_dim = 8;
  d.hidden = 16;
  d.layers = 2;
  d.frames = 16;
  d.mel_bands = 8;
  return d;
}

// Eight samples whose targets are smooth, distinct T x F patterns in (-0.8, 0.8), each
// paired with a distinct random conditioning vector (image part 4-d, text part 4-d).
inline std::vector<Sample> overfit_samples(const ModelDims& d, std::uint64_t seed = 1234, int count = 8) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Sample> out;
  for (int k = 0; k < count; ++k) {
    std::vector<float> image(d.input_dim - d.residual_dim), text(d.residual_dim);
    for (auto& v : image) v = static_cast<float>(g(rng));
    for (auto& v : text) v = static_cast<float>(g(rng));
    Sample s;
    s.input = art2music::nn::make_fusion_input(image, text);
    s.target.resize(d.frames, d.mel_bands);
    const double phase = 2.0 * std::numbers::pi * k / count;
    const double tilt = (k % 2 == 0 ? 1.0 : -1.0) * 0.3;
    for (std::uint32_t t = 0; t < d.frames; ++t) {
      for (std::uint32_t f = 0; f < d.mel_bands; ++f) {
        const double v = 0.5 * std::sin(phase + 0.4 * t) + tilt * (static_cast<double>(f) / d.mel_bands - 0.5);
        s.target(t, f) = std::clamp(v, -0.8, 0.8);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fixture
