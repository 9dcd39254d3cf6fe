#pragma once

#include <filesystem>
#include <vector>

#include "fctf/synthface.hpp"

namespace fctf::io {

/// 8-bit RGB PNG. Values are rounded from [0,1] to 0..255 on write.
void write_png(const std::filesystem::path& path, const synth::FaceFrame& image);
synth::FaceFrame read_png(const std::filesystem::path& path);

struct Waveform {
  std::vector<float> samples;  // mono, [-1,1]
  int sample_rate = synth::kSampleRate;
};

/// 16-bit PCM mono WAV.
void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate);
/// Reads 16-bit PCM WAV; multi-channel input is averaged to mono.
Waveform read_wav(const std::filesystem::path& path);

}  // namespace fctf::io
