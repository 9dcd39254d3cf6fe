#pragma once

#include <span>
#include <vector>

namespace fctf::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr int kFftSize = 800;
inline constexpr int kHop = 200;
inline constexpr int kMels = 80;
inline constexpr int kWindowSteps = 16;  // 0.2 s of mel steps, five video frames
inline constexpr double kLogFloor = 1e-5;
/// Mel steps per video frame at 25 fps: (16000 / 200) / 25.
inline constexpr double kStepsPerVideoFrame = 3.2;

/// Natural-log mel power, row-major [mel][frame].
struct MelSpectrogram {
  int frames = 0;
  std::vector<float> values;

  [[nodiscard]] float at(int mel, int frame) const {
    return values[static_cast<std::size_t>(mel) * frames + frame];
  }
};

/// kMels x kWindowSteps slice of a spectrogram, row-major [mel][step].
struct MelWindow {
  int center_frame = 0;
  std::vector<float> values = std::vector<float>(static_cast<std::size_t>(kMels) * kWindowSteps, 0.0f);

  [[nodiscard]] float at(int mel, int step) const { return values[static_cast<std::size_t>(mel) * kWindowSteps + step]; }
};

/// Number of STFT frames for a signal of `samples` samples (no padding).
constexpr int mel_frame_count(int samples) { return samples < kFftSize ? 0 : 1 + (samples - kFftSize) / kHop; }

/// Windowed-sinc polyphase resampling to 16 kHz. Supported source rates:
/// 16000, 22050, 44100, 48000 Hz.
std::vector<float> resample(std::span<const float> wave, int src_rate);

/// Hann-windowed power STFT (n_fft 800, hop 200), 80 triangular mel filters
/// over 0-8 kHz, log(power + 1e-5). Needs at least 800 samples.
MelSpectrogram mel_spectrogram(std::span<const float> wave16k);

/// The 80 x 401 triangular filterbank used by mel_spectrogram.
const std::vector<double>& mel_filterbank();

/// 16 steps centred on round(frame_idx * 3.2); out-of-range steps replicate
/// the nearest edge step.
MelWindow frame_window(const MelSpectrogram& mel, int frame_idx, int fps = 25);

}  // namespace fctf::audio
