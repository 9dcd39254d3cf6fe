#include "fctf/audiofront.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

#include "fctf/error.hpp"

namespace fctf::audio {
namespace {

constexpr int kBins = kFftSize / 2 + 1;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Polyphase table of a Kaiser-windowed sinc low-pass for an L/M rate change.
struct PolyphaseFilter {
  int up = 1, down = 1, half_taps = 0;
  std::vector<double> taps;  // [up][2 * half_taps]

  PolyphaseFilter(int l, int m) : up(l), down(m) {
    const double cutoff = 0.95 * std::min(1.0, static_cast<double>(l) / m);
    half_taps = static_cast<int>(std::ceil(16.0 / cutoff));
    const int width = 2 * half_taps;
    constexpr double beta = 8.6;
    const double norm = std::cyl_bessel_i(0.0, beta);
    taps.assign(static_cast<std::size_t>(up) * width, 0.0);
    for (int phase = 0; phase < up; ++phase) {
      const double frac = static_cast<double>(phase) / up;
      double* row = taps.data() + static_cast<std::size_t>(phase) * width;
      for (int j = 0; j < width; ++j) {
        const double x = frac + (half_taps - 1) - j;
        const double u = x / half_taps;
        if (std::abs(u) >= 1.0) continue;
        const double arg = std::numbers::pi * cutoff * x;
        const double sinc = x == 0.0 ? 1.0 : std::sin(arg) / arg;
        row[j] = cutoff * sinc * std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - u * u)) / norm;
      }
      // Unit DC gain per phase.
      const double sum = std::accumulate(row, row + width, 0.0);
      for (int j = 0; j < width; ++j) row[j] /= sum;
    }
  }
};

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::vector<float> resample(std::span<const float> wave, int src_rate) {
  int up = 0, down = 0;
  switch (src_rate) {
    case 16000: return {wave.begin(), wave.end()};
    case 22050: up = 320, down = 441; break;
    case 44100: up = 160, down = 441; break;
    case 48000: up = 1, down = 3; break;
    default: throw InvalidArgument("resample: unsupported source rate " + std::to_string(src_rate));
  }
  static std::mutex cache_mutex;
  static std::vector<PolyphaseFilter> cache;
  const PolyphaseFilter* filter = nullptr;
  {
    std::lock_guard lock(cache_mutex);
    for (const auto& f : cache)
      if (f.up == up && f.down == down) filter = &f;
    if (!filter) {
      cache.reserve(3);  // at most three non-trivial rates; keeps pointers stable
      filter = &cache.emplace_back(up, down);
    }
  }

  const auto n_in = static_cast<std::int64_t>(wave.size());
  const std::int64_t n_out = (n_in * up * 2 + down) / (2 * down);
  const int width = 2 * filter->half_taps;
  std::vector<float> out(static_cast<std::size_t>(n_out));
  for (std::int64_t m = 0; m < n_out; ++m) {
    const std::int64_t pos = m * down;
    const std::int64_t base = pos / up;
    const auto phase = static_cast<int>(pos % up);
    const double* row = filter->taps.data() + static_cast<std::size_t>(phase) * width;
    double acc = 0.0;
    for (int j = 0; j < width; ++j) {
      const std::int64_t k = base - filter->half_taps + 1 + j;
      if (k >= 0 && k < n_in) acc += row[j] * wave[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(m)] = static_cast<float>(acc);
  }
  return out;
}

const std::vector<double>& mel_filterbank() {
  static const std::vector<double> bank = [] {
    std::vector<double> fb(static_cast<std::size_t>(kMels) * kBins, 0.0);
    const double mel_hi = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kMels + 2);
    for (int i = 0; i < kMels + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_hi * i / (kMels + 1));
    for (int m = 0; m < kMels; ++m) {
      const double lo = edges[static_cast<std::size_t>(m)];
      const double mid = edges[static_cast<std::size_t>(m) + 1];
      const double hi = edges[static_cast<std::size_t>(m) + 2];
      for (int k = 0; k < kBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
        fb[static_cast<std::size_t>(m) * kBins + k] = std::max(0.0, w);
      }
    }
    return fb;
  }();
  return bank;
}

MelSpectrogram mel_spectrogram(std::span<const float> wave16k) {
  const auto n = static_cast<int>(wave16k.size());
  require(n >= kFftSize, "mel_spectrogram: input shorter than one 800-sample window");
  const int frames = mel_frame_count(n);

  double* in = fftw_alloc_real(kFftSize);
  fftw_complex* spec = fftw_alloc_complex(kBins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_1d(kFftSize, in, spec, FFTW_ESTIMATE);
  }

  std::vector<double> hann(kFftSize);
  for (int i = 0; i < kFftSize; ++i) hann[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kFftSize);

  const auto& fb = mel_filterbank();
  MelSpectrogram mel;
  mel.frames = frames;
  mel.values.assign(static_cast<std::size_t>(kMels) * frames, 0.0f);
  std::vector<double> power(kBins);
  for (int f = 0; f < frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * kHop;
    for (int i = 0; i < kFftSize; ++i) in[i] = hann[static_cast<std::size_t>(i)] * wave16k[start + static_cast<std::size_t>(i)];
    fftw_execute(plan);
    for (int k = 0; k < kBins; ++k) power[static_cast<std::size_t>(k)] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    for (int m = 0; m < kMels; ++m) {
      const double* w = fb.data() + static_cast<std::size_t>(m) * kBins;
      double e = 0.0;
      for (int k = 0; k < kBins; ++k) e += w[k] * power[static_cast<std::size_t>(k)];
      mel.values[static_cast<std::size_t>(m) * frames + f] = static_cast<float>(std::log(e + kLogFloor));
    }
  }

  {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(spec);
  return mel;
}

MelWindow frame_window(const MelSpectrogram& mel, int frame_idx, int fps) {
  require(frame_idx >= 0, "frame_window: frame index must be >= 0");
  require(fps > 0, "frame_window: fps must be positive");
  require(mel.frames > 0, "frame_window: empty spectrogram");
  const double steps_per_frame = static_cast<double>(kSampleRate) / kHop / fps;
  const auto center = static_cast<int>(std::lround(frame_idx * steps_per_frame));
  MelWindow win;
  win.center_frame = frame_idx;
  for (int s = 0; s < kWindowSteps; ++s) {
    const int src = std::clamp(center - kWindowSteps / 2 + s, 0, mel.frames - 1);
    for (int m = 0; m < kMels; ++m)
      win.values[static_cast<std::size_t>(m) * kWindowSteps + s] = mel.at(m, src);
  }
  return win;
}

}  // namespace fctf::audio
