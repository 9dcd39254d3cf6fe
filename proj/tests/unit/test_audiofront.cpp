#include <gtest/gtest.h>

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fctf/audiofront.hpp"
#include "fctf/error.hpp"
#include "fctf/prng.hpp"

using namespace fctf::audio;

namespace {

std::vector<float> tone(double hz, int rate, int n, double amp = 0.5) {
  std::vector<float> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / rate));
  return w;
}

int argmax_mel(const MelSpectrogram& m, int frame) {
  int best = 0;
  for (int k = 1; k < kMels; ++k)
    if (m.at(k, frame) > m.at(best, frame)) best = k;
  return best;
}

}  // namespace

TEST(MelSpectrogram, FrameCountOneSecond) {
  const std::vector<float> w(16000, 0.1f);
  EXPECT_EQ(mel_spectrogram(w).frames, 77);
  EXPECT_EQ(mel_frame_count(16000), 77);
}

TEST(MelSpectrogram, FrameCountRandomLengths) {
  fctf::RandomStream r(99);
  for (int i = 0; i < 50; ++i) {
    const auto n = static_cast<int>(r.uniform_int(800, 40000));
    const auto m = mel_spectrogram(std::vector<float>(static_cast<std::size_t>(n), 0.0f));
    EXPECT_EQ(m.frames, 1 + (n - 800) / 200) << n;
    EXPECT_EQ(m.values.size(), static_cast<std::size_t>(kMels) * m.frames);
  }
}

TEST(MelSpectrogram, SilenceFloor) {
  const auto m = mel_spectrogram(std::vector<float>(4000, 0.0f));
  const auto floor = static_cast<float>(std::log(1e-5));
  for (const float v : m.values) ASSERT_EQ(v, floor);
}

TEST(MelSpectrogram, RejectsShortInput) {
  EXPECT_THROW(mel_spectrogram(std::vector<float>(799, 0.0f)), fctf::InvalidArgument);
}

TEST(MelSpectrogram, ToneArgmaxStable) {
  const auto m = mel_spectrogram(tone(440.0, 16000, 16000));
  const int k0 = argmax_mel(m, 0);
  for (int f = 1; f < m.frames; ++f) EXPECT_EQ(argmax_mel(m, f), k0);
}

TEST(MelSpectrogram, DeterministicAndScaleMonotone) {
  fctf::RandomStream r(4);
  std::vector<float> w(6400), w2(6400);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<float>(r.uniform(-0.4, 0.4));
    w2[i] = 2.0f * w[i];
  }
  const auto a = mel_spectrogram(w);
  EXPECT_EQ(a.values, mel_spectrogram(w).values);
  const auto b = mel_spectrogram(w2);
  for (std::size_t i = 0; i < a.values.size(); ++i) ASSERT_GE(b.values[i], a.values[i]);
}

TEST(MelFilterbank, TrianglesCoverBand) {
  const auto& fb = mel_filterbank();
  ASSERT_EQ(fb.size(), static_cast<std::size_t>(kMels) * (kFftSize / 2 + 1));
  for (int m = 0; m < kMels; ++m) {
    double peak = 0.0;
    for (int k = 0; k <= kFftSize / 2; ++k) peak = std::max(peak, fb[static_cast<std::size_t>(m) * (kFftSize / 2 + 1) + k]);
    EXPECT_GT(peak, 0.0) << "mel " << m;
    EXPECT_LE(peak, 1.0);
  }
}

TEST(Resample, IdentityAt16k) {
  fctf::RandomStream r(8);
  std::vector<float> w(1234);
  for (auto& v : w) v = static_cast<float>(r.uniform(-1, 1));
  EXPECT_EQ(resample(w, 16000), w);
}

TEST(Resample, Lengths) {
  EXPECT_EQ(resample(std::vector<float>(48000, 0.0f), 48000).size(), 16000u);
  EXPECT_EQ(resample(std::vector<float>(44100, 0.0f), 44100).size(), 16000u);
  EXPECT_EQ(resample(std::vector<float>(22050, 0.0f), 22050).size(), 16000u);
  EXPECT_EQ(resample(std::vector<float>(1000, 0.0f), 22050).size(),
            static_cast<std::size_t>(std::lround(1000 * 16000.0 / 22050.0)));
}

TEST(Resample, RejectsUnsupportedRate) {
  EXPECT_THROW(resample(std::vector<float>(100, 0.0f), 8000), fctf::InvalidArgument);
}

TEST(Resample, ToneKeepsFrequency) {
  for (const int rate : {22050, 44100, 48000}) {
    const auto out = resample(tone(1000.0, rate, rate), rate);
    const int n = static_cast<int>(out.size());
    std::vector<double> in(out.begin(), out.end());
    std::vector<fftw_complex> spec(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan p = fftw_plan_dft_r2c_1d(n, in.data(), spec.data(), FFTW_ESTIMATE);
    fftw_execute(p);
    fftw_destroy_plan(p);
    int best = 0;
    double best_mag = 0.0;
    for (int k = 0; k <= n / 2; ++k) {
      const double mag = spec[static_cast<std::size_t>(k)][0] * spec[static_cast<std::size_t>(k)][0] +
                         spec[static_cast<std::size_t>(k)][1] * spec[static_cast<std::size_t>(k)][1];
      if (mag > best_mag) best_mag = mag, best = k;
    }
    const double bin_hz = 16000.0 / n;
    EXPECT_LE(std::abs(best * bin_hz - 1000.0), bin_hz) << rate;
  }
}

TEST(FrameWindow, CentreAndShape) {
  const auto m = mel_spectrogram(tone(300.0, 16000, 16000));
  const auto w = frame_window(m, 10);
  EXPECT_EQ(w.values.size(), static_cast<std::size_t>(kMels) * kWindowSteps);
  EXPECT_EQ(w.center_frame, 10);
  // Centre step 32 sits at index 8 of the window.
  for (int k = 0; k < kMels; ++k)
    for (int s = 0; s < kWindowSteps; ++s) ASSERT_EQ(w.at(k, s), m.at(k, 32 - 8 + s));
}

TEST(FrameWindow, EdgeClampAndSlice) {
  fctf::RandomStream r(12);
  std::vector<float> wave(8000);
  for (auto& v : wave) v = static_cast<float>(r.uniform(-0.5, 0.5));
  const auto m = mel_spectrogram(wave);
  for (int idx = 0; idx < 14; ++idx) {
    const auto w = frame_window(m, idx);
    const int c = static_cast<int>(std::lround(idx * 3.2));
    for (int s = 0; s < kWindowSteps; ++s) {
      const int src = std::clamp(c - 8 + s, 0, m.frames - 1);
      for (int k = 0; k < kMels; ++k) ASSERT_EQ(w.at(k, s), m.at(k, src));
    }
  }
  const auto w0 = frame_window(m, 0);
  for (int k = 0; k < kMels; ++k) EXPECT_EQ(w0.at(k, 0), m.at(k, 0));
  EXPECT_THROW(frame_window(m, -1), fctf::InvalidArgument);
}
