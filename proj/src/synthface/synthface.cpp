#include "fctf/synthface.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fctf/error.hpp"
#include "fctf/prng.hpp"

namespace fctf::synth {
namespace {

constexpr std::uint64_t kTagIdentity = 0x1D;
constexpr std::uint64_t kTagMotion = 0x30;
constexpr std::uint64_t kTagTexture = 0x7E;
constexpr std::uint64_t kTagVoice = 0x5C;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr std::array<double, 3> kBackground = {0.30, 0.32, 0.36};
constexpr std::array<double, 3> kBrow = {0.28, 0.20, 0.14};
constexpr std::array<double, 3> kSclera = {0.93, 0.93, 0.93};
constexpr std::array<double, 3> kPupil = {0.08, 0.08, 0.12};
constexpr double kMouthHue = 0.975;
constexpr double kMouthSat = 0.8;
constexpr double kMouthVal = 0.72;
constexpr double kSkinSat = 0.5;
constexpr double kSkinVal = 0.82;

double skin_hue(const IdentityParams& id) { return 0.03 + 0.55 * id.face_hue; }

// Band-limited trajectory in [-1, 1]: normalised sum of three sinusoids.
std::vector<double> smooth_walk(RandomStream& rng, int frames, double f_lo, double f_hi) {
  std::array<double, 3> amp{}, freq{}, phase{};
  double total = 0.0;
  for (int k = 0; k < 3; ++k) {
    amp[k] = rng.uniform(0.5, 1.0);
    freq[k] = rng.uniform(f_lo, f_hi);
    phase[k] = rng.uniform(0.0, kTwoPi);
    total += amp[k];
  }
  std::vector<double> out(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(kTwoPi * freq[k] * t / kFps + phase[k]);
    out[static_cast<std::size_t>(t)] = v / total;
  }
  return out;
}

struct Texture {
  std::array<double, 3> kx{}, ky{}, phase{};

  explicit Texture(std::uint64_t seed) {
    RandomStream rng = RandomStream(seed).child(kTagTexture);
    for (int k = 0; k < 3; ++k) {
      kx[k] = rng.uniform(-0.5, 0.5);
      ky[k] = rng.uniform(-0.5, 0.5);
      phase[k] = rng.uniform(0.0, kTwoPi);
    }
  }

  [[nodiscard]] double operator()(double dx, double dy) const {
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += std::sin(kx[k] * dx + ky[k] * dy + phase[k]);
    return 0.05 * v / 3.0;
  }
};

bool inside_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  if (rx <= 0.0 || ry <= 0.0) return false;
  const double u = (x - cx) / rx;
  const double v = (y - cy) / ry;
  return u * u + v * v <= 1.0;
}

}  // namespace

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out{0.0, mx > 0.0 ? d / mx : 0.0, mx};
  if (d <= 0.0) return out;
  double h;
  if (mx == r) {
    h = (g - b) / d;
    if (h < 0.0) h += 6.0;
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  out.h = h / 6.0;
  if (out.h >= 1.0) out.h -= 1.0;
  return out;
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

bool is_mouth_pixel(double r, double g, double b) {
  const Hsv c = rgb_to_hsv(r, g, b);
  return c.h >= kMouthHueLo && c.h <= kMouthHueHi && c.s >= 0.4 && c.v >= 0.25;
}

int mouth_pixel_count(const FaceFrame& frame) {
  int n = 0;
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      if (is_mouth_pixel(frame.at(y, x, 0), frame.at(y, x, 1), frame.at(y, x, 2))) ++n;
  return n;
}

bool in_range(const IdentityParams& id) {
  return id.face_hue >= 0.0 && id.face_hue <= 1.0 && id.face_aspect >= 0.7 && id.face_aspect <= 1.3 &&
         id.eye_spacing >= 0.2 && id.eye_spacing <= 0.4 && id.mouth_width >= 0.25 &&
         id.mouth_width <= 0.45 && id.nose_len >= 0.05 && id.nose_len <= 0.2;
}

bool in_range(const MotionParams& m) {
  auto within = [](double v, double lim) { return v >= -lim && v <= lim; };
  return within(m.yaw, 0.5) && within(m.pitch, 0.3) && m.lip_open >= 0.0 && m.lip_open <= 1.0 &&
         m.blink >= 0.0 && m.blink <= 1.0 && within(m.gaze_x, 1.0) && within(m.gaze_y, 1.0) &&
         within(m.brow_raise, 1.0);
}

IdentityParams sample_identity(std::uint64_t seed) {
  RandomStream rng = RandomStream(seed).child(kTagIdentity);
  IdentityParams id;
  id.face_hue = rng.uniform(0.0, 1.0);
  id.face_aspect = rng.uniform(0.7, 1.3);
  id.eye_spacing = rng.uniform(0.2, 0.4);
  id.mouth_width = rng.uniform(0.25, 0.45);
  id.nose_len = rng.uniform(0.05, 0.2);
  id.skin_texture_seed = (std::uint64_t{rng.next_u32()} << 32) | rng.next_u32();
  return id;
}

std::vector<MotionParams> sample_motion_sequence(std::uint64_t seed, int frames) {
  require(frames >= 1, "sample_motion_sequence: T must be >= 1");
  RandomStream rng = RandomStream(seed).child(kTagMotion);

  const double yaw_scale = rng.uniform(0.4, 1.0) * 0.5;
  const double pitch_scale = rng.uniform(0.4, 1.0) * 0.3;
  const double gaze_scale = rng.uniform(0.4, 1.0);
  const double brow_scale = rng.uniform(0.4, 1.0);
  const auto yaw = smooth_walk(rng, frames, 0.1, 0.6);
  const auto pitch = smooth_walk(rng, frames, 0.1, 0.6);
  const auto gx = smooth_walk(rng, frames, 0.2, 1.0);
  const auto gy = smooth_walk(rng, frames, 0.2, 1.0);
  const auto brow = smooth_walk(rng, frames, 0.1, 0.5);

  // Syllabic lip oscillation: 1.5-3 Hz base rate with slow rate wobble, so
  // every second holds at least one full open-close cycle.
  const double syllable_hz = rng.uniform(1.5, 3.0);
  double phase = rng.uniform(0.0, kTwoPi);
  const auto rate_wobble = smooth_walk(rng, frames, 0.1, 0.4);
  const auto lip_jitter = smooth_walk(rng, frames, 0.5, 2.0);

  // Blinks: sparse three-frame pulses.
  std::vector<double> blink(static_cast<std::size_t>(frames), 0.0);
  double next_blink = rng.uniform(0.5, 3.0) * kFps;
  while (next_blink < frames + 1) {
    const int c = static_cast<int>(std::lround(next_blink));
    for (int d = -1; d <= 1; ++d) {
      const int t = c + d;
      if (t >= 0 && t < frames) blink[static_cast<std::size_t>(t)] = std::max(blink[static_cast<std::size_t>(t)], d == 0 ? 1.0 : 0.5);
    }
    next_blink += rng.uniform(1.5, 4.0) * kFps;
  }

  std::vector<MotionParams> out(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    const auto i = static_cast<std::size_t>(t);
    MotionParams& m = out[i];
    m.yaw = std::clamp(yaw_scale * yaw[i], -0.5, 0.5);
    m.pitch = std::clamp(pitch_scale * pitch[i], -0.3, 0.3);
    m.gaze_x = std::clamp(gaze_scale * gx[i], -1.0, 1.0);
    m.gaze_y = std::clamp(gaze_scale * gy[i], -1.0, 1.0);
    m.brow_raise = std::clamp(brow_scale * brow[i], -1.0, 1.0);
    m.lip_open = std::clamp(0.5 + 0.62 * std::sin(phase) + 0.08 * lip_jitter[i], 0.0, 1.0);
    m.blink = blink[i];
    phase += kTwoPi * syllable_hz * (1.0 + 0.25 * rate_wobble[i]) / kFps;
  }
  return out;
}

FaceGeometry face_geometry(const IdentityParams& id, const MotionParams& m) {
  FaceGeometry g{};
  const double sy = std::sin(m.yaw);
  const double sp = std::sin(m.pitch);
  g.face_rx = 20.0 / std::sqrt(id.face_aspect);
  g.face_ry = 20.0 * std::sqrt(id.face_aspect);
  g.face_cx = 32.0 + 3.0 * sy;
  g.face_cy = 33.0 + 3.0 * sp;
  g.feat_cx = g.face_cx + 0.45 * g.face_rx * sy;
  g.feat_cy = g.face_cy + 0.45 * g.face_ry * sp;

  g.eye_dx = id.eye_spacing * g.face_rx * std::cos(m.yaw);
  g.eye_y = g.feat_cy - 0.28 * g.face_ry;
  g.eye_rx = 3.2;
  g.eye_ry = 2.3 * (1.0 - m.blink);
  g.pupil_dx = 1.5 * m.gaze_x;
  g.pupil_dy = 0.9 * m.gaze_y;
  g.pupil_r = 1.4;

  g.brow_y = g.eye_y - 4.2 - 1.6 * m.brow_raise;
  g.brow_half_w = 3.6;
  g.brow_half_h = 0.9;

  g.nose_top = g.feat_cy - 0.12 * g.face_ry;
  g.nose_len = id.nose_len * 2.0 * g.face_ry;
  g.nose_x = g.feat_cx + 1.0 * sy;

  g.mouth_cx = g.feat_cx;
  g.mouth_cy = g.feat_cy + 0.48 * g.face_ry;
  g.mouth_half_w = id.mouth_width * g.face_rx * (1.0 - 0.25 * std::abs(sy));
  g.mouth_half_h = 0.5 * m.lip_open * kMouthMaxHeight;
  g.lip_pad_x = 1.6;
  g.lip_pad_y = 1.8;
  return g;
}

FaceFrame render_face(const IdentityParams& id, const MotionParams& m) {
  const FaceGeometry g = face_geometry(id, m);
  const Texture texture(id.skin_texture_seed);
  const double hue = skin_hue(id);
  const auto mouth_rgb = hsv_to_rgb(kMouthHue, kMouthSat, kMouthVal);

  FaceFrame frame;
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      std::array<double, 3> rgb = kBackground;

      if (inside_ellipse(px, py, g.face_cx, g.face_cy, g.face_rx, g.face_ry)) {
        const double u = (px - g.face_cx) / g.face_rx;
        const double v = (py - g.face_cy) / g.face_ry;
        double val = kSkinVal * (1.0 + texture(px - g.face_cx, py - g.face_cy)) * (1.0 - 0.1 * (u * u + v * v));

        if (std::abs(px - g.nose_x) <= 0.8 && py >= g.nose_top && py <= g.nose_top + g.nose_len) val *= 0.75;
        rgb = hsv_to_rgb(hue, kSkinSat, val);

        for (const double side : {-1.0, 1.0}) {
          const double ex = g.feat_cx + side * g.eye_dx;
          if (std::abs(px - ex) <= g.brow_half_w && std::abs(py - g.brow_y) <= g.brow_half_h) rgb = kBrow;
          if (inside_ellipse(px, py, ex, g.eye_y, g.eye_rx, g.eye_ry)) {
            rgb = kSclera;
            if (inside_ellipse(px, py, ex + g.pupil_dx, g.eye_y + g.pupil_dy, g.pupil_r, g.pupil_r)) rgb = kPupil;
          }
        }

        if (inside_ellipse(px, py, g.mouth_cx, g.mouth_cy, g.mouth_half_w + g.lip_pad_x,
                           g.mouth_half_h + g.lip_pad_y))
          rgb = hsv_to_rgb(hue, kSkinSat + 0.25, kSkinVal * 0.55);
      }

      // Mouth interior is drawn last and never clipped by the face outline.
      if (g.mouth_half_h > 0.0 && std::abs(px - g.mouth_cx) <= g.mouth_half_w &&
          std::abs(py - g.mouth_cy) <= g.mouth_half_h)
        rgb = mouth_rgb;

      for (int c = 0; c < 3; ++c) frame.at(y, x, c) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
  }
  return frame;
}

MouthLandmarks mouth_landmarks(const IdentityParams& id, const MotionParams& m) {
  const FaceGeometry g = face_geometry(id, m);
  MouthLandmarks lm;
  lm.left = {g.mouth_cx - g.mouth_half_w, g.mouth_cy};
  lm.right = {g.mouth_cx + g.mouth_half_w, g.mouth_cy};
  lm.top = {g.mouth_cx, g.mouth_cy - g.mouth_half_h};
  lm.bottom = {g.mouth_cx, g.mouth_cy + g.mouth_half_h};
  return lm;
}

double carrier_frequency(const IdentityParams& id) {
  RandomStream rng = RandomStream(id.skin_texture_seed).child(kTagVoice);
  return 125.0 + 12.5 * static_cast<double>(rng.uniform_int(0, 14));
}

std::vector<float> synth_audio(std::span<const MotionParams> motions, const IdentityParams& id) {
  require(!motions.empty(), "synth_audio: motion sequence is empty");
  const double freq = carrier_frequency(id);
  const double amplitude = kAudioRms * std::numbers::sqrt2;
  const std::size_t frames = motions.size();
  std::vector<float> wave(frames * kSamplesPerFrame);
  for (std::size_t n = 0; n < wave.size(); ++n) {
    // Envelope knots sit at frame centres.
    const double pos = (static_cast<double>(n) + 0.5) / kSamplesPerFrame - 0.5;
    const double lo = std::floor(pos);
    const double frac = pos - lo;
    const auto k0 = static_cast<std::size_t>(std::clamp(lo, 0.0, static_cast<double>(frames - 1)));
    const auto k1 = static_cast<std::size_t>(std::clamp(lo + 1.0, 0.0, static_cast<double>(frames - 1)));
    const double env = motions[k0].lip_open * (1.0 - frac) + motions[k1].lip_open * frac;
    // Phase reduced modulo one period keeps sin() arguments small and exact.
    const double cycles = std::fmod(freq * static_cast<double>(n), static_cast<double>(kSampleRate));
    wave[n] = static_cast<float>(amplitude * env * std::sin(kTwoPi * cycles / kSampleRate));
  }
  return wave;
}

}  // namespace fctf::synth
