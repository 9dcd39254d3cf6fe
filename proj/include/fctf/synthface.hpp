#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace fctf::synth {

inline constexpr int kImageSize = 64;
inline constexpr int kFps = 25;
inline constexpr int kSampleRate = 16000;
inline constexpr int kSamplesPerFrame = kSampleRate / kFps;  // 640

/// Hue band reserved for the mouth interior. No other face part is drawn
/// with a hue inside it, so the mouth can be segmented analytically.
inline constexpr double kMouthHueLo = 0.95;
inline constexpr double kMouthHueHi = 1.0;
inline constexpr double kMouthMaxHeight = 9.0;  // px, at lip_open == 1
inline constexpr double kAudioRms = 0.3;        // RMS at lip_open == 1

/// Person-specific factors of a synthetic face.
struct IdentityParams {
  double face_hue = 0.5;     // [0,1]
  double face_aspect = 1.0;  // [0.7,1.3], vertical/horizontal axis ratio
  double eye_spacing = 0.3;  // [0.2,0.4], fraction of face width
  double mouth_width = 0.35; // [0.25,0.45], fraction of face width
  double nose_len = 0.1;     // [0.05,0.2], fraction of face height
  std::uint64_t skin_texture_seed = 0;

  bool operator==(const IdentityParams&) const = default;
};

/// Per-frame motion factors. The all-zeros value is the canonical motion.
struct MotionParams {
  double yaw = 0.0;         // rad, [-0.5,0.5]
  double pitch = 0.0;       // rad, [-0.3,0.3]
  double lip_open = 0.0;    // [0,1]
  double blink = 0.0;       // [0,1], 1 = closed
  double gaze_x = 0.0;      // [-1,1]
  double gaze_y = 0.0;      // [-1,1]
  double brow_raise = 0.0;  // [-1,1]

  bool operator==(const MotionParams&) const = default;
};

/// RGB image, row-major HWC, values in [0,1].
struct FaceFrame {
  int height = kImageSize;
  int width = kImageSize;
  std::vector<float> pixels;  // height * width * 3
  int frame_index = 0;
  int fps = kFps;

  FaceFrame() : pixels(static_cast<std::size_t>(kImageSize) * kImageSize * 3, 0.0f) {}
  FaceFrame(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  [[nodiscard]] float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  [[nodiscard]] bool same_shape(const FaceFrame& o) const { return height == o.height && width == o.width; }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Mouth landmarks in pixel coordinates (pixel centres sit at i + 0.5).
struct MouthLandmarks {
  Point left, right, top, bottom;

  [[nodiscard]] std::array<Point, 4> points() const { return {left, right, top, bottom}; }
};

/// Closed-form layout shared by the renderer and the landmark oracle.
struct FaceGeometry {
  double face_cx, face_cy, face_rx, face_ry;
  double feat_cx, feat_cy;  // pose-shifted feature anchor
  double eye_dx, eye_y, eye_rx, eye_ry;
  double pupil_dx, pupil_dy, pupil_r;
  double brow_y, brow_half_w, brow_half_h;
  double nose_top, nose_len, nose_x;
  double mouth_cx, mouth_cy, mouth_half_w, mouth_half_h;
  double lip_pad_x, lip_pad_y;
};

FaceGeometry face_geometry(const IdentityParams& id, const MotionParams& m);

IdentityParams sample_identity(std::uint64_t seed);

/// Smooth factor trajectories for T frames at 25 fps. Throws InvalidArgument for T < 1.
std::vector<MotionParams> sample_motion_sequence(std::uint64_t seed, int frames);

FaceFrame render_face(const IdentityParams& id, const MotionParams& m);

MouthLandmarks mouth_landmarks(const IdentityParams& id, const MotionParams& m);

/// Carrier frequency in Hz; a multiple of 12.5 Hz in [125, 300] so every
/// 640-sample video frame holds a whole number of carrier periods.
double carrier_frequency(const IdentityParams& id);

/// 16 kHz waveform whose amplitude envelope follows lip_open.
std::vector<float> synth_audio(std::span<const MotionParams> motions, const IdentityParams& id);

// --- colour helpers ------------------------------------------------------

struct Hsv {
  double h, s, v;
};
Hsv rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(double h, double s, double v);

/// True when a pixel colour falls in the reserved mouth-interior class.
bool is_mouth_pixel(double r, double g, double b);

/// Count of reserved-hue pixels in a frame.
int mouth_pixel_count(const FaceFrame& frame);

bool in_range(const IdentityParams& id);
bool in_range(const MotionParams& m);

}  // namespace fctf::synth
