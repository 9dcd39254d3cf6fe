#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fctf/auxnets.hpp"
#include "fctf/dataset.hpp"
#include "fctf/synthface.hpp"
#include "fctf/trainer.hpp"

namespace fctf::metrics {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSyncOffsets = 15;  // audio offsets -15..+15 video frames

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, range 1) on luma.
double ssim(const synth::FaceFrame& a, const synth::FaceFrame& b);
/// Three-scale MS-SSIM; needs at least 32x32.
double ms_ssim(const synth::FaceFrame& a, const synth::FaceFrame& b);
/// 10 log10(1 / MSE) over all channels, capped at 100 dB.
double psnr(const synth::FaceFrame& a, const synth::FaceFrame& b);

/// Extreme points of the largest connected reserved-hue region, at pixel edges.
std::optional<synth::MouthLandmarks> extract_mouth_landmarks(const synth::FaceFrame& frame);
/// Mean Euclidean distance over the four points.
double landmark_distance(const synth::MouthLandmarks& a, const synth::MouthLandmarks& b);

struct LmdResult {
  double lmd = 0.0;       // px, mean over frames
  int frames = 0;
  int empty_frames = 0;   // frames that fell back to the prior
};
/// LMD of generated frames against reference landmarks. A frame without mouth
/// pixels uses the previous frame's corners, collapsed to their centre line.
LmdResult lmd_against(std::span<const synth::FaceFrame> frames, std::span<const synth::MouthLandmarks> truth);
/// Reference landmarks from the renderer's closed-form geometry.
LmdResult lmd(std::span<const synth::FaceFrame> frames, const synth::IdentityParams& id,
              std::span<const synth::MotionParams> driving);

/// Mean over 5-frame windows of (max - median) sync cosine across audio offsets
/// -15..+15. frames [n,3,64,64], mels [n,80,16] aligned per frame; offsets clamp at clip edges.
double lse_c(aux::AuxNets& aux, const torch::Tensor& frames, const torch::Tensor& mels);

struct ClipMetrics {
  int identity = 0;
  int clip = 0;
  int frames = 0;
  double ssim = 0, ms_ssim = 0, psnr = 0, lmd = 0, lse_c = 0;
  int empty_mouth_frames = 0;
};

struct EvalReport {
  std::vector<ClipMetrics> clips;
  double ssim = 0, ms_ssim = 0, psnr = 0, lmd = 0, lse_c = 0;
  std::uint64_t checkpoint_fingerprint = 0;
  std::uint64_t corpus_fingerprint = 0;
  std::int64_t checkpoint_step = 0;

  /// Aggregates as means of the per-clip rows.
  void aggregate();
  [[nodiscard]] std::string to_json() const;
  /// True when every aggregate of this report is strictly better than o's
  /// (higher ssim, ms_ssim, psnr, lse_c; lower lmd).
  [[nodiscard]] bool beats(const EvalReport& o) const;
};

struct EvalOptions {
  std::optional<std::filesystem::path> strips_dir;
  int max_clips = -1;  // all test clips when negative
  synth::Split split = synth::Split::Test;
};

/// source [3,64,64], driving [n,3,64,64], mels [n,80,16] -> frames [n,3,64,64].
using GenerateFn = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&, const torch::Tensor&)>;

/// Per clip: frame 0 is the source, the remaining frames and their audio drive.
EvalReport evaluate_with(const data::Dataset& ds, aux::AuxNets& aux, const GenerateFn& generate, const EvalOptions& opt);
EvalReport evaluate(train::TrainState& st, const data::Dataset& ds, const EvalOptions& opt);

/// Source | driving | generated comparison: row 0 driving, row 1 generated,
/// column 0 the source, then `columns` evenly spaced frames.
void write_strip(const std::filesystem::path& path, const torch::Tensor& source, const torch::Tensor& driving,
                 const torch::Tensor& generated, int columns = 8);

// --- linear probes ----------------------------------------------------------

/// Closed-form ridge regression on standardised features; returns R^2 on the evaluation set.
double ridge_r2(const torch::Tensor& x_fit, const torch::Tensor& y_fit, const torch::Tensor& x_eval,
                const torch::Tensor& y_eval, double lambda = 1.0);
/// One-vs-rest ridge classifier; returns accuracy on the evaluation set.
double ridge_accuracy(const torch::Tensor& x_fit, const torch::Tensor& labels_fit, const torch::Tensor& x_eval,
                      const torch::Tensor& labels_eval, double lambda = 1.0);

struct ProbeReport {
  double sc_identity_accuracy = 0, sc_lip_r2 = 0;
  double cd_identity_accuracy = 0, cd_lip_r2 = 0;
  int fit_samples = 0, eval_samples = 0;
  [[nodiscard]] std::string to_json() const;
};
/// Probes on the manipulated-layer slice of z_{s->c} and z_{c->d} for every frame of the
/// test identities: fit on all clips but the last, evaluate on the last.
ProbeReport latent_probes(train::TrainState& st, const data::Dataset& ds, double lambda = 1.0);

}  // namespace fctf::metrics
