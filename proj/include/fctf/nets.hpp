#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "fctf/synthface.hpp"

namespace fctf::nets {

inline constexpr int kLayers = 14;
inline constexpr int kChannels = 64;
inline constexpr int kAudioDim = 64;

// Latent codes are tensors of shape [B, kLayers, kChannels]. Layer numbers in
// the public API are 1-based; row l - 1 of a code holds layer l.

struct LayerRouting {
  std::vector<int> manipulated{1, 2, 3, 4, 7, 8, 9, 10};
  std::vector<int> audio_layers{7, 8};

  /// Throws InvalidArgument on out-of-range, duplicate or non-subset entries.
  void validate() const;
  [[nodiscard]] bool manipulates(int layer) const;
  [[nodiscard]] bool has_audio(int layer) const;
  /// 0-based rows of manipulated layers, ascending.
  [[nodiscard]] std::vector<std::int64_t> manipulated_rows() const;
  [[nodiscard]] std::vector<std::int64_t> audio_rows() const;
  /// Manipulated rows without audio input.
  [[nodiscard]] std::vector<std::int64_t> visual_only_rows() const;

  bool operator==(const LayerRouting&) const = default;
};

enum class TemporalMode { Conv1d, Lstm, Off };
enum class DiscriminatorMode { Image, Video };

std::string to_string(TemporalMode m);
std::string to_string(DiscriminatorMode m);
TemporalMode temporal_mode_from_string(const std::string& s);
DiscriminatorMode discriminator_mode_from_string(const std::string& s);

/// [N, 3, H, W] float tensor from frames.
torch::Tensor frames_to_tensor(const std::vector<synth::FaceFrame>& frames);
torch::Tensor frame_to_tensor(const synth::FaceFrame& frame);
/// Inverse of frames_to_tensor for one [3, H, W] image; values clamped to [0,1].
synth::FaceFrame tensor_to_frame(const torch::Tensor& image);

void check_code(const torch::Tensor& z, const char* what);
/// z / sqrt(1 + mean(z^2)) over the last dim: RMS below 1, direction unchanged, 0 maps to 0.
torch::Tensor soft_rms_cap(const torch::Tensor& z);

/// E_inv: image [B,3,64,64] -> code [B,14,64], each layer scaled to unit RMS.
class VisualEncoderImpl : public torch::nn::Module {
 public:
  VisualEncoderImpl();
  torch::Tensor forward(const torch::Tensor& image);

 private:
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear hidden_{nullptr}, head_{nullptr};
};
TORCH_MODULE(VisualEncoder);

/// E_a: mel window [B,80,16] -> audio latent [B,64].
class AudioEncoderImpl : public torch::nn::Module {
 public:
  AudioEncoderImpl();
  torch::Tensor forward(const torch::Tensor& mel);

 private:
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(AudioEncoder);

/// E_can: per-layer residual 2-layer MLP (residual through soft_rms_cap) on
/// manipulated layers, pass-through elsewhere.
class CanonicalEncoderImpl : public torch::nn::Module {
 public:
  explicit CanonicalEncoderImpl(LayerRouting routing, int hidden = 128);
  torch::Tensor forward(const torch::Tensor& z_s);
  /// Zeroes the output layer so the map is exactly the identity.
  void reset_to_identity();

 private:
  LayerRouting routing_;
  torch::Tensor rows_;
  torch::Tensor w1_, b1_, w2_, b2_;  // [M,N,H], [M,H], [M,H,N], [M,N]
};
TORCH_MODULE(CanonicalEncoder);

/// E_m: per-layer 3-layer MLP, output through soft_rms_cap. Audio layers consume concat(z_a, z_d[l]).
class MotionEncoderImpl : public torch::nn::Module {
 public:
  explicit MotionEncoderImpl(LayerRouting routing, int hidden = 128);
  torch::Tensor forward(const torch::Tensor& z_d, const torch::Tensor& z_a);
  /// Input width of the MLP at a 1-based layer; 0 for non-manipulated layers.
  [[nodiscard]] int input_width(int layer) const;

 private:
  struct Group {
    torch::Tensor rows;
    std::vector<torch::Tensor> w, b;
  };
  Group make_group(const std::string& name, const std::vector<std::int64_t>& rows, int in, int hidden);
  static torch::Tensor run(const Group& g, torch::Tensor x);

  LayerRouting routing_;
  Group audio_, visual_;
};
TORCH_MODULE(MotionEncoder);

/// z_{s->d} = z_{s->c} + z_{c->d}.
torch::Tensor fuse_codes(const torch::Tensor& z_sc, const torch::Tensor& z_cd);

/// Temporal smoothing of fused codes [B,T,14,64] over T on manipulated layers.
class TemporalFusionImpl : public torch::nn::Module {
 public:
  TemporalFusionImpl(TemporalMode mode, LayerRouting routing, int kernel = 5);
  torch::Tensor forward(const torch::Tensor& seq);
  /// Sets the depthwise kernel to a centred delta (conv1d mode only).
  void reset_to_identity();
  [[nodiscard]] TemporalMode mode() const { return mode_; }
  /// Depthwise kernel [M*N, 1, K]; undefined unless mode is Conv1d.
  torch::Tensor& kernel() { return weight_; }

 private:
  TemporalMode mode_;
  LayerRouting routing_;
  int kernel_size_;
  torch::Tensor rows_;
  torch::Tensor weight_;
  torch::nn::LSTM lstm_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(TemporalFusion);

/// Style-modulated 3x3 convolution with weight demodulation.
class ModulatedConvImpl : public torch::nn::Module {
 public:
  ModulatedConvImpl(int in_ch, int out_ch, int style_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style);

 private:
  torch::nn::Linear affine_{nullptr};
  torch::Tensor weight_, bias_;
};
TORCH_MODULE(ModulatedConv);

/// G: learned 4x4 constant, 14 modulated convs, skip toRGB, sigmoid output.
class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl();
  /// code [B,14,64] -> image [B,3,64,64] in [0,1].
  torch::Tensor forward(const torch::Tensor& z);
  static int resolution_of(int layer);
  static int width_of(int layer);

 private:
  torch::Tensor const_;
  std::vector<ModulatedConv> convs_;
  std::vector<torch::nn::Conv2d> to_rgb_;
};
TORCH_MODULE(Generator);

/// D: image [B,3,64,64] or channel-stacked window [B,3T,64,64] -> logit [B].
class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(DiscriminatorMode mode, int window);
  torch::Tensor forward(const torch::Tensor& x);
  /// Logits for generated or real windows [B,T,3,64,64]: [B*T] in image mode, [B] in video mode.
  torch::Tensor score_windows(const torch::Tensor& windows);
  [[nodiscard]] DiscriminatorMode mode() const { return mode_; }

 private:
  DiscriminatorMode mode_;
  int in_channels_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Every intermediate of one forward pass over a driving window.
struct WindowOutputs {
  torch::Tensor z_s;     // [B,14,64]
  torch::Tensor z_d;     // [B,T,14,64]
  torch::Tensor z_a;     // [B,T,64]
  torch::Tensor z_sc;    // [B,14,64]
  torch::Tensor z_cd;    // [B,T,14,64]
  torch::Tensor z_sd;    // [B,T,14,64]
  torch::Tensor z_f;     // [B,T,14,64], after temporal fusion
  torch::Tensor frames;  // [B,T,3,64,64]
};

/// Generator-side networks of the pipeline.
class FaceModelImpl : public torch::nn::Module {
 public:
  FaceModelImpl(LayerRouting routing, TemporalMode temporal);

  /// source [B,3,64,64], driving [B,T,3,64,64], mels [B,T,80,16].
  WindowOutputs forward_window(const torch::Tensor& source, const torch::Tensor& driving, const torch::Tensor& mels);
  /// Canonical image of each source frame.
  torch::Tensor canonical_images(const torch::Tensor& source);

  [[nodiscard]] const LayerRouting& routing() const { return routing_; }

  VisualEncoder visual{nullptr};
  AudioEncoder audio{nullptr};
  CanonicalEncoder canonical{nullptr};
  MotionEncoder motion{nullptr};
  TemporalFusion temporal{nullptr};
  Generator generator{nullptr};

 private:
  LayerRouting routing_;
};
TORCH_MODULE(FaceModel);

/// FNV-1a over the raw bytes of every parameter and buffer, in registration order.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

}  // namespace fctf::nets
