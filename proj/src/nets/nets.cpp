#include "fctf/nets.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fctf/error.hpp"
#include "fctf/prng.hpp"

namespace fctf::nets {
namespace F = torch::nn::functional;
namespace {

constexpr double kSlope = 0.2;

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kSlope)); }

torch::nn::Conv2d conv(int in, int out, int k, int stride, int pad) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(pad));
}

torch::nn::LeakyReLU act() { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kSlope)); }

torch::Tensor rows_tensor(const std::vector<std::int64_t>& rows) {
  return torch::tensor(rows, torch::kLong);
}

torch::Tensor uniform_param(std::vector<std::int64_t> shape, double bound) {
  return torch::empty(shape).uniform_(-bound, bound);
}

void require_image(const torch::Tensor& x, std::int64_t channels, const char* who) {
  if (x.dim() != 4 || x.size(1) != channels || x.size(2) != synth::kImageSize || x.size(3) != synth::kImageSize)
    throw InvalidArgument(std::string(who) + ": expected [B," + std::to_string(channels) + ",64,64], got " +
                          c10::str(x.sizes()));
}

}  // namespace

// --- routing --------------------------------------------------------------

void LayerRouting::validate() const {
  std::set<int> seen;
  for (const int l : manipulated) {
    if (l < 1 || l > kLayers) throw InvalidArgument("routing.manipulated: layer " + std::to_string(l) + " outside [1,14]");
    if (!seen.insert(l).second) throw InvalidArgument("routing.manipulated: duplicate layer " + std::to_string(l));
  }
  std::set<int> seen_audio;
  for (const int l : audio_layers) {
    if (l < 1 || l > kLayers) throw InvalidArgument("routing.audio_layers: layer " + std::to_string(l) + " outside [1,14]");
    if (!seen_audio.insert(l).second) throw InvalidArgument("routing.audio_layers: duplicate layer " + std::to_string(l));
    if (!seen.count(l)) throw InvalidArgument("routing.audio_layers: layer " + std::to_string(l) + " is not manipulated");
  }
}

bool LayerRouting::manipulates(int layer) const {
  return std::find(manipulated.begin(), manipulated.end(), layer) != manipulated.end();
}

bool LayerRouting::has_audio(int layer) const {
  return std::find(audio_layers.begin(), audio_layers.end(), layer) != audio_layers.end();
}

std::vector<std::int64_t> LayerRouting::manipulated_rows() const {
  std::vector<std::int64_t> r;
  for (int l = 1; l <= kLayers; ++l)
    if (manipulates(l)) r.push_back(l - 1);
  return r;
}

std::vector<std::int64_t> LayerRouting::audio_rows() const {
  std::vector<std::int64_t> r;
  for (int l = 1; l <= kLayers; ++l)
    if (manipulates(l) && has_audio(l)) r.push_back(l - 1);
  return r;
}

std::vector<std::int64_t> LayerRouting::visual_only_rows() const {
  std::vector<std::int64_t> r;
  for (int l = 1; l <= kLayers; ++l)
    if (manipulates(l) && !has_audio(l)) r.push_back(l - 1);
  return r;
}

std::string to_string(TemporalMode m) {
  switch (m) {
    case TemporalMode::Conv1d: return "conv1d";
    case TemporalMode::Lstm: return "lstm";
    case TemporalMode::Off: return "off";
  }
  return "conv1d";
}

std::string to_string(DiscriminatorMode m) { return m == DiscriminatorMode::Image ? "image" : "video"; }

TemporalMode temporal_mode_from_string(const std::string& s) {
  if (s == "conv1d") return TemporalMode::Conv1d;
  if (s == "lstm") return TemporalMode::Lstm;
  if (s == "off") return TemporalMode::Off;
  throw InvalidArgument("temporal_fusion must be conv1d|lstm|off, got '" + s + "'");
}

DiscriminatorMode discriminator_mode_from_string(const std::string& s) {
  if (s == "image") return DiscriminatorMode::Image;
  if (s == "video") return DiscriminatorMode::Video;
  throw InvalidArgument("discriminator must be image|video, got '" + s + "'");
}

// --- frame conversion -----------------------------------------------------

torch::Tensor frame_to_tensor(const synth::FaceFrame& frame) {
  auto hwc = torch::from_blob(const_cast<float*>(frame.pixels.data()), {frame.height, frame.width, 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor frames_to_tensor(const std::vector<synth::FaceFrame>& frames) {
  if (frames.empty()) return torch::empty({0, 3, synth::kImageSize, synth::kImageSize});
  std::vector<torch::Tensor> parts;
  parts.reserve(frames.size());
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) throw InvalidArgument("frames_to_tensor: frames differ in size");
    parts.push_back(frame_to_tensor(f));
  }
  return torch::stack(parts);
}

synth::FaceFrame tensor_to_frame(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw InvalidArgument("tensor_to_frame: expected [3,H,W]");
  const auto hwc = image.detach().to(torch::kCPU, torch::kFloat32).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
  synth::FaceFrame f(static_cast<int>(image.size(1)), static_cast<int>(image.size(2)));
  std::copy_n(hwc.data_ptr<float>(), f.pixels.size(), f.pixels.begin());
  return f;
}

void check_code(const torch::Tensor& z, const char* what) {
  if (z.dim() < 2 || z.size(-2) != kLayers || z.size(-1) != kChannels)
    throw InvalidArgument(std::string(what) + ": expected [...,14,64] code, got " + c10::str(z.sizes()));
}

torch::Tensor soft_rms_cap(const torch::Tensor& z) { return z * torch::rsqrt(1.0 + z.square().mean(-1, true)); }

// --- encoders -------------------------------------------------------------

VisualEncoderImpl::VisualEncoderImpl() {
  features_ = register_module("features", torch::nn::Sequential(conv(3, 32, 3, 1, 1), act(), conv(32, 64, 4, 2, 1), act(),
                                                                conv(64, 96, 4, 2, 1), act(), conv(96, 128, 4, 2, 1), act(),
                                                                conv(128, 128, 4, 2, 1), act()));
  hidden_ = register_module("hidden", torch::nn::Linear(128 * 4 * 4, 512));
  head_ = register_module("head", torch::nn::Linear(512, kLayers * kChannels));
}

torch::Tensor VisualEncoderImpl::forward(const torch::Tensor& image) {
  require_image(image, 3, "encode_visual");
  auto h = features_->forward(image * 2.0 - 1.0).flatten(1);
  h = lrelu(hidden_->forward(h));
  // Unit RMS per layer: the demodulated generator ignores code scale.
  const auto z = head_->forward(h).view({-1, kLayers, kChannels});
  return z * torch::rsqrt(z.square().mean(-1, true) + 1e-8);
}

AudioEncoderImpl::AudioEncoderImpl() {
  auto c1 = [](int in, int out, int k, int s, int p) {
    return torch::nn::Conv1d(torch::nn::Conv1dOptions(in, out, k).stride(s).padding(p));
  };
  features_ = register_module("features", torch::nn::Sequential(c1(80, 128, 3, 1, 1), act(), c1(128, 128, 4, 2, 1), act(),
                                                                c1(128, 128, 4, 2, 1), act()));
  head_ = register_module("head", torch::nn::Linear(128 * 4, kAudioDim));
}

torch::Tensor AudioEncoderImpl::forward(const torch::Tensor& mel) {
  if (mel.dim() != 3 || mel.size(1) != 80 || mel.size(2) != 16)
    throw InvalidArgument("encode_audio: expected [B,80,16] mel window, got " + c10::str(mel.sizes()));
  // Log-mel values span roughly [-11.5, 5]; recentre before the convs.
  return head_->forward(features_->forward((mel + 4.0) / 4.0).flatten(1));
}

CanonicalEncoderImpl::CanonicalEncoderImpl(LayerRouting routing, int hidden) : routing_(std::move(routing)) {
  routing_.validate();
  const auto rows = routing_.manipulated_rows();
  const auto m = static_cast<std::int64_t>(rows.size());
  rows_ = rows_tensor(rows);
  w1_ = register_parameter("w1", uniform_param({m, kChannels, hidden}, 1.0 / std::sqrt(kChannels)));
  b1_ = register_parameter("b1", torch::zeros({m, hidden}));
  w2_ = register_parameter("w2", torch::zeros({m, hidden, kChannels}));
  b2_ = register_parameter("b2", torch::zeros({m, kChannels}));
}

void CanonicalEncoderImpl::reset_to_identity() {
  torch::NoGradGuard g;
  w2_.zero_();
  b2_.zero_();
}

torch::Tensor CanonicalEncoderImpl::forward(const torch::Tensor& z_s) {
  check_code(z_s, "canonical_encode");
  if (rows_.numel() == 0) return z_s;
  const auto zm = z_s.index_select(1, rows_);
  const auto h = lrelu(torch::einsum("bmn,mnh->bmh", {zm, w1_}) + b1_);
  const auto out = zm + soft_rms_cap(torch::einsum("bmh,mhn->bmn", {h, w2_}) + b2_);
  return z_s.index_copy(1, rows_, out);
}

MotionEncoderImpl::Group MotionEncoderImpl::make_group(const std::string& name, const std::vector<std::int64_t>& rows,
                                                       int in, int hidden) {
  Group g;
  const auto m = static_cast<std::int64_t>(rows.size());
  g.rows = rows_tensor(rows);
  const int widths[4] = {in, hidden, hidden, kChannels};
  for (int k = 0; k < 3; ++k) {
    g.w.push_back(register_parameter(name + "_w" + std::to_string(k + 1),
                                     uniform_param({m, widths[k], widths[k + 1]}, 1.0 / std::sqrt(widths[k]))));
    g.b.push_back(register_parameter(name + "_b" + std::to_string(k + 1), torch::zeros({m, widths[k + 1]})));
  }
  return g;
}

MotionEncoderImpl::MotionEncoderImpl(LayerRouting routing, int hidden) : routing_(std::move(routing)) {
  routing_.validate();
  audio_ = make_group("audio", routing_.audio_rows(), kChannels + kAudioDim, hidden);
  visual_ = make_group("visual", routing_.visual_only_rows(), kChannels, hidden);
}

int MotionEncoderImpl::input_width(int layer) const {
  if (!routing_.manipulates(layer)) return 0;
  return routing_.has_audio(layer) ? kChannels + kAudioDim : kChannels;
}

torch::Tensor MotionEncoderImpl::run(const Group& g, torch::Tensor x) {
  for (std::size_t k = 0; k < g.w.size(); ++k) {
    x = torch::einsum("bmi,mio->bmo", {x, g.w[k]}) + g.b[k];
    if (k + 1 < g.w.size()) x = lrelu(x);
  }
  return soft_rms_cap(x);
}

torch::Tensor MotionEncoderImpl::forward(const torch::Tensor& z_d, const torch::Tensor& z_a) {
  check_code(z_d, "motion_encode");
  if (z_d.dim() != 3 || z_a.dim() != 2 || z_a.size(0) != z_d.size(0) || z_a.size(1) != kAudioDim)
    throw InvalidArgument("motion_encode: expected z_d [B,14,64] and z_a [B,64]");
  auto out = torch::zeros_like(z_d);
  if (audio_.rows.numel() > 0) {
    const auto zd = z_d.index_select(1, audio_.rows);
    const auto za = z_a.unsqueeze(1).expand({z_a.size(0), zd.size(1), kAudioDim});
    out = out.index_copy(1, audio_.rows, run(audio_, torch::cat({za, zd}, 2)));
  }
  if (visual_.rows.numel() > 0) out = out.index_copy(1, visual_.rows, run(visual_, z_d.index_select(1, visual_.rows)));
  return out;
}

torch::Tensor fuse_codes(const torch::Tensor& z_sc, const torch::Tensor& z_cd) {
  if (!z_sc.sizes().equals(z_cd.sizes()))
    throw InvalidArgument("fuse_codes: shape mismatch " + c10::str(z_sc.sizes()) + " vs " + c10::str(z_cd.sizes()));
  return z_sc + z_cd;
}

// --- temporal fusion ------------------------------------------------------

TemporalFusionImpl::TemporalFusionImpl(TemporalMode mode, LayerRouting routing, int kernel)
    : mode_(mode), routing_(std::move(routing)), kernel_size_(kernel) {
  routing_.validate();
  require(kernel % 2 == 1 && kernel >= 1, "temporal fusion kernel must be odd");
  rows_ = rows_tensor(routing_.manipulated_rows());
  const std::int64_t width = rows_.numel() * kChannels;
  if (mode_ == TemporalMode::Conv1d) {
    weight_ = register_parameter("weight", torch::zeros({width, 1, kernel}));
    reset_to_identity();
  } else if (mode_ == TemporalMode::Lstm) {
    lstm_ = register_module("lstm", torch::nn::LSTM(torch::nn::LSTMOptions(width, 128).batch_first(true)));
    proj_ = register_module("proj", torch::nn::Linear(128, width));
    torch::NoGradGuard g;
    proj_->weight.zero_();
    proj_->bias.zero_();
  }
}

void TemporalFusionImpl::reset_to_identity() {
  if (mode_ != TemporalMode::Conv1d) return;
  torch::NoGradGuard g;
  weight_.zero_();
  weight_.select(2, kernel_size_ / 2).fill_(1.0);
}

torch::Tensor TemporalFusionImpl::forward(const torch::Tensor& seq) {
  if (seq.dim() != 4) throw InvalidArgument("temporal_fuse: expected [B,T,14,64]");
  check_code(seq, "temporal_fuse");
  if (mode_ == TemporalMode::Off || rows_.numel() == 0 || seq.size(1) == 0) return seq;
  const auto b = seq.size(0), t = seq.size(1), m = rows_.numel();
  const auto sub = seq.index_select(2, rows_);  // [B,T,M,N]
  torch::Tensor out;
  if (mode_ == TemporalMode::Conv1d) {
    const int p = kernel_size_ / 2;
    auto x = sub.permute({0, 2, 3, 1}).reshape({b, m * kChannels, t});
    x = F::pad(x, F::PadFuncOptions({p, p}).mode(torch::kReplicate));
    x = F::conv1d(x, weight_, F::Conv1dFuncOptions().groups(m * kChannels));
    out = x.view({b, m, kChannels, t}).permute({0, 3, 1, 2});
  } else {
    const auto flat = sub.reshape({b, t, m * kChannels});
    const auto h = std::get<0>(lstm_->forward(flat));
    out = sub + proj_->forward(h).view({b, t, m, kChannels});
  }
  return seq.index_copy(2, rows_, out.contiguous());
}

// --- generator ------------------------------------------------------------

ModulatedConvImpl::ModulatedConvImpl(int in_ch, int out_ch, int style_dim) {
  affine_ = register_module("affine", torch::nn::Linear(style_dim, in_ch));
  {
    torch::NoGradGuard g;
    affine_->bias.fill_(1.0);
  }
  weight_ = register_parameter("weight", torch::randn({out_ch, in_ch, 3, 3}) / std::sqrt(in_ch * 9.0));
  bias_ = register_parameter("bias", torch::zeros({out_ch}));
}

torch::Tensor ModulatedConvImpl::forward(const torch::Tensor& x, const torch::Tensor& style) {
  const auto s = affine_->forward(style);  // [B,in]
  auto y = F::conv2d(x * s.unsqueeze(-1).unsqueeze(-1), weight_, F::Conv2dFuncOptions().padding(1));
  const auto wsq = weight_.square().sum({2, 3});  // [out,in]
  const auto demod = torch::rsqrt(torch::matmul(s.square(), wsq.t()) + 1e-8);  // [B,out]
  y = y * demod.unsqueeze(-1).unsqueeze(-1) + bias_.view({1, -1, 1, 1});
  return lrelu(y);
}

int GeneratorImpl::resolution_of(int layer) {
  if (layer <= 2) return 4;
  if (layer <= 4) return 8;
  if (layer <= 6) return 16;
  if (layer <= 8) return 32;
  return 64;
}

int GeneratorImpl::width_of(int layer) {
  if (layer <= 4) return 64;
  if (layer <= 6) return 48;
  if (layer <= 8) return 32;
  return 16;
}

GeneratorImpl::GeneratorImpl() {
  const_ = register_parameter("const", torch::randn({1, width_of(0), 4, 4}));
  for (int l = 1; l <= kLayers; ++l) {
    convs_.push_back(register_module("conv" + std::to_string(l), ModulatedConv(width_of(l - 1), width_of(l), kChannels)));
    if (l == kLayers || resolution_of(l + 1) != resolution_of(l))
      to_rgb_.push_back(register_module("to_rgb" + std::to_string(l), torch::nn::Conv2d(torch::nn::Conv2dOptions(width_of(l), 3, 1))));
  }
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z) {
  check_code(z, "generate");
  if (z.dim() != 3) throw InvalidArgument("generate: expected [B,14,64] code");
  if (!torch::isfinite(z).all().item<bool>()) throw InvalidArgument("generate: non-finite code");
  const auto b = z.size(0);
  auto up = [](const torch::Tensor& t) {
    return F::interpolate(t, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kBilinear).align_corners(false));
  };
  auto x = const_.expand({b, -1, -1, -1});
  torch::Tensor rgb;
  std::size_t rgb_index = 0;
  for (int l = 1; l <= kLayers; ++l) {
    if (l > 1 && resolution_of(l) != resolution_of(l - 1)) x = up(x);
    x = convs_[static_cast<std::size_t>(l - 1)]->forward(x, z.select(1, l - 1));
    if (l == kLayers || resolution_of(l + 1) != resolution_of(l)) {
      const auto out = to_rgb_[rgb_index++]->forward(x);
      rgb = rgb.defined() ? up(rgb) + out : out;
    }
  }
  return torch::sigmoid(rgb);
}

// --- discriminator --------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorMode mode, int window)
    : mode_(mode), in_channels_(mode == DiscriminatorMode::Image ? 3 : 3 * window) {
  body_ = register_module("body", torch::nn::Sequential(conv(in_channels_, 32, 3, 1, 1), act(), conv(32, 64, 4, 2, 1), act(),
                                                        conv(64, 96, 4, 2, 1), act(), conv(96, 128, 4, 2, 1), act(),
                                                        conv(128, 128, 4, 2, 1), act()));
  head_ = register_module("head", torch::nn::Linear(128 * 4 * 4, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  require_image(x, in_channels_, "discriminate");
  return head_->forward(body_->forward(x * 2.0 - 1.0).flatten(1)).squeeze(1);
}

torch::Tensor DiscriminatorImpl::score_windows(const torch::Tensor& windows) {
  if (windows.dim() != 5) throw InvalidArgument("discriminate: expected [B,T,3,64,64] windows");
  const auto b = windows.size(0), t = windows.size(1);
  if (mode_ == DiscriminatorMode::Image) return forward(windows.reshape({b * t, 3, windows.size(3), windows.size(4)}));
  if (3 * t != in_channels_) throw InvalidArgument("discriminate: window length does not match the video discriminator");
  return forward(windows.reshape({b, t * 3, windows.size(3), windows.size(4)}));
}

// --- full model -----------------------------------------------------------

FaceModelImpl::FaceModelImpl(LayerRouting routing, TemporalMode temporal_mode) : routing_(std::move(routing)) {
  routing_.validate();
  visual = register_module("visual", VisualEncoder());
  audio = register_module("audio", AudioEncoder());
  canonical = register_module("canonical", CanonicalEncoder(routing_));
  motion = register_module("motion", MotionEncoder(routing_));
  temporal = register_module("temporal", TemporalFusion(temporal_mode, routing_));
  generator = register_module("generator", Generator());
}

WindowOutputs FaceModelImpl::forward_window(const torch::Tensor& source, const torch::Tensor& driving,
                                            const torch::Tensor& mels) {
  if (driving.dim() != 5 || mels.dim() != 4 || driving.size(0) != source.size(0) || mels.size(0) != source.size(0) ||
      mels.size(1) != driving.size(1))
    throw InvalidArgument("forward_window: expected source [B,3,64,64], driving [B,T,3,64,64], mels [B,T,80,16]");
  const auto b = driving.size(0), t = driving.size(1);
  WindowOutputs o;
  o.z_s = visual->forward(source);
  o.z_d = visual->forward(driving.reshape({b * t, 3, driving.size(3), driving.size(4)})).view({b, t, kLayers, kChannels});
  o.z_a = audio->forward(mels.reshape({b * t, mels.size(2), mels.size(3)})).view({b, t, kAudioDim});
  o.z_sc = canonical->forward(o.z_s);
  o.z_cd = motion->forward(o.z_d.reshape({b * t, kLayers, kChannels}), o.z_a.reshape({b * t, kAudioDim}))
               .view({b, t, kLayers, kChannels});
  o.z_sd = fuse_codes(o.z_sc.unsqueeze(1).expand({b, t, kLayers, kChannels}), o.z_cd);
  o.z_f = temporal->forward(o.z_sd);
  o.frames = generator->forward(o.z_f.reshape({b * t, kLayers, kChannels})).view({b, t, 3, driving.size(3), driving.size(4)});
  return o;
}

torch::Tensor FaceModelImpl::canonical_images(const torch::Tensor& source) {
  return generator->forward(canonical->forward(visual->forward(source)));
}

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
  Fnv1a64 h;
  auto add = [&h](const torch::Tensor& t) {
    const auto c = t.detach().to(torch::kCPU).contiguous();
    h.update(c.data_ptr(), c.numel() * c.element_size());
  };
  for (const auto& p : module.named_parameters(true)) add(p.value());
  for (const auto& b : module.named_buffers(true)) add(b.value());
  return h.digest();
}

}  // namespace fctf::nets
