#pragma once

#include <torch/torch.h>

#include <string>

#include "fctf/auxnets.hpp"
#include "fctf/nets.hpp"

namespace fctf::loss {

enum class OrthoMode { Off, Cosine, Hadamard };
std::string to_string(OrthoMode m);
OrthoMode ortho_mode_from_string(const std::string& s);

/// Generator-side weights, in the order ortho, sync, id, rec, lpips, gan.
struct LossWeights {
  double ortho = 1.0;
  double sync = 0.1;
  double id = 0.5;
  double rec = 1.0;
  double lpips = 1.0;
  double gan = 0.1;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double ortho = 0, sync = 0, id = 0, rec = 0, lpips = 0, gan_g = 0, gan_d = 0, total = 0;
};

/// (1/N) sum_c z_sc[l,c] * z_cd[l,c], averaged over manipulated layers and all
/// leading dimensions. Codes are [..., 14, N]; N is the channel count.
torch::Tensor ortho_hadamard(const torch::Tensor& z_sc, const torch::Tensor& z_cd, const nets::LayerRouting& routing);
/// Mean cosine similarity between per-layer code vectors on manipulated layers.
torch::Tensor ortho_cosine(const torch::Tensor& z_sc, const torch::Tensor& z_cd, const nets::LayerRouting& routing);
/// Off reports the Hadamard value; the trainer applies weight 0 to it.
torch::Tensor ortho_loss(const torch::Tensor& z_sc, const torch::Tensor& z_cd, const nets::LayerRouting& routing,
                         OrthoMode mode);

/// Mean over rows of 1 - cos(a_i, b_i) for [B,D] embeddings.
torch::Tensor cosine_distance(const torch::Tensor& a, const torch::Tensor& b);

/// 1 - cos(f_v(frames), f_a(mel)); frames [B,5,3,64,64], mel [B,80,16].
torch::Tensor sync_loss(aux::AuxNets& aux, const torch::Tensor& frames, const torch::Tensor& mel);
/// 1 - cos(E_id(x_g), E_id(x_d)); images [B,3,64,64].
torch::Tensor id_loss(aux::AuxNets& aux, const torch::Tensor& x_g, const torch::Tensor& x_d);
/// Mean absolute pixel difference.
torch::Tensor rec_loss(const torch::Tensor& x_g, const torch::Tensor& x_d);
/// Mean over the four feature maps of sqrt(mean squared feature difference), per image then batch mean.
torch::Tensor lpips_loss(aux::AuxNets& aux, const torch::Tensor& x_g, const torch::Tensor& x_d);
torch::Tensor lpips_from_features(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b);

inline constexpr double kLogitClamp = 20.0;
/// -mean log sigma(real) - mean log(1 - sigma(fake)), logits clamped to +-20.
torch::Tensor gan_d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
/// -mean log sigma(fake), logits clamped to +-20.
torch::Tensor gan_g_loss(const torch::Tensor& fake_logits);

struct GanLosses {
  torch::Tensor gan_g, gan_d;
};
/// Scores real and generated windows [B,T,3,64,64]; gan_d sees the fakes detached.
GanLosses gan_losses(nets::Discriminator& d, const torch::Tensor& real, const torch::Tensor& fake);

/// Fills total from the six generator-side parts. Throws NumericError naming
/// the first non-finite part.
LossBreakdown total_loss(const LossBreakdown& parts, const LossWeights& w);

}  // namespace fctf::loss
