#include "fctf/losses.hpp"

#include <cmath>

#include "fctf/error.hpp"

namespace fctf::loss {
namespace F = torch::nn::functional;
namespace {

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (!a.sizes().equals(b.sizes()))
    throw InvalidArgument(std::string(who) + ": shape mismatch " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
}

torch::Tensor manipulated(const torch::Tensor& z, const nets::LayerRouting& routing) {
  if (z.dim() < 2 || z.size(-2) != nets::kLayers)
    throw InvalidArgument("ortho_loss: expected codes [..., 14, N], got " + c10::str(z.sizes()));
  const auto rows = routing.manipulated_rows();
  return z.index_select(z.dim() - 2, torch::tensor(rows, torch::kLong));
}

}  // namespace

std::string to_string(OrthoMode m) {
  switch (m) {
    case OrthoMode::Off: return "off";
    case OrthoMode::Cosine: return "cosine";
    case OrthoMode::Hadamard: return "hadamard";
  }
  return "hadamard";
}

OrthoMode ortho_mode_from_string(const std::string& s) {
  if (s == "off") return OrthoMode::Off;
  if (s == "cosine") return OrthoMode::Cosine;
  if (s == "hadamard") return OrthoMode::Hadamard;
  throw InvalidArgument("ortho_mode must be off|cosine|hadamard, got '" + s + "'");
}

void LossWeights::validate() const {
  for (const double v : {ortho, sync, id, rec, lpips, gan})
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("loss weights must be finite and nonnegative");
}

torch::Tensor ortho_hadamard(const torch::Tensor& z_sc, const torch::Tensor& z_cd, const nets::LayerRouting& routing) {
  check_pair(z_sc, z_cd, "ortho_loss");
  if (routing.manipulated.empty()) return torch::zeros({}, z_sc.options());
  const auto prod = manipulated(z_sc, routing) * manipulated(z_cd, routing);
  return prod.sum(-1).div(static_cast<double>(z_sc.size(-1))).mean();
}

torch::Tensor ortho_cosine(const torch::Tensor& z_sc, const torch::Tensor& z_cd, const nets::LayerRouting& routing) {
  check_pair(z_sc, z_cd, "ortho_loss");
  if (routing.manipulated.empty()) return torch::zeros({}, z_sc.options());
  return F::cosine_similarity(manipulated(z_sc, routing), manipulated(z_cd, routing),
                              F::CosineSimilarityFuncOptions().dim(-1).eps(1e-8))
      .mean();
}

torch::Tensor ortho_loss(const torch::Tensor& z_sc, const torch::Tensor& z_cd, const nets::LayerRouting& routing,
                         OrthoMode mode) {
  return mode == OrthoMode::Cosine ? ortho_cosine(z_sc, z_cd, routing) : ortho_hadamard(z_sc, z_cd, routing);
}

torch::Tensor cosine_distance(const torch::Tensor& a, const torch::Tensor& b) {
  check_pair(a, b, "cosine_distance");
  return (1.0 - F::cosine_similarity(a, b, F::CosineSimilarityFuncOptions().dim(1).eps(1e-8))).mean();
}

torch::Tensor sync_loss(aux::AuxNets& aux, const torch::Tensor& frames, const torch::Tensor& mel) {
  return cosine_distance(aux::sync_video(aux, frames), aux::sync_audio(aux, mel));
}

torch::Tensor id_loss(aux::AuxNets& aux, const torch::Tensor& x_g, const torch::Tensor& x_d) {
  check_pair(x_g, x_d, "id_loss");
  return cosine_distance(aux::id_embed(aux, x_g), aux::id_embed(aux, x_d));
}

torch::Tensor rec_loss(const torch::Tensor& x_g, const torch::Tensor& x_d) {
  check_pair(x_g, x_d, "rec_loss");
  return (x_g - x_d).abs().mean();
}

torch::Tensor lpips_from_features(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  require(a.size() == b.size() && !a.empty(), "lpips: feature lists differ");
  torch::Tensor acc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ms = (a[i] - b[i]).square().flatten(1).mean(1);
    // sqrt has an infinite slope at 0; the masked branch keeps identical pairs at exactly 0 with zero gradient.
    const auto positive = ms > 0;
    const auto d = torch::where(positive, ms.clamp_min(1e-30).sqrt(), torch::zeros_like(ms));
    acc = acc.defined() ? acc + d : d;
  }
  return (acc / static_cast<double>(a.size())).mean();
}

torch::Tensor lpips_loss(aux::AuxNets& aux, const torch::Tensor& x_g, const torch::Tensor& x_d) {
  check_pair(x_g, x_d, "lpips_loss");
  return lpips_from_features(aux::perceptual_features(aux, x_g), aux::perceptual_features(aux, x_d));
}

torch::Tensor gan_d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  // -log sigma(x) = softplus(-x); -log(1 - sigma(x)) = softplus(x).
  return F::softplus(-real_logits.clamp(-kLogitClamp, kLogitClamp)).mean() +
         F::softplus(fake_logits.clamp(-kLogitClamp, kLogitClamp)).mean();
}

torch::Tensor gan_g_loss(const torch::Tensor& fake_logits) {
  return F::softplus(-fake_logits.clamp(-kLogitClamp, kLogitClamp)).mean();
}

GanLosses gan_losses(nets::Discriminator& d, const torch::Tensor& real, const torch::Tensor& fake) {
  check_pair(real, fake, "gan_losses");
  GanLosses out;
  out.gan_d = gan_d_loss(d->score_windows(real), d->score_windows(fake.detach()));
  out.gan_g = gan_g_loss(d->score_windows(fake));
  return out;
}

LossBreakdown total_loss(const LossBreakdown& parts, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {{"ortho", parts.ortho}, {"sync", parts.sync},   {"id", parts.id},
                                                  {"rec", parts.rec},     {"lpips", parts.lpips}, {"gan_g", parts.gan_g}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw NumericError(std::string("loss term '") + name + "' is not finite");
  LossBreakdown out = parts;
  out.total = w.ortho * parts.ortho + w.sync * parts.sync + w.id * parts.id + w.rec * parts.rec +
              w.lpips * parts.lpips + w.gan * parts.gan_g;
  return out;
}

}  // namespace fctf::loss
