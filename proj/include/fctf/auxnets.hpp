#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "fctf/dataset.hpp"

namespace fctf::aux {

inline constexpr int kEmbedDim = 128;
inline constexpr int kSyncFrames = 5;
inline constexpr int kFeatureMaps = 4;
/// Minimum audio shift, in video frames, of a negative sync pair.
inline constexpr int kMinNegativeShift = 10;

/// Sync network: video branch on the lower image half of 5 frames, audio
/// branch on one mel window, cosine logit with learned scale and bias.
class SyncNetImpl : public torch::nn::Module {
 public:
  SyncNetImpl();
  /// frames [B,5,3,64,64] -> unit vectors [B,128].
  torch::Tensor embed_video(const torch::Tensor& frames);
  /// mel [B,80,16] -> unit vectors [B,128].
  torch::Tensor embed_audio(const torch::Tensor& mel);
  torch::Tensor logit(const torch::Tensor& f_v, const torch::Tensor& f_a);

 private:
  torch::nn::Sequential video_{nullptr}, audio_{nullptr};
  torch::Tensor log_scale_, bias_;
};
TORCH_MODULE(SyncNet);

/// Identity embedder: conv trunk, unit-norm 128-d embedding, cosine classifier head.
class IdNetImpl : public torch::nn::Module {
 public:
  explicit IdNetImpl(int classes);
  torch::Tensor embed(const torch::Tensor& images);
  torch::Tensor class_logits(const torch::Tensor& embedding);
  [[nodiscard]] int classes() const { return classes_; }

 private:
  int classes_;
  torch::nn::Sequential trunk_{nullptr};
  torch::Tensor centres_;
};
TORCH_MODULE(IdNet);

/// Frozen random-weight 4-stage conv net; weights come from a named Philox seed.
class PerceptualNetImpl : public torch::nn::Module {
 public:
  explicit PerceptualNetImpl(std::uint64_t seed = kDefaultSeed);
  /// Four feature maps at strides 1, 2, 4, 8.
  std::vector<torch::Tensor> features(const torch::Tensor& images);

  static constexpr std::uint64_t kDefaultSeed = 0x9e7ce9a1ull;

 private:
  std::vector<torch::nn::Conv2d> stages_;
};
TORCH_MODULE(PerceptualNet);

/// The three auxiliary networks with their trained flags.
struct AuxNets {
  SyncNet sync;
  IdNet id;
  PerceptualNet perceptual;
  bool sync_trained = false;
  bool id_trained = false;

  /// Seeds the torch generator with init_seed before building the trainable nets.
  AuxNets(int id_classes, std::uint64_t init_seed);
  /// Switches requires_grad for all three nets.
  void set_trainable(bool sync_on, bool id_on);
  void to(torch::Dtype dtype);
};

/// Thrown-on-misuse views of the trained networks.
torch::Tensor sync_video(AuxNets& aux, const torch::Tensor& frames);
torch::Tensor sync_audio(AuxNets& aux, const torch::Tensor& mel);
torch::Tensor id_embed(AuxNets& aux, const torch::Tensor& images);
std::vector<torch::Tensor> perceptual_features(AuxNets& aux, const torch::Tensor& images);

struct PretrainOptions {
  int sync_steps = 5000;
  int sync_batch = 32;
  int id_steps = 3000;
  int id_batch = 64;
  double sync_lr = 3e-4;
  double id_lr = 1e-3;
  std::uint64_t seed = 1;
  int eval_pairs = 2000;
};

struct SyncReport {
  double accuracy = 0.0;       // held-out aligned-vs-shifted classification
  double mean_aligned_cos = 0.0;
  double mean_shifted_cos = 0.0;
  std::vector<double> loss_curve;
};

struct IdReport {
  double auc = 0.0;  // held-out verification
  std::vector<double> loss_curve;
};

/// Sampled (clip, video centre, audio centre, label) sync pairs.
struct SyncPairs {
  torch::Tensor video;  // [n,5,3,64,64]
  torch::Tensor mel;    // [n,80,16]
  torch::Tensor label;  // [n] float, 1 aligned / 0 shifted
};
SyncPairs sample_sync_pairs(const data::Dataset& ds, const std::vector<std::size_t>& clips, std::uint64_t key, int n);

SyncReport train_syncnet(AuxNets& aux, const data::Dataset& ds, const PretrainOptions& opt);
IdReport train_id_embedder(AuxNets& aux, const data::Dataset& ds, const PretrainOptions& opt);

/// Accuracy and mean cosines on the validation split.
SyncReport evaluate_syncnet(AuxNets& aux, const data::Dataset& ds, std::uint64_t seed, int pairs);
/// Verification AUC over same/different identity pairs drawn from the
/// held-out last clip of each training identity.
double evaluate_id_embedder(AuxNets& aux, const data::Dataset& ds, std::uint64_t seed, int pairs);

/// Area under the ROC curve via rank statistics (ties count half).
double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

struct PretrainReport {
  SyncReport sync;
  IdReport id;
  double seconds = 0.0;  // wall time of both trainings
  [[nodiscard]] std::string to_json() const;
};

/// Trains sync and identity nets on the training split, seeds the perceptual
/// net, and writes syncnet.fctf, idnet.fctf, perceptual.fctf and aux_report.json.
PretrainReport pretrain_aux(const data::Dataset& ds, const PretrainOptions& opt, const std::filesystem::path& out_dir);

void save_aux(const AuxNets& aux, const std::filesystem::path& dir);
/// Loads syncnet.fctf, idnet.fctf and perceptual.fctf; throws PreconditionError naming a missing file.
AuxNets load_aux(const std::filesystem::path& dir);

}  // namespace fctf::aux
