#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fctf/auxnets.hpp"
#include "fctf/container.hpp"
#include "fctf/dataset.hpp"
#include "fctf/losses.hpp"
#include "fctf/nets.hpp"

namespace fctf::train {

struct TrainConfig {
  int steps = 6000;
  int batch_size = 4;
  int window = 5;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  loss::LossWeights weights;
  nets::LayerRouting routing;
  nets::TemporalMode temporal_fusion = nets::TemporalMode::Conv1d;
  nets::DiscriminatorMode discriminator = nets::DiscriminatorMode::Image;
  loss::OrthoMode ortho_mode = loss::OrthoMode::Hadamard;
  bool finetune_aux = false;
  double aux_lr = 1e-5;
  std::uint64_t seed = 1;
  int min_source_gap = 10;
  int checkpoint_every = 1000;

  void validate() const;
  [[nodiscard]] std::string to_json() const;
  /// Unknown keys throw InvalidArgument. Missing keys keep their defaults.
  static TrainConfig from_json(const std::string& text);
  /// Sets one field from a dotted key ("weights.sync", "routing.manipulated")
  /// and a JSON-literal or bare-string value.
  void set(const std::string& key, const std::string& value);
  /// Architecture fields a checkpoint must agree on.
  [[nodiscard]] bool same_architecture(const TrainConfig& o) const;

  bool operator==(const TrainConfig&) const = default;
};

/// Everything a checkpoint holds.
class TrainState {
 public:
  /// Fresh networks seeded from config.seed.
  TrainState(const TrainConfig& config, aux::AuxNets aux, std::uint64_t corpus_fingerprint);

  TrainConfig config;
  nets::FaceModel model{nullptr};
  nets::Discriminator disc{nullptr};
  aux::AuxNets aux;
  std::unique_ptr<torch::optim::Adam> g_opt, d_opt, aux_opt;
  std::int64_t step = 0;
  std::uint64_t corpus_fingerprint = 0;

  [[nodiscard]] ckpt::TensorArchive to_archive() const;
  void save(const std::filesystem::path& path) const;
  /// Rebuilds a state from an archive. When `expected` is given its
  /// architecture must match the stored config.
  static std::unique_ptr<TrainState> from_archive(const ckpt::TensorArchive& ar, const TrainConfig* expected = nullptr);
  static std::unique_ptr<TrainState> load(const std::filesystem::path& path, const TrainConfig* expected = nullptr);

  /// Generator-side parameter checksum (encoders, fusion, generator).
  [[nodiscard]] std::uint64_t generator_checksum() const;
  [[nodiscard]] std::uint64_t discriminator_checksum() const;
  [[nodiscard]] std::uint64_t aux_checksum() const;
};

struct BatchItem {
  std::size_t clip = 0;
  int start = 0;   // first driving frame
  int source = 0;  // source frame index, same clip
};

struct Batch {
  std::vector<BatchItem> items;
  torch::Tensor source;    // [B,3,64,64]
  torch::Tensor driving;   // [B,T,3,64,64]
  torch::Tensor mels;      // [B,T,80,16]
  torch::Tensor lip_open;  // [B,T]
  torch::Tensor identity;  // [B] long
};

/// Deterministic under (seed, step): B windows of T frames from training
/// clips, each with a same-clip source at least min_gap frames from the window centre.
Batch sample_batch(const data::Dataset& ds, const std::vector<std::size_t>& clips, std::uint64_t seed, std::int64_t step,
                   int batch, int window, int min_gap);

/// Discriminator step on real and detached generated windows; returns gan_d.
double discriminator_update(TrainState& st, const Batch& batch, const nets::WindowOutputs& out);
/// Generator-side step on the weighted total; gan_d is left 0.
loss::LossBreakdown generator_update(TrainState& st, const Batch& batch, const nets::WindowOutputs& out);
/// One discriminator update followed by one generator update.
loss::LossBreakdown train_step(TrainState& st, const Batch& batch);

struct TrainOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  std::function<void(std::int64_t, const loss::LossBreakdown&)> on_step;
};

inline constexpr const char* kLogHeader = "step,ortho,sync,id,rec,lpips,gan_g,gan_d,total";
inline constexpr const char* kCheckpointName = "checkpoint.fctf";
inline constexpr const char* kLogName = "train_log.csv";

/// Runs config.steps steps (continuing from the saved checkpoint when resume
/// is set), writing the log and checkpoints to out_dir.
std::unique_ptr<TrainState> train(const TrainConfig& config, const data::Dataset& ds, const aux::AuxNets& aux,
                                  const TrainOptions& opt);

/// Parses a training log written by train().
std::vector<std::pair<std::int64_t, loss::LossBreakdown>> read_log(const std::filesystem::path& path);

/// Eval-mode generation over non-overlapping windows of config.window frames.
/// source [3,64,64], driving [n,3,64,64], mels [n,80,16]; returns [n,3,64,64].
torch::Tensor generate_clip(TrainState& st, const torch::Tensor& source, const torch::Tensor& driving,
                            const torch::Tensor& mels);

/// Mel windows [n,80,16] for frames first..first+n-1 of a waveform at 16 kHz.
/// Throws InvalidArgument when the audio does not cover the frames within one frame's duration.
torch::Tensor mel_windows_for(const std::vector<float>& wave16k, int first, int n, int total_frames);

struct CanonicalGrid {
  torch::Tensor image;  // [3, rows*64, cols*64]
  torch::Tensor inputs;  // [rows, cols, 3, 64, 64]
  torch::Tensor outputs; // same shape, canonical renders
  double raw_variance = 0.0;
  double canonical_variance = 0.0;
  [[nodiscard]] double ratio() const { return raw_variance > 0 ? canonical_variance / raw_variance : 0.0; }
};

/// Canonical renders for frames_per_id frames spread over each identity's clips.
CanonicalGrid canonical_grid(TrainState& st, const data::Dataset& ds, const std::vector<int>& identities, int frames_per_id);
void write_grid_png(const CanonicalGrid& grid, const std::filesystem::path& path);

}  // namespace fctf::train
