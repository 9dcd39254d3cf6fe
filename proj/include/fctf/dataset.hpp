#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "fctf/corpus.hpp"

namespace fctf::data {

/// One clip held in memory: 8-bit frames and the log-mel spectrogram of its audio.
struct ClipTensors {
  int identity = 0;
  int clip = 0;
  synth::Split split = synth::Split::Train;
  synth::IdentityParams identity_params;
  std::vector<synth::MotionParams> motions;
  torch::Tensor frames;  // [T,64,64,3] uint8
  torch::Tensor mel;     // [80,F] float

  [[nodiscard]] int length() const { return static_cast<int>(motions.size()); }
};

/// Mel step indices [n,16] of frame_window for each video frame index.
torch::Tensor window_steps(const std::vector<int>& frame_indices, int mel_frames);

/// A corpus loaded into memory.
class Dataset {
 public:
  /// Reads every clip listed in the manifest of corpus_dir.
  static Dataset load(const std::filesystem::path& corpus_dir);
  /// Builds the same tensors from in-memory clips, with the 8-bit / 16-bit
  /// quantisation the on-disk corpus applies.
  static Dataset from_clips(const synth::CorpusSpec& spec, const std::vector<synth::ClipSample>& clips);
  /// Regenerates a corpus in memory without touching the disk.
  static Dataset synthesize(const synth::CorpusSpec& spec);

  [[nodiscard]] const std::vector<ClipTensors>& clips() const { return clips_; }
  [[nodiscard]] const ClipTensors& clip(std::size_t i) const { return clips_.at(i); }
  [[nodiscard]] std::vector<std::size_t> clips_in(synth::Split s) const;
  [[nodiscard]] std::vector<int> identities_in(synth::Split s) const;
  [[nodiscard]] const synth::CorpusSpec& spec() const { return spec_; }
  /// Stable content fingerprint (manifest hash minus the root path).
  [[nodiscard]] std::uint64_t fingerprint() const { return fingerprint_; }

  /// Float frames [n,3,64,64] in [0,1].
  [[nodiscard]] torch::Tensor frames(std::size_t clip, const std::vector<int>& indices) const;
  [[nodiscard]] torch::Tensor all_frames(std::size_t clip) const;
  /// Mel windows [n,80,16] centred on the given video frame indices.
  [[nodiscard]] torch::Tensor mel_windows(std::size_t clip, const std::vector<int>& indices) const;

 private:
  synth::CorpusSpec spec_;
  std::vector<ClipTensors> clips_;
  std::uint64_t fingerprint_ = 0;
};

/// uint8 HWC batch -> float NCHW in [0,1].
torch::Tensor to_float_images(const torch::Tensor& u8);

}  // namespace fctf::data
