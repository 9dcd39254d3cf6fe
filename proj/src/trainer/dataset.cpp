#include "fctf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fctf/audiofront.hpp"
#include "fctf/error.hpp"
#include "fctf/prng.hpp"

namespace fctf::data {
namespace {

torch::Tensor quantize_frames(const std::vector<synth::FaceFrame>& frames) {
  const auto n = static_cast<std::int64_t>(frames.size());
  auto out = torch::empty({n, synth::kImageSize, synth::kImageSize, 3}, torch::kUInt8);
  auto* dst = out.data_ptr<std::uint8_t>();
  std::size_t k = 0;
  for (const auto& f : frames) {
    if (f.height != synth::kImageSize || f.width != synth::kImageSize) throw InvalidArgument("dataset: frames must be 64x64");
    for (const float v : f.pixels) dst[k++] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

torch::Tensor mel_tensor(const std::vector<float>& wave) {
  const auto mel = audio::mel_spectrogram(wave);
  return torch::from_blob(const_cast<float*>(mel.values.data()), {audio::kMels, mel.frames}, torch::kFloat32).clone();
}

std::uint64_t content_fingerprint(const synth::CorpusSpec& spec) {
  synth::CorpusManifest m;
  m.spec = spec;
  m.identity_split = synth::assign_splits(spec.corpus_seed, spec.identities);
  return m.hash();
}

}  // namespace

torch::Tensor window_steps(const std::vector<int>& frame_indices, int mel_frames) {
  auto out = torch::empty({static_cast<std::int64_t>(frame_indices.size()), audio::kWindowSteps}, torch::kLong);
  auto* p = out.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < frame_indices.size(); ++i) {
    require(frame_indices[i] >= 0, "window_steps: negative frame index");
    const auto centre = static_cast<int>(std::lround(frame_indices[i] * audio::kStepsPerVideoFrame));
    for (int s = 0; s < audio::kWindowSteps; ++s)
      p[i * audio::kWindowSteps + static_cast<std::size_t>(s)] = std::clamp(centre - audio::kWindowSteps / 2 + s, 0, mel_frames - 1);
  }
  return out;
}

torch::Tensor to_float_images(const torch::Tensor& u8) {
  return u8.permute({0, 3, 1, 2}).to(torch::kFloat32).div(255.0).contiguous();
}

Dataset Dataset::load(const std::filesystem::path& corpus_dir) {
  const auto manifest = synth::load_manifest(corpus_dir);
  Dataset d;
  d.spec_ = manifest.spec;
  d.fingerprint_ = content_fingerprint(manifest.spec);
  d.clips_.reserve(manifest.clips.size());
  for (const auto& ref : manifest.clips) {
    const auto clip = synth::load_clip(corpus_dir, manifest, ref);
    ClipTensors c;
    c.identity = ref.identity;
    c.clip = ref.clip;
    c.split = ref.split;
    c.identity_params = clip.identity;
    c.motions = clip.motions;
    c.frames = quantize_frames(clip.frames);
    c.mel = mel_tensor(clip.waveform);
    d.clips_.push_back(std::move(c));
  }
  return d;
}

Dataset Dataset::from_clips(const synth::CorpusSpec& spec, const std::vector<synth::ClipSample>& clips) {
  Dataset d;
  d.spec_ = spec;
  d.fingerprint_ = content_fingerprint(spec);
  for (const auto& clip : clips) {
    ClipTensors c;
    c.identity = clip.identity_index;
    c.clip = clip.clip_index;
    c.split = clip.split;
    c.identity_params = clip.identity;
    c.motions = clip.motions;
    c.frames = quantize_frames(clip.frames);
    std::vector<float> wave(clip.waveform.size());
    for (std::size_t i = 0; i < wave.size(); ++i)
      wave[i] = static_cast<float>(std::lround(std::clamp(clip.waveform[i], -1.0f, 1.0f) * 32767.0f) / 32767.0);
    c.mel = mel_tensor(wave);
    d.clips_.push_back(std::move(c));
  }
  return d;
}

Dataset Dataset::synthesize(const synth::CorpusSpec& spec) {
  const auto splits = synth::assign_splits(spec.corpus_seed, spec.identities);
  std::vector<synth::ClipSample> clips;
  for (int i = 0; i < spec.identities; ++i)
    for (int c = 0; c < spec.clips_per_identity; ++c)
      clips.push_back(synth::make_clip(spec, i, c, splits[static_cast<std::size_t>(i)]));
  return from_clips(spec, clips);
}

std::vector<std::size_t> Dataset::clips_in(synth::Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips_.size(); ++i)
    if (clips_[i].split == s) out.push_back(i);
  return out;
}

std::vector<int> Dataset::identities_in(synth::Split s) const {
  std::set<int> ids;
  for (const auto& c : clips_)
    if (c.split == s) ids.insert(c.identity);
  return {ids.begin(), ids.end()};
}

torch::Tensor Dataset::frames(std::size_t clip, const std::vector<int>& indices) const {
  const auto& c = clips_.at(clip);
  for (const int i : indices) require(i >= 0 && i < c.length(), "frame index out of range");
  const auto idx = torch::tensor(std::vector<std::int64_t>(indices.begin(), indices.end()), torch::kLong);
  return to_float_images(c.frames.index_select(0, idx));
}

torch::Tensor Dataset::all_frames(std::size_t clip) const { return to_float_images(clips_.at(clip).frames); }

torch::Tensor Dataset::mel_windows(std::size_t clip, const std::vector<int>& indices) const {
  const auto& c = clips_.at(clip);
  const auto steps = window_steps(indices, static_cast<int>(c.mel.size(1)));
  // [80, n*16] -> [n,80,16]
  return c.mel.index_select(1, steps.flatten())
      .view({audio::kMels, static_cast<std::int64_t>(indices.size()), audio::kWindowSteps})
      .permute({1, 0, 2})
      .contiguous();
}

}  // namespace fctf::data
