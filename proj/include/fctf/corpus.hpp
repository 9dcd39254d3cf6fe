#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fctf/synthface.hpp"

namespace fctf::synth {

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct CorpusSpec {
  int identities = 200;
  int clips_per_identity = 4;
  int frames_per_clip = 75;
  std::uint64_t corpus_seed = 7;

  bool operator==(const CorpusSpec&) const = default;
};

struct ClipRef {
  int identity = 0;
  int clip = 0;
  Split split = Split::Train;
  std::string dir;  // relative to the corpus root

  bool operator==(const ClipRef&) const = default;
};

struct CorpusManifest {
  std::string root;
  CorpusSpec spec;
  std::vector<Split> identity_split;  // indexed by identity
  std::vector<ClipRef> clips;

  [[nodiscard]] std::vector<int> identities_in(Split s) const;
  [[nodiscard]] std::vector<ClipRef> clips_in(Split s) const;
  [[nodiscard]] std::string to_json() const;
  static CorpusManifest from_json(const std::string& text);
  /// FNV-1a of to_json(); stable across runs for a fixed spec and root.
  [[nodiscard]] std::uint64_t hash() const;

  bool operator==(const CorpusManifest&) const = default;
};

struct ClipSample {
  int identity_index = 0;
  int clip_index = 0;
  IdentityParams identity;
  std::vector<MotionParams> motions;
  std::vector<FaceFrame> frames;
  std::vector<float> waveform;
  Split split = Split::Train;
};

/// Seed of identity `index` under a corpus seed.
std::uint64_t identity_seed(std::uint64_t corpus_seed, int index);
/// Seed of the motion stream of one clip.
std::uint64_t clip_seed(std::uint64_t corpus_seed, int identity_index, int clip_index);

/// Identity-disjoint 80/10/10 assignment (floor for val and test).
std::vector<Split> assign_splits(std::uint64_t corpus_seed, int identities);

/// Regenerates one clip in memory.
ClipSample make_clip(const CorpusSpec& spec, int identity_index, int clip_index, Split split);

/// Writes the corpus to out_dir. Re-running with the same spec is a no-op;
/// a different spec over an existing corpus throws PreconditionError unless
/// force is set.
CorpusManifest build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir, bool force = false);

CorpusManifest load_manifest(const std::filesystem::path& corpus_dir);

/// Loads frames, waveform and factors of one clip from disk.
ClipSample load_clip(const std::filesystem::path& corpus_dir, const CorpusManifest& manifest, const ClipRef& ref);

}  // namespace fctf::synth
