#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "fctf/corpus.hpp"
#include "fctf/error.hpp"
#include "fctf/mediaio.hpp"

using namespace fctf::synth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fctf_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Splits, DefaultCorpusCounts) {
  const auto s = assign_splits(7, 200);
  int tr = 0, va = 0, te = 0;
  for (const auto x : s) (x == Split::Train ? tr : x == Split::Val ? va : te)++;
  EXPECT_EQ(tr, 160);
  EXPECT_EQ(va, 20);
  EXPECT_EQ(te, 20);
  EXPECT_EQ(s, assign_splits(7, 200));
}

TEST(Splits, SmallCorpusKeepsTrain) {
  const auto s = assign_splits(1, 2);
  EXPECT_EQ(s[0], Split::Train);
  EXPECT_EQ(s[1], Split::Train);
}

TEST(Seeds, DistinctCorpusSeedsGiveDisjointIdentities) {
  std::set<std::uint64_t> a, b;
  for (int i = 0; i < 200; ++i) {
    a.insert(sample_identity(identity_seed(7, i)).skin_texture_seed);
    b.insert(sample_identity(identity_seed(8, i)).skin_texture_seed);
  }
  EXPECT_EQ(a.size(), 200u);
  for (const auto v : b) EXPECT_EQ(a.count(v), 0u);
  for (int i = 0; i < 200; ++i) EXPECT_NE(sample_identity(identity_seed(7, i)), sample_identity(identity_seed(8, i)));
}

TEST(MakeClip, ShapesAndDeterminism) {
  CorpusSpec spec{3, 2, 30, 11};
  const auto a = make_clip(spec, 1, 1, Split::Train);
  const auto b = make_clip(spec, 1, 1, Split::Train);
  EXPECT_EQ(a.frames.size(), a.motions.size());
  EXPECT_EQ(a.motions, b.motions);
  EXPECT_EQ(a.waveform, b.waveform);
  EXPECT_EQ(a.waveform.size(), 30u * kSamplesPerFrame);
  for (std::size_t t = 0; t < a.frames.size(); ++t) EXPECT_EQ(a.frames[t].pixels, b.frames[t].pixels);
}

TEST(Manifest, JsonRoundTrip) {
  const fs::path dir = scratch("manifest_rt");
  const auto m = build_corpus({5, 2, 12, 3}, dir);
  EXPECT_EQ(CorpusManifest::from_json(m.to_json()), m);
  EXPECT_EQ(load_manifest(dir), m);
  EXPECT_EQ(m.clips.size(), 10u);
  fs::remove_all(dir);
}

TEST(BuildCorpus, IdempotentAndGuarded) {
  const fs::path dir = scratch("idem");
  const CorpusSpec spec{2, 1, 25, 1};
  const auto first = build_corpus(spec, dir);
  const auto second = build_corpus(spec, dir);
  EXPECT_EQ(first.hash(), second.hash());
  EXPECT_THROW(build_corpus({2, 1, 26, 1}, dir), fctf::PreconditionError);
  const auto forced = build_corpus({2, 1, 26, 1}, dir, true);
  EXPECT_EQ(forced.spec.frames_per_clip, 26);
  fs::remove_all(dir);
}

TEST(BuildCorpus, MovedCorpusIsReused) {
  const fs::path dir = scratch("move_a"), moved = scratch("move_b");
  const CorpusSpec spec{2, 1, 25, 1};
  build_corpus(spec, dir);
  const auto stamp = fs::last_write_time(dir / "id0000" / "clip00" / "frame_0000.png");
  fs::rename(dir, moved);
  const auto again = build_corpus(spec, moved);
  EXPECT_EQ(again.root, fs::absolute(moved).lexically_normal().string());
  EXPECT_EQ(fs::last_write_time(moved / "id0000" / "clip00" / "frame_0000.png"), stamp);
  EXPECT_EQ(load_manifest(moved).root, again.root);
  EXPECT_THROW(build_corpus({2, 1, 26, 1}, moved), fctf::PreconditionError);
  fs::remove_all(moved);
}

TEST(BuildCorpus, ClipLoadsBackWithinQuantisation) {
  const fs::path dir = scratch("load");
  const CorpusSpec spec{2, 1, 10, 5};
  const auto m = build_corpus(spec, dir);
  const auto& ref = m.clips[1];
  const auto loaded = load_clip(dir, m, ref);
  const auto fresh = make_clip(spec, ref.identity, ref.clip, ref.split);
  EXPECT_EQ(loaded.identity, fresh.identity);
  ASSERT_EQ(loaded.motions.size(), fresh.motions.size());
  for (std::size_t t = 0; t < fresh.motions.size(); ++t) {
    EXPECT_DOUBLE_EQ(loaded.motions[t].lip_open, fresh.motions[t].lip_open);
    for (std::size_t k = 0; k < fresh.frames[t].pixels.size(); ++k)
      ASSERT_NEAR(loaded.frames[t].pixels[k], fresh.frames[t].pixels[k], 0.5 / 255.0 + 1e-6);
  }
  ASSERT_EQ(loaded.waveform.size(), fresh.waveform.size());
  for (std::size_t k = 0; k < fresh.waveform.size(); ++k) ASSERT_NEAR(loaded.waveform[k], fresh.waveform[k], 1.0 / 32767.0);
  fs::remove_all(dir);
}

TEST(BuildCorpus, MissingManifestIsPrecondition) {
  EXPECT_THROW(load_manifest(scratch("absent")), fctf::PreconditionError);
}
