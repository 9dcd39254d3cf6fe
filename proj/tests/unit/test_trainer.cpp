#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fctf/container.hpp"
#include "fctf/error.hpp"
#include "fctf/trainer.hpp"
#include "fixtures.hpp"

using namespace fctf;
using namespace fctf::train;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("fctf_trainer_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Batch tiny_batch(std::int64_t step = 0) {
  const auto& ds = test::tiny_dataset();
  const auto c = test::tiny_config();
  return sample_batch(ds, ds.clips_in(synth::Split::Train), c.seed, step, c.batch_size, c.window, c.min_source_gap);
}

}  // namespace

// --- config -----------------------------------------------------------------

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.steps = 17;
  c.weights.sync = 0.25;
  c.temporal_fusion = nets::TemporalMode::Lstm;
  c.discriminator = nets::DiscriminatorMode::Video;
  c.ortho_mode = loss::OrthoMode::Cosine;
  c.routing.manipulated = {1, 2, 7, 8};
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
  EXPECT_EQ(TrainConfig::from_json("{}"), TrainConfig{});
}

TEST(TrainConfig, RejectsUnknownAndInvalid) {
  EXPECT_THROW(TrainConfig::from_json(R"({"stepz": 3})"), InvalidArgument);
  EXPECT_THROW(TrainConfig::from_json(R"({"weights": {"foo": 1}})"), InvalidArgument);
  EXPECT_THROW(TrainConfig::from_json(R"({"steps": 0})"), InvalidArgument);
  EXPECT_THROW(TrainConfig::from_json(R"({"temporal_fusion": "gru"})"), InvalidArgument);
  EXPECT_THROW(TrainConfig::from_json(R"({"steps": "many"})"), InvalidArgument);
  EXPECT_THROW(TrainConfig::from_json("not json"), InvalidArgument);
}

TEST(TrainConfig, DottedSet) {
  TrainConfig c;
  c.set("weights.sync", "0.3");
  EXPECT_DOUBLE_EQ(c.weights.sync, 0.3);
  c.set("ortho_mode", "off");
  EXPECT_EQ(c.ortho_mode, loss::OrthoMode::Off);
  c.set("routing.manipulated", "[1,2,7,8]");
  EXPECT_EQ(c.routing.manipulated, (std::vector<int>{1, 2, 7, 8}));
  c.set("finetune_aux", "true");
  EXPECT_TRUE(c.finetune_aux);
  EXPECT_THROW(c.set("weights.nope", "1"), InvalidArgument);
  EXPECT_THROW(c.set("steps", "-4"), InvalidArgument);
  EXPECT_THROW(c.set("routing.audio_layers", "[5]"), InvalidArgument);
}

// --- batches ------------------------------------------------------------------

TEST(SampleBatch, DeterministicAndWellFormed) {
  const auto& ds = test::tiny_dataset();
  const auto a = tiny_batch(3), b = tiny_batch(3), c = tiny_batch(4);
  ASSERT_EQ(a.items.size(), 2u);
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    EXPECT_EQ(a.items[i].clip, b.items[i].clip);
    EXPECT_EQ(a.items[i].start, b.items[i].start);
    EXPECT_EQ(a.items[i].source, b.items[i].source);
  }
  EXPECT_TRUE(torch::equal(a.driving, b.driving));
  EXPECT_FALSE(torch::equal(a.driving, c.driving));
  EXPECT_EQ(a.driving.sizes(), (std::vector<std::int64_t>{2, 5, 3, 64, 64}));
  EXPECT_EQ(a.mels.sizes(), (std::vector<std::int64_t>{2, 5, 80, 16}));
  for (std::int64_t step = 0; step < 50; ++step) {
    const auto batch = tiny_batch(step);
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
      const auto& it = batch.items[i];
      EXPECT_EQ(ds.clip(it.clip).split, synth::Split::Train);
      EXPECT_GE(std::abs(it.source - (it.start + 2)), 10);
      EXPECT_EQ(batch.identity[static_cast<std::int64_t>(i)].item<std::int64_t>(), ds.clip(it.clip).identity);
      EXPECT_TRUE(torch::equal(batch.source[static_cast<std::int64_t>(i)], ds.frames(it.clip, {it.source})[0]));
    }
  }
}

TEST(SampleBatch, ImpossibleGapThrows) {
  const auto& ds = test::tiny_dataset();
  EXPECT_THROW(sample_batch(ds, ds.clips_in(synth::Split::Train), 1, 0, 2, 5, 40), InvalidArgument);
  EXPECT_THROW(sample_batch(ds, {}, 1, 0, 2, 5, 10), InvalidArgument);
}

// --- steps ----------------------------------------------------------------------

TEST(TrainStep, UpdatesOnlyOwnParameterGroups) {
  const auto& ds = test::tiny_dataset();
  TrainState st(test::tiny_config(), test::tiny_aux(), ds.fingerprint());
  const auto batch = tiny_batch();
  const auto g0 = st.generator_checksum(), d0 = st.discriminator_checksum(), a0 = st.aux_checksum();
  {
    const auto out = st.model->forward_window(batch.source, batch.driving, batch.mels);
    discriminator_update(st, batch, out);
  }
  const auto g1 = st.generator_checksum(), d1 = st.discriminator_checksum();
  EXPECT_EQ(g1, g0);
  EXPECT_NE(d1, d0);
  {
    const auto out = st.model->forward_window(batch.source, batch.driving, batch.mels);
    generator_update(st, batch, out);
  }
  EXPECT_NE(st.generator_checksum(), g1);
  EXPECT_EQ(st.discriminator_checksum(), d1);
  EXPECT_EQ(st.aux_checksum(), a0);
}

TEST(TrainStep, BreakdownAndOrthoToggle) {
  const auto& ds = test::tiny_dataset();
  for (auto mode : {loss::OrthoMode::Hadamard, loss::OrthoMode::Off}) {
    auto cfg = test::tiny_config();
    cfg.ortho_mode = mode;
    TrainState st(cfg, test::tiny_aux(), ds.fingerprint());
    const auto g0 = st.generator_checksum();
    const auto b = train_step(st, tiny_batch());
    EXPECT_NE(st.generator_checksum(), g0);
    const auto& w = cfg.weights;
    const double ortho_w = mode == loss::OrthoMode::Off ? 0.0 : w.ortho;
    EXPECT_NEAR(b.total, ortho_w * b.ortho + w.sync * b.sync + w.id * b.id + w.rec * b.rec + w.lpips * b.lpips + w.gan * b.gan_g,
                1e-12);
    EXPECT_GT(b.rec, 0.0);
    EXPECT_GT(b.gan_d, 0.0);
  }
}

TEST(TrainStep, FinetuneAuxMovesAuxOnlyWhenEnabled) {
  const auto& ds = test::tiny_dataset();
  auto cfg = test::tiny_config();
  cfg.finetune_aux = true;
  TrainState st(cfg, test::tiny_aux(), ds.fingerprint());
  const auto a0 = st.aux_checksum();
  train_step(st, tiny_batch());
  EXPECT_NE(st.aux_checksum(), a0);
  // The caller's networks are never touched.
  TrainState fresh(test::tiny_config(), test::tiny_aux(), ds.fingerprint());
  EXPECT_EQ(fresh.aux_checksum(), a0);
}

// --- checkpoints ----------------------------------------------------------------------

TEST(Checkpoint, ByteStableRoundTripAndExactForward) {
  const auto& ds = test::tiny_dataset();
  const auto dir = fresh_dir("roundtrip");
  TrainState st(test::tiny_config(), test::tiny_aux(), ds.fingerprint());
  train_step(st, tiny_batch());
  st.step = 1;
  st.save(dir / "a.fctf");
  auto loaded = TrainState::load(dir / "a.fctf");
  loaded->save(dir / "b.fctf");
  EXPECT_EQ(file_bytes(dir / "a.fctf"), file_bytes(dir / "b.fctf"));
  EXPECT_EQ(loaded->step, 1);
  EXPECT_EQ(loaded->config, st.config);
  EXPECT_EQ(loaded->generator_checksum(), st.generator_checksum());
  const auto b = tiny_batch(7);
  torch::NoGradGuard g;
  st.model->eval();
  loaded->model->eval();
  const auto x = st.model->forward_window(b.source, b.driving, b.mels).frames;
  const auto y = loaded->model->forward_window(b.source, b.driving, b.mels).frames;
  EXPECT_TRUE(torch::equal(x, y));
}

TEST(Checkpoint, ArchitectureMismatchFailsLoudly) {
  const auto& ds = test::tiny_dataset();
  const auto dir = fresh_dir("mismatch");
  TrainState st(test::tiny_config(), test::tiny_aux(), ds.fingerprint());
  st.save(dir / "a.fctf");
  auto other = test::tiny_config();
  other.temporal_fusion = nets::TemporalMode::Lstm;
  EXPECT_THROW(TrainState::load(dir / "a.fctf", &other), PreconditionError);
  // A module archive with mismatched shapes is rejected as well.
  auto ar = ckpt::TensorArchive::load(dir / "a.fctf");
  ar.put_string("meta/config_json", other.to_json());
  EXPECT_THROW(TrainState::from_archive(ar), PreconditionError);
  {
    std::ofstream f(dir / "junk.fctf", std::ios::binary);
    f << "FCTX-not-a-checkpoint";
  }
  EXPECT_THROW(TrainState::load(dir / "junk.fctf"), IoError);
  EXPECT_THROW(TrainState::load(dir / "missing.fctf"), PreconditionError);
}

// --- train loop ------------------------------------------------------------------------

TEST(Train, DeterministicUnderSeed) {
  const auto& ds = test::tiny_dataset();
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  const auto cfg = test::tiny_config(3);
  train::train(cfg, ds, test::tiny_aux(), {a});
  train::train(cfg, ds, test::tiny_aux(), {b});
  EXPECT_EQ(file_bytes(a / kCheckpointName), file_bytes(b / kCheckpointName));
  EXPECT_EQ(file_bytes(a / kLogName), file_bytes(b / kLogName));
  auto other = cfg;
  other.seed = 2;
  const auto c = fresh_dir("det_c");
  train::train(other, ds, test::tiny_aux(), {c});
  EXPECT_NE(file_bytes(a / kCheckpointName), file_bytes(c / kCheckpointName));
}

TEST(Train, ResumeContinuesWithoutGapAndMatchesUninterrupted) {
  const auto& ds = test::tiny_dataset();
  const auto full = fresh_dir("resume_full"), part = fresh_dir("resume_part");
  auto cfg = test::tiny_config(4);
  cfg.checkpoint_every = 2;
  train::train(cfg, ds, test::tiny_aux(), {full});
  auto short_cfg = cfg;
  short_cfg.steps = 2;
  train::train(short_cfg, ds, test::tiny_aux(), {part});
  EXPECT_EQ(read_log(part / kLogName).size(), 2u);
  TrainOptions o{part};
  o.resume = true;
  const auto st = train::train(cfg, ds, test::tiny_aux(), o);
  EXPECT_EQ(st->step, 4);
  const auto rows = read_log(part / kLogName);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].first, static_cast<std::int64_t>(i + 1));
  EXPECT_EQ(file_bytes(full / kCheckpointName), file_bytes(part / kCheckpointName));
}

TEST(Train, ResumeRejectsOtherCorpusAndConfig) {
  const auto& ds = test::tiny_dataset();
  const auto dir = fresh_dir("resume_reject");
  train::train(test::tiny_config(1), ds, test::tiny_aux(), {dir});
  TrainOptions o{dir};
  o.resume = true;
  auto changed = test::tiny_config(2);
  changed.lr = 3e-4;
  EXPECT_THROW(train::train(changed, ds, test::tiny_aux(), o), PreconditionError);
  synth::CorpusSpec spec = ds.spec();
  spec.corpus_seed = 12;
  const auto other = data::Dataset::synthesize(spec);
  EXPECT_THROW(train::train(test::tiny_config(2), other, test::tiny_aux(), o), PreconditionError);
}

TEST(Train, FrozenAuxIsBitIdentical) {
  const auto& ds = test::tiny_dataset();
  const auto dir = fresh_dir("frozen");
  TrainState before(test::tiny_config(), test::tiny_aux(), ds.fingerprint());
  const auto st = train::train(test::tiny_config(2), ds, test::tiny_aux(), {dir});
  EXPECT_EQ(st->aux_checksum(), before.aux_checksum());
}

TEST(Train, RequiresTrainedAux) {
  const auto& ds = test::tiny_dataset();
  aux::AuxNets untrained(8, 1);
  EXPECT_THROW(train::train(test::tiny_config(1), ds, untrained, {fresh_dir("untrained")}), PreconditionError);
}

// --- inference -------------------------------------------------------------------------

TEST(GenerateClip, CountsAndErrors) {
  const auto& ds = test::tiny_dataset();
  TrainState st(test::tiny_config(), test::tiny_aux(), ds.fingerprint());
  const auto frames = ds.all_frames(0);
  std::vector<int> idx(frames.size(0));
  std::iota(idx.begin(), idx.end(), 0);
  const auto mels = ds.mel_windows(0, idx);
  const auto out = generate_clip(st, frames[0], frames.narrow(0, 1, 12), mels.narrow(0, 1, 12));
  EXPECT_EQ(out.size(0), 12);
  EXPECT_EQ(generate_clip(st, frames[0], frames.narrow(0, 0, 0), mels.narrow(0, 0, 0)).size(0), 0);
  EXPECT_THROW(generate_clip(st, frames[0], frames.narrow(0, 1, 12), mels.narrow(0, 1, 11)), InvalidArgument);
  // Windows are independent: generating the first window alone gives the same frames.
  const auto first = generate_clip(st, frames[0], frames.narrow(0, 1, 5), mels.narrow(0, 1, 5));
  EXPECT_TRUE(torch::equal(first, out.narrow(0, 0, 5)));
}

TEST(MelWindowsFor, MatchesDatasetAndChecksLength) {
  const auto clip = synth::make_clip(test::tiny_dataset().spec(), 0, 0, synth::Split::Train);
  const auto w = mel_windows_for(clip.waveform, 3, 4, 30);
  EXPECT_EQ(w.sizes(), (std::vector<std::int64_t>{4, 80, 16}));
  const std::vector<float> half(clip.waveform.begin(), clip.waveform.begin() + 15 * 640);
  EXPECT_THROW(mel_windows_for(half, 0, 4, 30), InvalidArgument);
  EXPECT_EQ(mel_windows_for(clip.waveform, 0, 0, 30).size(0), 0);
}

TEST(CanonicalGrid, ShapeAndDeterminism) {
  const auto& ds = test::tiny_dataset();
  TrainState st(test::tiny_config(), test::tiny_aux(), ds.fingerprint());
  const auto ids = std::vector<int>{0, 1, 2};
  const auto a = canonical_grid(st, ds, ids, 4);
  const auto b = canonical_grid(st, ds, ids, 4);
  EXPECT_EQ(a.image.sizes(), (std::vector<std::int64_t>{3, 3 * 64, 4 * 64}));
  EXPECT_EQ(a.outputs.sizes(), (std::vector<std::int64_t>{3, 4, 3, 64, 64}));
  EXPECT_TRUE(torch::equal(a.image, b.image));
  EXPECT_GT(a.raw_variance, 0.0);
  EXPECT_THROW(canonical_grid(st, ds, {999}, 4), InvalidArgument);
  const auto dir = fresh_dir("grid");
  write_grid_png(a, dir / "grid.png");
  EXPECT_TRUE(fs::exists(dir / "grid.png"));
}
