#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fctf/fctf.h"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fctf_capi_" + name);
  fs::remove_all(p);
  return p;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  fctf_string_free(s);
  return out;
}

fctf_corpus_spec small_spec() {
  fctf_corpus_spec s;
  fctf_corpus_spec_default(&s);
  s.identities = 10;
  s.clips_per_identity = 2;
  s.frames_per_clip = 20;
  s.seed = 3;
  return s;
}

/// A tiny corpus, aux set and 2-step model shared by the tests below.
class CApi : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = temp_dir("suite");
    const auto spec = small_spec();
    ASSERT_EQ(fctf_synth_data(&spec, (root_ / "corpus").c_str(), 0, nullptr), FCTF_OK) << fctf_last_error();
    ASSERT_EQ(fctf_dataset_open((root_ / "corpus").c_str(), &ds_), FCTF_OK) << fctf_last_error();
    fctf_pretrain_options o;
    fctf_pretrain_options_default(&o);
    o.sync_steps = o.id_steps = 2;
    o.sync_batch = o.id_batch = 4;
    o.eval_pairs = 10;
    char* report = nullptr;
    ASSERT_EQ(fctf_pretrain_aux(ds_, &o, (root_ / "aux").c_str(), &report), FCTF_OK) << fctf_last_error();
    report_ = take(report);
    ASSERT_EQ(fctf_aux_load((root_ / "aux").c_str(), &aux_), FCTF_OK) << fctf_last_error();
    char* cfg = nullptr;
    ASSERT_EQ(fctf_config_default(&cfg), FCTF_OK);
    const std::string def = take(cfg);
    char* a = nullptr;
    char* b = nullptr;
    ASSERT_EQ(fctf_config_set(def.c_str(), "steps", "2", &a), FCTF_OK);
    ASSERT_EQ(fctf_config_set(a, "batch_size", "2", &b), FCTF_OK) << fctf_last_error();
    fctf_string_free(a);
    config_ = take(b);
  }

  static void TearDownTestSuite() {
    fctf_aux_free(aux_);
    fctf_dataset_free(ds_);
    fs::remove_all(root_);
  }

  static inline fs::path root_;
  static inline fctf_dataset* ds_ = nullptr;
  static inline fctf_aux* aux_ = nullptr;
  static inline std::string report_, config_;
};

int steps_seen = 0;
void count_steps(int64_t, int64_t total, const double* parts, void*) {
  ++steps_seen;
  EXPECT_EQ(total, 2);
  EXPECT_NE(parts, nullptr);
}

}  // namespace

TEST(CApiBasics, VersionAndErrors) {
  EXPECT_GT(std::strlen(fctf_version()), 0u);
  fctf_dataset* ds = nullptr;
  EXPECT_EQ(fctf_dataset_open(nullptr, &ds), FCTF_INVALID_ARGUMENT);
  EXPECT_GT(std::strlen(fctf_last_error()), 0u);
  EXPECT_NE(fctf_dataset_open(temp_dir("absent").c_str(), &ds), FCTF_OK);
  EXPECT_EQ(ds, nullptr);
  fctf_aux* a = nullptr;
  EXPECT_EQ(fctf_aux_load(temp_dir("noaux").c_str(), &a), FCTF_PRECONDITION);
  EXPECT_NE(std::string(fctf_last_error()).find("syncnet.fctf"), std::string::npos) << fctf_last_error();
  fctf_model* m = nullptr;
  EXPECT_EQ(fctf_model_load((temp_dir("nomodel") / "checkpoint.fctf").c_str(), &m), FCTF_PRECONDITION);
  char* out = nullptr;
  EXPECT_EQ(fctf_config_normalize("{\"steps\": 0}", &out), FCTF_INVALID_ARGUMENT);
  EXPECT_EQ(fctf_config_normalize("{\"nonsense\": 1}", &out), FCTF_INVALID_ARGUMENT);
  EXPECT_EQ(fctf_config_normalize("{not json", &out), FCTF_INVALID_ARGUMENT);
  EXPECT_EQ(fctf_config_normalize("{}", &out), FCTF_OK);
  EXPECT_EQ(std::strlen(fctf_last_error()), 0u);
  fctf_string_free(out);
}

TEST(CApiBasics, SynthDataIsReproducible) {
  const auto spec = small_spec();
  uint64_t h1 = 0, h2 = 0, h3 = 0;
  const auto dir = temp_dir("synth");
  ASSERT_EQ(fctf_synth_data(&spec, dir.c_str(), 0, &h1), FCTF_OK) << fctf_last_error();
  ASSERT_EQ(fctf_synth_data(&spec, dir.c_str(), 0, &h2), FCTF_OK) << fctf_last_error();
  EXPECT_EQ(h1, h2);
  auto other = spec;
  other.identities = 11;
  EXPECT_EQ(fctf_synth_data(&other, dir.c_str(), 0, &h3), FCTF_PRECONDITION);
  EXPECT_EQ(fctf_synth_data(&other, dir.c_str(), 1, &h3), FCTF_OK) << fctf_last_error();
  EXPECT_NE(h1, h3);
  fs::remove_all(dir);
}

TEST_F(CApi, DatasetInfo) {
  int clips = 0, test_ids = 0;
  uint64_t fp = 0;
  ASSERT_EQ(fctf_dataset_info(ds_, &clips, &test_ids, &fp), FCTF_OK);
  EXPECT_EQ(clips, 20);
  EXPECT_EQ(test_ids, 1);
  EXPECT_NE(fp, 0u);
  int ids[4] = {-1, -1, -1, -1};
  int count = 0;
  ASSERT_EQ(fctf_dataset_test_identities(ds_, ids, 4, &count), FCTF_OK);
  EXPECT_EQ(count, 1);
  EXPECT_GE(ids[0], 0);
  EXPECT_NE(report_.find("sync_accuracy"), std::string::npos);
}

TEST_F(CApi, ConfigSetAndNormalize) {
  char* out = nullptr;
  ASSERT_EQ(fctf_config_set(config_.c_str(), "weights.sync", "0.25", &out), FCTF_OK) << fctf_last_error();
  const std::string s = take(out);
  EXPECT_NE(s.find("0.25"), std::string::npos);
  EXPECT_EQ(fctf_config_set(config_.c_str(), "weights.bogus", "1", &out), FCTF_INVALID_ARGUMENT);
  EXPECT_EQ(fctf_config_set(config_.c_str(), "ortho_mode", "sideways", &out), FCTF_INVALID_ARGUMENT);
  ASSERT_EQ(fctf_config_set(config_.c_str(), "ortho_mode", "off", &out), FCTF_OK);
  EXPECT_NE(take(out).find("\"off\""), std::string::npos);
}

TEST_F(CApi, TrainSaveLoadGenerateEvaluate) {
  const auto out = root_ / "train";
  fctf_model* m = nullptr;
  steps_seen = 0;
  ASSERT_EQ(fctf_train(ds_, aux_, config_.c_str(), out.c_str(), 0, count_steps, nullptr, &m), FCTF_OK)
      << fctf_last_error();
  EXPECT_EQ(steps_seen, 2);
  EXPECT_TRUE(fs::exists(out / "checkpoint.fctf"));
  EXPECT_TRUE(fs::exists(out / "train_log.csv"));
  int64_t step = 0;
  uint64_t sum = 0;
  char* cfg = nullptr;
  ASSERT_EQ(fctf_model_info(m, &step, &sum, &cfg), FCTF_OK);
  EXPECT_EQ(step, 2);
  fctf_string_free(cfg);

  const auto copy = root_ / "copy.fctf";
  ASSERT_EQ(fctf_model_save(m, copy.c_str()), FCTF_OK) << fctf_last_error();
  uint64_t f1 = 0, f2 = 0;
  ASSERT_EQ(fctf_file_checksum((out / "checkpoint.fctf").c_str(), &f1), FCTF_OK);
  ASSERT_EQ(fctf_file_checksum(copy.c_str(), &f2), FCTF_OK);
  EXPECT_EQ(f1, f2);
  fctf_model* loaded = nullptr;
  ASSERT_EQ(fctf_model_load(copy.c_str(), &loaded), FCTF_OK) << fctf_last_error();
  uint64_t sum2 = 0;
  ASSERT_EQ(fctf_model_info(loaded, &step, &sum2, nullptr), FCTF_OK);
  EXPECT_EQ(sum, sum2);

  // Generate from a test clip of the corpus.
  int ids[1];
  int count = 0;
  ASSERT_EQ(fctf_dataset_test_identities(ds_, ids, 1, &count), FCTF_OK);
  char clip[32];
  std::snprintf(clip, sizeof clip, "id%04d/clip00", ids[0]);
  const auto clip_dir = root_ / "corpus" / clip;
  const auto gen = root_ / "gen";
  int frames = 0;
  ASSERT_EQ(fctf_generate(loaded, (clip_dir / "frame_0000.png").c_str(), clip_dir.c_str(), (clip_dir / "audio.wav").c_str(),
                          gen.c_str(), &frames),
            FCTF_OK)
      << fctf_last_error();
  EXPECT_EQ(frames, 20);
  EXPECT_TRUE(fs::exists(gen / "frame_0019.png"));
  EXPECT_EQ(fctf_generate(loaded, (clip_dir / "missing.png").c_str(), clip_dir.c_str(), (clip_dir / "audio.wav").c_str(),
                          gen.c_str(), &frames),
            FCTF_IO);

  char* report = nullptr;
  ASSERT_EQ(fctf_evaluate(loaded, ds_, (root_ / "strips").c_str(), 1, &report), FCTF_OK) << fctf_last_error();
  const std::string r = take(report);
  for (const char* key : {"\"ssim\"", "\"ms_ssim\"", "\"psnr\"", "\"lmd\"", "\"lse_c\"", "\"checkpoint_fingerprint\""})
    EXPECT_NE(r.find(key), std::string::npos) << key;
  EXPECT_FALSE(fs::is_empty(root_ / "strips"));

  double ratio = -1;
  ASSERT_EQ(fctf_canonical_grid(loaded, ds_, nullptr, 0, 2, (root_ / "grid.png").c_str(), &ratio), FCTF_OK)
      << fctf_last_error();
  EXPECT_GE(ratio, 0.0);
  EXPECT_TRUE(fs::exists(root_ / "grid.png"));
  ASSERT_EQ(fctf_probes(loaded, ds_, &report), FCTF_OK) << fctf_last_error();
  EXPECT_NE(take(report).find("sc_lip_r2"), std::string::npos);

  // Resuming with a changed architecture is refused.
  char* lstm = nullptr;
  ASSERT_EQ(fctf_config_set(config_.c_str(), "temporal_fusion", "lstm", &lstm), FCTF_OK);
  fctf_model* again = nullptr;
  EXPECT_EQ(fctf_train(ds_, aux_, lstm, out.c_str(), 1, nullptr, nullptr, &again), FCTF_PRECONDITION);
  fctf_string_free(lstm);
  fctf_model_free(loaded);
  fctf_model_free(m);
}

TEST_F(CApi, UntrainedModelInit) {
  fctf_model* m = nullptr;
  ASSERT_EQ(fctf_model_init(ds_, aux_, config_.c_str(), &m), FCTF_OK) << fctf_last_error();
  int64_t step = -1;
  ASSERT_EQ(fctf_model_info(m, &step, nullptr, nullptr), FCTF_OK);
  EXPECT_EQ(step, 0);
  fctf_model_free(m);
}
