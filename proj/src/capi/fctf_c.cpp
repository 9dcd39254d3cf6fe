#include "fctf/fctf.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <regex>
#include <string>

#include "fctf/ablate.hpp"
#include "fctf/audiofront.hpp"
#include "fctf/corpus.hpp"
#include "fctf/error.hpp"
#include "fctf/mediaio.hpp"
#include "fctf/metrics.hpp"
#include "fctf/prng.hpp"
#include "fctf/trainer.hpp"

struct fctf_dataset {
  fctf::data::Dataset ds;
};
struct fctf_aux {
  fctf::aux::AuxNets aux;
};
struct fctf_model {
  std::unique_ptr<fctf::train::TrainState> st;
};

namespace {
namespace fs = std::filesystem;
using namespace fctf;

thread_local std::string g_error;

template <class F>
fctf_status guarded(F&& f) {
  g_error.clear();
  try {
    f();
    return FCTF_OK;
  } catch (const InvalidArgument& e) {
    g_error = e.what();
    return FCTF_INVALID_ARGUMENT;
  } catch (const IoError& e) {
    g_error = e.what();
    return FCTF_IO;
  } catch (const PreconditionError& e) {
    g_error = e.what();
    return FCTF_PRECONDITION;
  } catch (const NumericError& e) {
    g_error = e.what();
    return FCTF_NUMERIC;
  } catch (const std::exception& e) {
    g_error = e.what();
    return FCTF_INTERNAL;
  } catch (...) {
    g_error = "unknown internal error";
    return FCTF_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw InvalidArgument(std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

train::TrainConfig parse_config(const char* json) {
  return json && *json ? train::TrainConfig::from_json(json) : train::TrainConfig{};
}

std::vector<fs::path> driving_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("driving clip directory not found: " + dir.string());
  static const std::regex name(R"(frame_\d+\.png)");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && std::regex_match(e.path().filename().string(), name)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

extern "C" {

const char* fctf_last_error(void) { return g_error.c_str(); }
const char* fctf_version(void) { return "0.1.0"; }
void fctf_string_free(char* s) { std::free(s); }

void fctf_corpus_spec_default(fctf_corpus_spec* spec) {
  if (!spec) return;
  const synth::CorpusSpec d;
  *spec = {d.identities, d.clips_per_identity, d.frames_per_clip, d.corpus_seed};
}

fctf_status fctf_synth_data(const fctf_corpus_spec* spec, const char* out_dir, int force, uint64_t* manifest_hash) {
  return guarded([&] {
    need(spec, "spec");
    need(out_dir, "out_dir");
    synth::CorpusSpec s{spec->identities, spec->clips_per_identity, spec->frames_per_clip, spec->seed};
    require(s.identities >= 1 && s.clips_per_identity >= 1 && s.frames_per_clip >= 1,
            "synth-data: identities, clips per identity and frames must be >= 1");
    const auto m = synth::build_corpus(s, out_dir, force != 0);
    if (manifest_hash) *manifest_hash = m.hash();
  });
}

fctf_status fctf_dataset_open(const char* corpus_dir, fctf_dataset** out) {
  return guarded([&] {
    need(corpus_dir, "corpus_dir");
    need(out, "out");
    *out = new fctf_dataset{data::Dataset::load(corpus_dir)};
  });
}

void fctf_dataset_free(fctf_dataset* ds) { delete ds; }

fctf_status fctf_dataset_info(const fctf_dataset* ds, int* clips, int* test_identities, uint64_t* fingerprint) {
  return guarded([&] {
    need(ds, "dataset");
    if (clips) *clips = static_cast<int>(ds->ds.clips().size());
    if (test_identities) *test_identities = static_cast<int>(ds->ds.identities_in(synth::Split::Test).size());
    if (fingerprint) *fingerprint = ds->ds.fingerprint();
  });
}

fctf_status fctf_dataset_test_identities(const fctf_dataset* ds, int* ids, int cap, int* count) {
  return guarded([&] {
    need(ds, "dataset");
    const auto v = ds->ds.identities_in(synth::Split::Test);
    for (int i = 0; ids && i < cap && i < static_cast<int>(v.size()); ++i) ids[i] = v[static_cast<std::size_t>(i)];
    if (count) *count = static_cast<int>(v.size());
  });
}

void fctf_pretrain_options_default(fctf_pretrain_options* opt) {
  if (!opt) return;
  const aux::PretrainOptions d;
  *opt = {d.sync_steps, d.sync_batch, d.id_steps, d.id_batch, d.sync_lr, d.id_lr, d.seed, d.eval_pairs};
}

fctf_status fctf_pretrain_aux(const fctf_dataset* ds, const fctf_pretrain_options* opt, const char* out_dir,
                              char** report_json) {
  return guarded([&] {
    need(ds, "dataset");
    need(out_dir, "out_dir");
    aux::PretrainOptions o;
    if (opt) o = {opt->sync_steps, opt->sync_batch, opt->id_steps, opt->id_batch, opt->sync_lr, opt->id_lr, opt->seed, opt->eval_pairs};
    require(o.sync_steps >= 1 && o.id_steps >= 1 && o.sync_batch >= 2 && o.id_batch >= 2 && o.sync_lr > 0 && o.id_lr > 0 && o.eval_pairs >= 2,
            "pretrain-aux: steps must be >= 1, batches and eval pairs >= 2, learning rates > 0");
    put(report_json, aux::pretrain_aux(ds->ds, o, out_dir).to_json());
  });
}

fctf_status fctf_aux_load(const char* dir, fctf_aux** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new fctf_aux{aux::load_aux(dir)};
  });
}

void fctf_aux_free(fctf_aux* aux) { delete aux; }

fctf_status fctf_config_default(char** json) {
  return guarded([&] { put(json, train::TrainConfig{}.to_json()); });
}

fctf_status fctf_config_normalize(const char* json_in, char** json_out) {
  return guarded([&] { put(json_out, parse_config(json_in).to_json()); });
}

fctf_status fctf_config_set(const char* json_in, const char* key, const char* value, char** json_out) {
  return guarded([&] {
    need(key, "key");
    need(value, "value");
    auto c = parse_config(json_in);
    c.set(key, value);
    put(json_out, c.to_json());
  });
}

fctf_status fctf_train(const fctf_dataset* ds, const fctf_aux* aux, const char* config_json, const char* out_dir,
                       int resume, fctf_progress_fn progress, void* user, fctf_model** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(aux, "aux");
    need(out_dir, "out_dir");
    const auto cfg = parse_config(config_json);
    train::TrainOptions o;
    o.out_dir = out_dir;
    o.resume = resume != 0;
    if (progress)
      o.on_step = [&](std::int64_t s, const loss::LossBreakdown& b) {
        const double parts[8] = {b.ortho, b.sync, b.id, b.rec, b.lpips, b.gan_g, b.gan_d, b.total};
        progress(s, cfg.steps, parts, user);
      };
    auto st = train::train(cfg, ds->ds, aux->aux, o);
    if (out) *out = new fctf_model{std::move(st)};
  });
}

fctf_status fctf_model_init(const fctf_dataset* ds, const fctf_aux* aux, const char* config_json, fctf_model** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(aux, "aux");
    need(out, "out");
    *out = new fctf_model{std::make_unique<train::TrainState>(parse_config(config_json), aux->aux, ds->ds.fingerprint())};
  });
}

fctf_status fctf_model_load(const char* checkpoint, fctf_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = new fctf_model{train::TrainState::load(checkpoint)};
  });
}

fctf_status fctf_model_save(const fctf_model* m, const char* checkpoint) {
  return guarded([&] {
    need(m, "model");
    need(checkpoint, "checkpoint");
    m->st->save(checkpoint);
  });
}

void fctf_model_free(fctf_model* m) { delete m; }

fctf_status fctf_model_info(const fctf_model* m, int64_t* step, uint64_t* generator_checksum, char** config_json) {
  return guarded([&] {
    need(m, "model");
    if (step) *step = m->st->step;
    if (generator_checksum) *generator_checksum = m->st->generator_checksum();
    put(config_json, m->st->config.to_json());
  });
}

fctf_status fctf_file_checksum(const char* path, uint64_t* checksum) {
  return guarded([&] {
    need(path, "path");
    need(checksum, "checksum");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open ") + path);
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Fnv1a64 h;
    h.update(bytes.data(), bytes.size());
    *checksum = h.digest();
  });
}

fctf_status fctf_generate(fctf_model* m, const char* source_png, const char* driving_dir, const char* audio_wav,
                          const char* out_dir, int* frames) {
  return guarded([&] {
    need(m, "model");
    need(source_png, "source");
    need(driving_dir, "driving");
    need(audio_wav, "audio");
    need(out_dir, "out_dir");
    const auto src = io::read_png(source_png);
    if (src.height != synth::kImageSize || src.width != synth::kImageSize)
      throw InvalidArgument("source image must be 64x64, got " + std::to_string(src.width) + "x" + std::to_string(src.height));
    const auto paths = driving_frames(driving_dir);
    std::vector<synth::FaceFrame> drv;
    for (const auto& p : paths) {
      drv.push_back(io::read_png(p));
      if (!drv.back().same_shape(src)) throw InvalidArgument("driving frame " + p.string() + " is not 64x64");
    }
    const auto wav = io::read_wav(audio_wav);
    const auto wave = wav.sample_rate == audio::kSampleRate ? wav.samples : audio::resample(wav.samples, wav.sample_rate);
    const int n = static_cast<int>(drv.size());
    torch::Tensor mels = n == 0 ? torch::empty({0, audio::kMels, audio::kWindowSteps})
                                : train::mel_windows_for(wave, 0, n, n);
    const auto driving = n == 0 ? torch::empty({0, 3, synth::kImageSize, synth::kImageSize}) : nets::frames_to_tensor(drv);
    const auto gen = train::generate_clip(*m->st, nets::frame_to_tensor(src), driving, mels);
    fs::create_directories(out_dir);
    for (int i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.png", i);
      io::write_png(fs::path(out_dir) / name, nets::tensor_to_frame(gen[i]));
    }
    if (frames) *frames = n;
  });
}

fctf_status fctf_evaluate(fctf_model* m, const fctf_dataset* ds, const char* strips_dir, int max_clips,
                          char** report_json) {
  return guarded([&] {
    need(m, "model");
    need(ds, "dataset");
    metrics::EvalOptions o;
    if (strips_dir) o.strips_dir = fs::path(strips_dir);
    o.max_clips = max_clips;
    put(report_json, metrics::evaluate(*m->st, ds->ds, o).to_json());
  });
}

fctf_status fctf_probes(fctf_model* m, const fctf_dataset* ds, char** report_json) {
  return guarded([&] {
    need(m, "model");
    need(ds, "dataset");
    put(report_json, metrics::latent_probes(*m->st, ds->ds).to_json());
  });
}

fctf_status fctf_canonical_grid(fctf_model* m, const fctf_dataset* ds, const int* ids, int n, int frames_per_id,
                                const char* png_path, double* variance_ratio) {
  return guarded([&] {
    need(m, "model");
    need(ds, "dataset");
    need(png_path, "png_path");
    const auto list = ids && n > 0 ? std::vector<int>(ids, ids + n) : ds->ds.identities_in(synth::Split::Test);
    const auto grid = train::canonical_grid(*m->st, ds->ds, list, frames_per_id);
    train::write_grid_png(grid, png_path);
    if (variance_ratio) *variance_ratio = grid.ratio();
  });
}

fctf_status fctf_ablate(const fctf_dataset* ds, const fctf_aux* aux, const char* config_json, int steps, int eval_clips,
                        const char* out_dir, const char* csv_path) {
  return guarded([&] {
    need(ds, "dataset");
    need(aux, "aux");
    need(out_dir, "out_dir");
    need(csv_path, "csv_path");
    ablate::AblationOptions o;
    o.steps = steps;
    o.eval_clips = eval_clips;
    const auto rows = ablate::run_matrix(parse_config(config_json), ds->ds, aux->aux, o, out_dir);
    std::ofstream csv(csv_path);
    if (!csv) throw IoError(std::string("cannot write ") + csv_path);
    csv << ablate::to_csv(rows);
  });
}

}  // extern "C"
