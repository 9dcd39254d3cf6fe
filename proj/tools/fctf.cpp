// fctf command-line tool. Talks to the library only through fctf.h.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fctf/fctf.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Failure carrying the exit code: 1 for user errors, 2 for internal ones.
struct Failure {
  int code;
  std::string message;
};

void check(fctf_status s) {
  if (s == FCTF_OK) return;
  const int code = (s == FCTF_INTERNAL || s == FCTF_NUMERIC) ? 2 : 1;
  throw Failure{code, fctf_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  fctf_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Dataset = Handle<fctf_dataset, fctf_dataset_free>;
using Aux = Handle<fctf_aux, fctf_aux_free>;
using Model = Handle<fctf_model, fctf_model_free>;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Failure{1, "cannot write " + path.string()};
  out << text;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  json config = json::object();  // parsed --config file

  void load() {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw Failure{1, "cannot read config file " + config_path};
    try {
      config = json::parse(in);
    } catch (const json::exception& e) {
      throw Failure{1, "config file " + config_path + ": " + e.what()};
    }
    if (!config.is_object()) throw Failure{1, "config file " + config_path + " must hold a JSON object"};
  }
  /// Section of the config file, or an empty object.
  [[nodiscard]] json section(const char* name) const {
    return config.contains(name) ? config.at(name) : json::object();
  }
  /// Training config text: the file's top-level keys minus the corpus/pretrain sections.
  [[nodiscard]] std::string train_config() const {
    json j = config;
    j.erase("corpus");
    j.erase("pretrain");
    return j.dump();
  }
};

std::string set_key(const std::string& cfg, const std::string& key, const std::string& value) {
  char* out = nullptr;
  check(fctf_config_set(cfg.c_str(), key.c_str(), value.c_str(), &out));
  return take(out);
}

std::string data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FCTFG_DATA_DIR"); env && *env) return env;
  throw Failure{1, "no corpus given: pass --data or set FCTFG_DATA_DIR"};
}

template <class T>
T from_section(const json& sec, const char* key, T fallback) {
  try {
    return sec.contains(key) ? sec.at(key).get<T>() : fallback;
  } catch (const json::exception& e) {
    throw Failure{1, std::string("config file: bad value for '") + key + "': " + e.what()};
  }
}

void print_progress(int64_t step, int64_t total, const double* p, void* user) {
  const int every = *static_cast<int*>(user);
  if (every <= 0 || (step % every != 0 && step != total)) return;
  std::printf("step %lld/%lld total=%.5f rec=%.5f lpips=%.5f sync=%.5f id=%.5f ortho=%.3g gan_g=%.4f gan_d=%.4f\n",
              static_cast<long long>(step), static_cast<long long>(total), p[7], p[3], p[4], p[1], p[2], p[0], p[5], p[6]);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face-centric talking-head toolkit: synthetic corpus, auxiliary nets, training, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for the subcommand (corpus, pretraining or training seed)");
  app.add_option("--config", g.config_path, "JSON config file; explicit flags override its values")->check(CLI::ExistingFile);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Render the synthetic talking-face corpus to disk");
  std::string synth_out;
  std::optional<int> identities, clips_per_id, frames;
  bool force = false;
  synth->add_option("--out", synth_out, "Corpus directory")->required();
  synth->add_option("--identities", identities, "Number of identities (default 200)")->check(CLI::PositiveNumber);
  synth->add_option("--clips-per-id", clips_per_id, "Clips per identity (default 4)")->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames, "Frames per clip (default 75)")->check(CLI::PositiveNumber);
  synth->add_flag("--force", force, "Overwrite an existing corpus built with a different spec");

  // pretrain-aux
  auto* pre = app.add_subcommand("pretrain-aux", "Train the sync and identity networks and seed the perceptual net");
  std::string pre_data, pre_out;
  std::optional<int> sync_steps, sync_batch, id_steps, id_batch, eval_pairs;
  std::optional<double> sync_lr, id_lr;
  pre->add_option("--data", pre_data, "Corpus directory (default $FCTFG_DATA_DIR)");
  pre->add_option("--out", pre_out, "Output directory for syncnet.fctf, idnet.fctf, perceptual.fctf")->required();
  pre->add_option("--sync-steps", sync_steps, "Sync net steps (default 5000)")->check(CLI::PositiveNumber);
  pre->add_option("--sync-batch", sync_batch, "Sync net batch (default 32)")->check(CLI::PositiveNumber);
  pre->add_option("--id-steps", id_steps, "Identity net steps (default 3000)")->check(CLI::PositiveNumber);
  pre->add_option("--id-batch", id_batch, "Identity net batch (default 64)")->check(CLI::PositiveNumber);
  pre->add_option("--sync-lr", sync_lr, "Adam learning rate of the sync net (default 3e-4)")->check(CLI::PositiveNumber);
  pre->add_option("--id-lr", id_lr, "Adam learning rate of the identity net (default 1e-3)")->check(CLI::PositiveNumber);
  pre->add_option("--eval-pairs", eval_pairs, "Held-out pairs for the report (default 2000)")->check(CLI::PositiveNumber);

  // train
  auto* tr = app.add_subcommand("train", "Train the generator pipeline");
  std::string tr_data, tr_aux, tr_out;
  std::optional<int> steps, batch_size, checkpoint_every;
  std::optional<std::string> temporal, disc, ortho;
  std::vector<std::string> sets;
  bool resume = false;
  int log_every = 50;
  tr->add_option("--data", tr_data, "Corpus directory (default $FCTFG_DATA_DIR)");
  tr->add_option("--aux", tr_aux, "Directory written by pretrain-aux")->required();
  tr->add_option("--out", tr_out, "Run directory (checkpoint.fctf, train_log.csv, config.json)")->required();
  tr->add_option("--steps", steps, "Training steps")->check(CLI::PositiveNumber);
  tr->add_option("--batch-size", batch_size, "Windows per batch")->check(CLI::PositiveNumber);
  tr->add_option("--checkpoint-every", checkpoint_every, "Steps between checkpoints")->check(CLI::PositiveNumber);
  tr->add_option("--temporal-fusion", temporal, "conv1d | lstm | off");
  tr->add_option("--discriminator", disc, "image | video");
  tr->add_option("--ortho-mode", ortho, "hadamard | cosine | off");
  tr->add_option("--set", sets, "Override any config key, e.g. --set weights.sync=0.2 (repeatable)");
  tr->add_flag("--resume", resume, "Continue from the run directory's checkpoint");
  tr->add_option("--log-every", log_every, "Print losses every N steps (0 = silent)")->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "Animate a source image with a driving clip and audio");
  std::string gen_ckpt, gen_source, gen_driving, gen_audio, gen_out;
  gen->add_option("--checkpoint", gen_ckpt, "Training checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--source", gen_source, "64x64 source PNG")->required()->check(CLI::ExistingFile);
  gen->add_option("--driving", gen_driving, "Directory of driving frame_NNNN.png files")->required()->check(CLI::ExistingDirectory);
  gen->add_option("--audio", gen_audio, "Driving audio, 16-bit WAV")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory for generated frames")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  std::string ev_ckpt, ev_data, ev_report, ev_out, ev_probes;
  bool emit_strips = false;
  int max_clips = -1;
  ev->add_option("--checkpoint", ev_ckpt, "Training checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Corpus directory (default $FCTFG_DATA_DIR)");
  ev->add_option("--out", ev_out, "Output directory (report.json, strips/)");
  ev->add_option("--report", ev_report, "Report path (default <out>/report.json)");
  ev->add_flag("--emit-strips", emit_strips, "Write source | driving | generated PNG strips per clip");
  ev->add_option("--max-clips", max_clips, "Evaluate at most N test clips (-1 = all)")->capture_default_str();
  ev->add_option("--probes", ev_probes, "Also write linear-probe results to this JSON file");

  // canonical-grid
  auto* cg = app.add_subcommand("canonical-grid", "Render canonical images of several identities");
  std::string cg_ckpt, cg_data, cg_out;
  std::vector<int> cg_ids;
  int frames_per_id = 8;
  cg->add_option("--checkpoint", cg_ckpt, "Training checkpoint")->required()->check(CLI::ExistingFile);
  cg->add_option("--data", cg_data, "Corpus directory (default $FCTFG_DATA_DIR)");
  cg->add_option("--out", cg_out, "Output directory (canonical_grid.png)")->required();
  cg->add_option("--identities", cg_ids, "Identity indices (default: the test split)");
  cg->add_option("--frames-per-id", frames_per_id, "Columns per identity")->capture_default_str()->check(CLI::PositiveNumber);

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the temporal-fusion x discriminator x orthogonality matrix");
  std::string ab_data, ab_aux, ab_out;
  int ab_steps = 200, ab_clips = 8;
  ab->add_option("--data", ab_data, "Corpus directory (default $FCTFG_DATA_DIR)");
  ab->add_option("--aux", ab_aux, "Directory written by pretrain-aux")->required();
  ab->add_option("--out", ab_out, "Output directory (one run per combination, ablation.csv)")->required();
  ab->add_option("--steps", ab_steps, "Steps per combination")->capture_default_str()->check(CLI::PositiveNumber);
  ab->add_option("--eval-clips", ab_clips, "Test clips evaluated per combination (-1 = all)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    g.load();
    if (synth->parsed()) {
      fctf_corpus_spec spec;
      fctf_corpus_spec_default(&spec);
      const auto sec = g.section("corpus");
      spec.identities = identities.value_or(from_section(sec, "identities", spec.identities));
      spec.clips_per_identity = clips_per_id.value_or(from_section(sec, "clips_per_identity", spec.clips_per_identity));
      spec.frames_per_clip = frames.value_or(from_section(sec, "frames_per_clip", spec.frames_per_clip));
      spec.seed = g.seed.value_or(from_section(sec, "seed", spec.seed));
      std::uint64_t hash = 0;
      check(fctf_synth_data(&spec, synth_out.c_str(), force ? 1 : 0, &hash));
      std::printf("corpus %s: %d identities x %d clips x %d frames, manifest hash %016llx\n", synth_out.c_str(),
                  spec.identities, spec.clips_per_identity, spec.frames_per_clip, static_cast<unsigned long long>(hash));
    } else if (pre->parsed()) {
      fctf_pretrain_options o;
      fctf_pretrain_options_default(&o);
      const auto sec = g.section("pretrain");
      o.sync_steps = sync_steps.value_or(from_section(sec, "sync_steps", o.sync_steps));
      o.sync_batch = sync_batch.value_or(from_section(sec, "sync_batch", o.sync_batch));
      o.id_steps = id_steps.value_or(from_section(sec, "id_steps", o.id_steps));
      o.id_batch = id_batch.value_or(from_section(sec, "id_batch", o.id_batch));
      o.sync_lr = sync_lr.value_or(from_section(sec, "sync_lr", o.sync_lr));
      o.id_lr = id_lr.value_or(from_section(sec, "id_lr", o.id_lr));
      o.eval_pairs = eval_pairs.value_or(from_section(sec, "eval_pairs", o.eval_pairs));
      o.seed = g.seed.value_or(from_section(sec, "seed", o.seed));
      Dataset ds;
      check(fctf_dataset_open(data_dir(pre_data).c_str(), &ds.p));
      char* report = nullptr;
      check(fctf_pretrain_aux(ds.p, &o, pre_out.c_str(), &report));
      std::cout << take(report);
    } else if (tr->parsed() || ab->parsed()) {
      char* norm = nullptr;
      check(fctf_config_normalize(g.train_config().c_str(), &norm));
      std::string cfg = take(norm);
      if (g.seed) cfg = set_key(cfg, "seed", std::to_string(*g.seed));
      Dataset ds;
      Aux aux;
      if (tr->parsed()) {
        if (steps) cfg = set_key(cfg, "steps", std::to_string(*steps));
        if (batch_size) cfg = set_key(cfg, "batch_size", std::to_string(*batch_size));
        if (checkpoint_every) cfg = set_key(cfg, "checkpoint_every", std::to_string(*checkpoint_every));
        if (temporal) cfg = set_key(cfg, "temporal_fusion", *temporal);
        if (disc) cfg = set_key(cfg, "discriminator", *disc);
        if (ortho) cfg = set_key(cfg, "ortho_mode", *ortho);
        for (const auto& s : sets) {
          const auto eq = s.find('=');
          if (eq == std::string::npos || eq == 0) throw Failure{1, "--set expects key=value, got '" + s + "'"};
          cfg = set_key(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        check(fctf_aux_load(tr_aux.c_str(), &aux.p));
        check(fctf_dataset_open(data_dir(tr_data).c_str(), &ds.p));
        Model m;
        check(fctf_train(ds.p, aux.p, cfg.c_str(), tr_out.c_str(), resume ? 1 : 0, print_progress, &log_every, &m.p));
        std::printf("checkpoint %s\n", (fs::path(tr_out) / "checkpoint.fctf").c_str());
      } else {
        check(fctf_aux_load(ab_aux.c_str(), &aux.p));
        check(fctf_dataset_open(data_dir(ab_data).c_str(), &ds.p));
        const auto csv = fs::path(ab_out) / "ablation.csv";
        check(fctf_ablate(ds.p, aux.p, cfg.c_str(), ab_steps, ab_clips, ab_out.c_str(), csv.c_str()));
        std::ifstream in(csv);
        std::cout << in.rdbuf();
      }
    } else if (gen->parsed()) {
      Model m;
      check(fctf_model_load(gen_ckpt.c_str(), &m.p));
      int n = 0;
      check(fctf_generate(m.p, gen_source.c_str(), gen_driving.c_str(), gen_audio.c_str(), gen_out.c_str(), &n));
      std::printf("wrote %d frames to %s\n", n, gen_out.c_str());
    } else if (ev->parsed()) {
      if (ev_report.empty() && ev_out.empty()) throw Failure{1, "evaluate needs --out or --report"};
      const fs::path report_path = ev_report.empty() ? fs::path(ev_out) / "report.json" : fs::path(ev_report);
      const fs::path strips = (ev_out.empty() ? report_path.parent_path() : fs::path(ev_out)) / "strips";
      Model m;
      check(fctf_model_load(ev_ckpt.c_str(), &m.p));
      Dataset ds;
      check(fctf_dataset_open(data_dir(ev_data).c_str(), &ds.p));
      char* report = nullptr;
      check(fctf_evaluate(m.p, ds.p, emit_strips ? strips.c_str() : nullptr, max_clips, &report));
      const auto text = take(report);
      write_text(report_path, text);
      const auto j = json::parse(text);
      std::printf("clips %d ssim %.4f ms_ssim %.4f psnr %.3f lmd %.3f lse_c %.4f -> %s\n", j["clips"].get<int>(),
                  j["ssim"].get<double>(), j["ms_ssim"].get<double>(), j["psnr"].get<double>(), j["lmd"].get<double>(),
                  j["lse_c"].get<double>(), report_path.c_str());
      if (!ev_probes.empty()) {
        char* probes = nullptr;
        check(fctf_probes(m.p, ds.p, &probes));
        write_text(ev_probes, take(probes));
      }
    } else if (cg->parsed()) {
      Model m;
      check(fctf_model_load(cg_ckpt.c_str(), &m.p));
      Dataset ds;
      check(fctf_dataset_open(data_dir(cg_data).c_str(), &ds.p));
      fs::create_directories(cg_out);
      const auto png = fs::path(cg_out) / "canonical_grid.png";
      double ratio = 0;
      check(fctf_canonical_grid(m.p, ds.p, cg_ids.empty() ? nullptr : cg_ids.data(), static_cast<int>(cg_ids.size()),
                                frames_per_id, png.c_str(), &ratio));
      std::printf("grid %s variance ratio %.4f\n", png.c_str(), ratio);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
