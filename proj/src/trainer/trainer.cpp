#include "fctf/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fctf/audiofront.hpp"
#include "fctf/error.hpp"
#include "fctf/mediaio.hpp"
#include "fctf/prng.hpp"

namespace fctf::train {
using nlohmann::json;
namespace fs = std::filesystem;
namespace {

constexpr std::uint64_t kTagBatch = 0x42415443ull;  // "BATC"

json config_json(const TrainConfig& c) {
  json j;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["window"] = c.window;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["weights"] = {{"ortho", c.weights.ortho}, {"sync", c.weights.sync}, {"id", c.weights.id},
                  {"rec", c.weights.rec},     {"lpips", c.weights.lpips}, {"gan", c.weights.gan}};
  j["routing"] = {{"manipulated", c.routing.manipulated}, {"audio_layers", c.routing.audio_layers}};
  j["temporal_fusion"] = nets::to_string(c.temporal_fusion);
  j["discriminator"] = nets::to_string(c.discriminator);
  j["ortho_mode"] = loss::to_string(c.ortho_mode);
  j["finetune_aux"] = c.finetune_aux;
  j["aux_lr"] = c.aux_lr;
  j["seed"] = c.seed;
  j["min_source_gap"] = c.min_source_gap;
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

void check_keys(const json& j, const json& reference, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!reference.contains(it.key())) throw InvalidArgument("config: unknown key '" + where + it.key() + "'");
    if (reference.at(it.key()).is_object()) check_keys(it.value(), reference.at(it.key()), where + it.key() + ".");
  }
}

TrainConfig config_from(const json& j) {
  check_keys(j, config_json(TrainConfig{}), "");
  TrainConfig c;
  auto get = [&j](const char* k, auto& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
  };
  get("steps", c.steps);
  get("batch_size", c.batch_size);
  get("window", c.window);
  get("lr", c.lr);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    auto getw = [&w](const char* k, double& dst) {
      if (w.contains(k)) dst = w.at(k).get<double>();
    };
    getw("ortho", c.weights.ortho);
    getw("sync", c.weights.sync);
    getw("id", c.weights.id);
    getw("rec", c.weights.rec);
    getw("lpips", c.weights.lpips);
    getw("gan", c.weights.gan);
  }
  if (j.contains("routing")) {
    const auto& r = j.at("routing");
    if (r.contains("manipulated")) c.routing.manipulated = r.at("manipulated").get<std::vector<int>>();
    if (r.contains("audio_layers")) c.routing.audio_layers = r.at("audio_layers").get<std::vector<int>>();
  }
  if (j.contains("temporal_fusion")) c.temporal_fusion = nets::temporal_mode_from_string(j.at("temporal_fusion").get<std::string>());
  if (j.contains("discriminator")) c.discriminator = nets::discriminator_mode_from_string(j.at("discriminator").get<std::string>());
  if (j.contains("ortho_mode")) c.ortho_mode = loss::ortho_mode_from_string(j.at("ortho_mode").get<std::string>());
  get("finetune_aux", c.finetune_aux);
  get("aux_lr", c.aux_lr);
  get("seed", c.seed);
  get("min_source_gap", c.min_source_gap);
  get("checkpoint_every", c.checkpoint_every);
  return c;
}

/// Deep copy through the archive format, so a training run never mutates the caller's networks.
aux::AuxNets clone_aux(const aux::AuxNets& src) {
  ckpt::TensorArchive ar;
  ckpt::put_module(ar, "sync", *src.sync);
  ckpt::put_module(ar, "id", *src.id);
  ckpt::put_module(ar, "perceptual", *src.perceptual);
  aux::AuxNets out(src.id->classes(), 0);
  ckpt::get_module(ar, "sync", *out.sync);
  ckpt::get_module(ar, "id", *out.id);
  ckpt::get_module(ar, "perceptual", *out.perceptual);
  out.sync_trained = src.sync_trained;
  out.id_trained = src.id_trained;
  out.sync->eval();
  out.id->eval();
  return out;
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, double lr, const TrainConfig& c) {
  return std::make_unique<torch::optim::Adam>(std::move(params),
                                              torch::optim::AdamOptions(lr).betas({c.beta1, c.beta2}));
}

std::string log_row(std::int64_t step, const loss::LossBreakdown& b) {
  std::ostringstream o;
  o.precision(9);
  o << step << ',' << b.ortho << ',' << b.sync << ',' << b.id << ',' << b.rec << ',' << b.lpips << ',' << b.gan_g << ','
    << b.gan_d << ',' << b.total << '\n';
  return o.str();
}

std::vector<int> iota_from(int lo, int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + i;
  return v;
}

}  // namespace

// --- config ---------------------------------------------------------------

void TrainConfig::validate() const {
  require(steps >= 1, "config: steps must be >= 1");
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(window >= aux::kSyncFrames, "config: window must be >= 5 frames (the sync window)");
  require(lr > 0 && std::isfinite(lr), "config: lr must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "config: Adam betas must lie in [0,1)");
  require(aux_lr > 0, "config: aux_lr must be positive");
  require(min_source_gap >= 0, "config: min_source_gap must be >= 0");
  require(checkpoint_every >= 1, "config: checkpoint_every must be >= 1");
  weights.validate();
  routing.validate();
}

std::string TrainConfig::to_json() const { return config_json(*this).dump(2) + "\n"; }

TrainConfig TrainConfig::from_json(const std::string& text) {
  try {
    auto c = config_from(json::parse(text));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  json j = config_json(*this);
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  require(!parts.empty(), "config: empty key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) throw InvalidArgument("config: unknown key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->contains(parts.back())) throw InvalidArgument("config: unknown key '" + key + "'");
  (*node)[parts.back()] = v;
  try {
    auto c = config_from(j);
    c.validate();
    *this = c;
  } catch (const json::exception& e) {
    throw InvalidArgument("config: bad value for '" + key + "': " + e.what());
  }
}

bool TrainConfig::same_architecture(const TrainConfig& o) const {
  return window == o.window && routing == o.routing && temporal_fusion == o.temporal_fusion &&
         discriminator == o.discriminator && finetune_aux == o.finetune_aux;
}

// --- state ----------------------------------------------------------------

TrainState::TrainState(const TrainConfig& cfg, aux::AuxNets aux_nets, std::uint64_t fingerprint)
    : config(cfg), aux(clone_aux(aux_nets)), corpus_fingerprint(fingerprint) {
  config.validate();
  torch::manual_seed(config.seed);
  model = nets::FaceModel(config.routing, config.temporal_fusion);
  disc = nets::Discriminator(config.discriminator, config.window);
  g_opt = make_adam(model->parameters(), config.lr, config);
  d_opt = make_adam(disc->parameters(), config.lr, config);
  aux.set_trainable(config.finetune_aux, config.finetune_aux);
  if (config.finetune_aux) {
    auto params = aux.sync->parameters();
    for (auto& p : aux.id->parameters()) params.push_back(p);
    aux_opt = make_adam(params, config.aux_lr, config);
  }
}

ckpt::TensorArchive TrainState::to_archive() const {
  ckpt::TensorArchive ar;
  ar.put_string("meta/format", "fctf-train");
  ar.put_string("meta/config_json", config.to_json());
  ar.put_int("meta/corpus_fingerprint", static_cast<std::int64_t>(corpus_fingerprint));
  ar.put_int("meta/step", step);
  ar.put_int("meta/id_classes", aux.id->classes());
  ar.put_int("meta/aux_sync_trained", aux.sync_trained ? 1 : 0);
  ar.put_int("meta/aux_id_trained", aux.id_trained ? 1 : 0);
  ckpt::put_module(ar, "model", *model);
  ckpt::put_module(ar, "disc", *disc);
  ckpt::put_module(ar, "aux/sync", *aux.sync);
  ckpt::put_module(ar, "aux/id", *aux.id);
  ckpt::put_module(ar, "aux/perceptual", *aux.perceptual);
  ckpt::put_adam(ar, "opt/g", *model, *g_opt);
  ckpt::put_adam(ar, "opt/d", *disc, *d_opt);
  if (aux_opt) {
    ckpt::put_adam(ar, "opt/aux_sync", *aux.sync, *aux_opt);
    ckpt::put_adam(ar, "opt/aux_id", *aux.id, *aux_opt);
  }
  return ar;
}

void TrainState::save(const fs::path& path) const { to_archive().save(path); }

std::unique_ptr<TrainState> TrainState::from_archive(const ckpt::TensorArchive& ar, const TrainConfig* expected) {
  if (!ar.has("meta/format") || ar.get_string("meta/format") != "fctf-train")
    throw PreconditionError("not a training checkpoint");
  const auto cfg = TrainConfig::from_json(ar.get_string("meta/config_json"));
  if (expected && !expected->same_architecture(cfg))
    throw PreconditionError("checkpoint was trained with a different architecture (routing, window, temporal_fusion, "
                            "discriminator or finetune_aux differ)");
  aux::AuxNets a(static_cast<int>(ar.get_int("meta/id_classes")), 0);
  ckpt::get_module(ar, "aux/sync", *a.sync);
  ckpt::get_module(ar, "aux/id", *a.id);
  ckpt::get_module(ar, "aux/perceptual", *a.perceptual);
  a.sync_trained = ar.get_int("meta/aux_sync_trained") != 0;
  a.id_trained = ar.get_int("meta/aux_id_trained") != 0;
  auto st = std::make_unique<TrainState>(cfg, a, static_cast<std::uint64_t>(ar.get_int("meta/corpus_fingerprint")));
  ckpt::get_module(ar, "model", *st->model);
  ckpt::get_module(ar, "disc", *st->disc);
  ckpt::get_adam(ar, "opt/g", *st->model, *st->g_opt);
  ckpt::get_adam(ar, "opt/d", *st->disc, *st->d_opt);
  if (st->aux_opt) {
    ckpt::get_adam(ar, "opt/aux_sync", *st->aux.sync, *st->aux_opt);
    // get_adam clears the state map, so the id half is merged after the sync half.
    auto& state = st->aux_opt->state();
    std::vector<std::pair<void*, std::unique_ptr<torch::optim::OptimizerParamState>>> keep;
    for (auto& [k, v] : state) keep.emplace_back(k, std::move(v));
    ckpt::get_adam(ar, "opt/aux_id", *st->aux.id, *st->aux_opt);
    for (auto& [k, v] : keep) state[k] = std::move(v);
  }
  st->step = ar.get_int("meta/step");
  return st;
}

std::unique_ptr<TrainState> TrainState::load(const fs::path& path, const TrainConfig* expected) {
  if (!fs::exists(path)) throw PreconditionError("no checkpoint at " + path.string());
  return from_archive(ckpt::TensorArchive::load(path), expected);
}

std::uint64_t TrainState::generator_checksum() const { return nets::parameter_checksum(*model); }
std::uint64_t TrainState::discriminator_checksum() const { return nets::parameter_checksum(*disc); }
std::uint64_t TrainState::aux_checksum() const {
  Fnv1a64 h;
  for (const auto v : {nets::parameter_checksum(*aux.sync), nets::parameter_checksum(*aux.id),
                       nets::parameter_checksum(*aux.perceptual)})
    h.update(&v, sizeof v);
  return h.digest();
}

// --- batches --------------------------------------------------------------

Batch sample_batch(const data::Dataset& ds, const std::vector<std::size_t>& clips, std::uint64_t seed, std::int64_t step,
                   int batch, int window, int min_gap) {
  require(!clips.empty(), "sample_batch: no training clips");
  RandomStream r = RandomStream(seed).child(kTagBatch).child(static_cast<std::uint64_t>(step));
  Batch b;
  std::vector<torch::Tensor> src, drv, mel;
  std::vector<float> lips;
  std::vector<std::int64_t> ids;
  int attempts = 0;
  while (static_cast<int>(b.items.size()) < batch) {
    require(++attempts <= 1000 * batch, "sample_batch: no clip is long enough for the window and source gap");
    const auto ci = clips[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(clips.size()) - 1))];
    const auto& clip = ds.clip(ci);
    const int len = clip.length();
    if (len < window) continue;  // clip too short: skipped
    const int start = static_cast<int>(r.uniform_int(0, len - window));
    const int centre = start + window / 2;
    std::vector<int> candidates;
    for (int t = 0; t < len; ++t)
      if (std::abs(t - centre) >= min_gap) candidates.push_back(t);
    if (candidates.empty()) continue;
    const int source = candidates[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
    b.items.push_back({ci, start, source});
    const auto idx = iota_from(start, window);
    src.push_back(ds.frames(ci, {source}).squeeze(0));
    drv.push_back(ds.frames(ci, idx));
    mel.push_back(ds.mel_windows(ci, idx));
    for (const int t : idx) lips.push_back(static_cast<float>(clip.motions[static_cast<std::size_t>(t)].lip_open));
    ids.push_back(clip.identity);
  }
  b.source = torch::stack(src);
  b.driving = torch::stack(drv);
  b.mels = torch::stack(mel);
  b.lip_open = torch::tensor(lips).view({batch, window});
  b.identity = torch::tensor(ids, torch::kLong);
  return b;
}

// --- step -----------------------------------------------------------------

double discriminator_update(TrainState& st, const Batch& batch, const nets::WindowOutputs& out) {
  st.disc->train();
  const auto d_loss = loss::gan_d_loss(st.disc->score_windows(batch.driving), st.disc->score_windows(out.frames.detach()));
  st.d_opt->zero_grad();
  d_loss.backward();
  st.d_opt->step();
  return d_loss.item<double>();
}

loss::LossBreakdown generator_update(TrainState& st, const Batch& batch, const nets::WindowOutputs& out) {
  const auto& cfg = st.config;
  const auto b = batch.driving.size(0), t = batch.driving.size(1);
  const auto fake = out.frames;
  const auto flat_g = fake.reshape({b * t, 3, fake.size(3), fake.size(4)});
  const auto flat_d = batch.driving.reshape({b * t, 3, fake.size(3), fake.size(4)});
  const int c0 = static_cast<int>(t / 2) - aux::kSyncFrames / 2;
  const auto ortho = loss::ortho_loss(out.z_sc.unsqueeze(1).expand_as(out.z_cd), out.z_cd, cfg.routing, cfg.ortho_mode);
  const auto sync = loss::sync_loss(st.aux, fake.narrow(1, c0, aux::kSyncFrames), batch.mels.select(1, t / 2));
  const auto id = loss::id_loss(st.aux, flat_g, flat_d);
  const auto rec = loss::rec_loss(flat_g, flat_d);
  const auto lpips = loss::lpips_loss(st.aux, flat_g, flat_d);
  const auto gan_g = loss::gan_g_loss(st.disc->score_windows(fake));

  loss::LossBreakdown parts;
  parts.ortho = ortho.item<double>();
  parts.sync = sync.item<double>();
  parts.id = id.item<double>();
  parts.rec = rec.item<double>();
  parts.lpips = lpips.item<double>();
  parts.gan_g = gan_g.item<double>();
  auto w = cfg.weights;
  if (cfg.ortho_mode == loss::OrthoMode::Off) w.ortho = 0.0;
  loss::LossBreakdown result;
  try {
    result = loss::total_loss(parts, w);
  } catch (const NumericError& e) {
    std::ostringstream o;
    o << e.what() << " at step " << st.step + 1 << " (ortho=" << parts.ortho << " sync=" << parts.sync
      << " id=" << parts.id << " rec=" << parts.rec << " lpips=" << parts.lpips << " gan_g=" << parts.gan_g << ")";
    throw NumericError(o.str());
  }

  const auto total = w.ortho * ortho + w.sync * sync + w.id * id + w.rec * rec + w.lpips * lpips + w.gan * gan_g;
  st.g_opt->zero_grad();
  if (st.aux_opt) st.aux_opt->zero_grad();
  total.backward();
  // The generator-side backward pass also reaches D; those gradients are discarded.
  st.d_opt->zero_grad();
  st.g_opt->step();
  if (st.aux_opt) st.aux_opt->step();
  return result;
}

loss::LossBreakdown train_step(TrainState& st, const Batch& batch) {
  st.model->train();
  const auto out = st.model->forward_window(batch.source, batch.driving, batch.mels);
  const double gan_d = discriminator_update(st, batch, out);
  if (!std::isfinite(gan_d))
    throw NumericError("loss term 'gan_d' is not finite at step " + std::to_string(st.step + 1));
  auto result = generator_update(st, batch, out);
  result.gan_d = gan_d;
  return result;
}

// --- loop -----------------------------------------------------------------

std::vector<std::pair<std::int64_t, loss::LossBreakdown>> read_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open training log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kLogHeader) throw IoError("unexpected training log header in " + path.string());
  std::vector<std::pair<std::int64_t, loss::LossBreakdown>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 9) throw IoError("malformed training log row in " + path.string());
    loss::LossBreakdown b{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
    rows.emplace_back(static_cast<std::int64_t>(v[0]), b);
  }
  return rows;
}

std::unique_ptr<TrainState> train(const TrainConfig& config, const data::Dataset& ds, const aux::AuxNets& aux,
                                  const TrainOptions& opt) {
  torch::set_num_threads(1);
  config.validate();
  require(!opt.out_dir.empty(), "train: output directory required");
  std::error_code ec;
  fs::create_directories(opt.out_dir, ec);
  if (ec) throw IoError("cannot create " + opt.out_dir.string() + ": " + ec.message());
  if (!aux.sync_trained || !aux.id_trained) throw PreconditionError("auxiliary networks are untrained; run pretrain-aux first");
  const auto clips = ds.clips_in(synth::Split::Train);
  require(!clips.empty(), "train: corpus has no training clips");

  const fs::path ckpt_path = opt.out_dir / kCheckpointName;
  const fs::path log_path = opt.out_dir / kLogName;
  std::unique_ptr<TrainState> st;
  if (opt.resume && fs::exists(ckpt_path)) {
    st = TrainState::load(ckpt_path, &config);
    if (st->corpus_fingerprint != ds.fingerprint())
      throw PreconditionError("checkpoint " + ckpt_path.string() + " was trained on a different corpus");
    TrainConfig stored = st->config;
    stored.steps = config.steps;
    stored.checkpoint_every = config.checkpoint_every;
    if (!(stored == config)) throw PreconditionError("resume: config differs from the checkpoint beyond steps/checkpoint_every");
    st->config = config;
    std::vector<std::pair<std::int64_t, loss::LossBreakdown>> rows;
    if (fs::exists(log_path)) rows = read_log(log_path);
    std::ofstream log(log_path, std::ios::trunc);
    log << kLogHeader << '\n';
    for (const auto& [s, b] : rows)
      if (s <= st->step) log << log_row(s, b);
  } else {
    st = std::make_unique<TrainState>(config, aux, ds.fingerprint());
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open " + log_path.string() + " for writing");
    log << kLogHeader << '\n';
  }
  {
    std::ofstream cfg(opt.out_dir / "config.json");
    cfg << config.to_json();
  }

  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot open " + log_path.string() + " for appending");
  while (st->step < config.steps) {
    const auto batch = sample_batch(ds, clips, config.seed, st->step, config.batch_size, config.window, config.min_source_gap);
    const auto b = train_step(*st, batch);
    ++st->step;
    log << log_row(st->step, b);
    log.flush();
    if (opt.on_step) opt.on_step(st->step, b);
    if (st->step % config.checkpoint_every == 0 || st->step == config.steps) st->save(ckpt_path);
  }
  if (!fs::exists(ckpt_path)) st->save(ckpt_path);
  return st;
}

// --- inference ------------------------------------------------------------

torch::Tensor generate_clip(TrainState& st, const torch::Tensor& source, const torch::Tensor& driving,
                            const torch::Tensor& mels) {
  if (source.dim() != 3 || driving.dim() != 4 || mels.dim() != 3)
    throw InvalidArgument("generate_clip: expected source [3,64,64], driving [n,3,64,64], mels [n,80,16]");
  if (driving.size(0) != mels.size(0))
    throw InvalidArgument("generate_clip: " + std::to_string(driving.size(0)) + " driving frames but " +
                          std::to_string(mels.size(0)) + " audio windows");
  const auto n = driving.size(0);
  if (n == 0) return torch::empty({0, 3, source.size(1), source.size(2)});
  torch::NoGradGuard g;
  st.model->eval();
  const std::int64_t w = st.config.window;
  std::vector<torch::Tensor> parts;
  for (std::int64_t s = 0; s < n; s += w) {
    const auto len = std::min(w, n - s);
    const auto o = st.model->forward_window(source.unsqueeze(0), driving.narrow(0, s, len).unsqueeze(0),
                                            mels.narrow(0, s, len).unsqueeze(0));
    parts.push_back(o.frames.squeeze(0));
  }
  return torch::cat(parts, 0);
}

torch::Tensor mel_windows_for(const std::vector<float>& wave16k, int first, int n, int total_frames) {
  require(first >= 0 && n >= 0 && first + n <= total_frames, "mel_windows_for: frame range outside the clip");
  const auto expected = static_cast<std::int64_t>(total_frames) * synth::kSamplesPerFrame;
  if (std::llabs(static_cast<std::int64_t>(wave16k.size()) - expected) >= synth::kSamplesPerFrame)
    throw InvalidArgument("audio has " + std::to_string(wave16k.size()) + " samples but " + std::to_string(total_frames) +
                          " video frames need " + std::to_string(expected));
  if (n == 0) return torch::empty({0, audio::kMels, audio::kWindowSteps});
  const auto mel = audio::mel_spectrogram(wave16k);
  const auto m = torch::from_blob(const_cast<float*>(mel.values.data()), {audio::kMels, mel.frames}, torch::kFloat32);
  const auto steps = data::window_steps(iota_from(first, n), mel.frames);
  return m.index_select(1, steps.flatten()).view({audio::kMels, n, audio::kWindowSteps}).permute({1, 0, 2}).contiguous();
}

CanonicalGrid canonical_grid(TrainState& st, const data::Dataset& ds, const std::vector<int>& identities, int frames_per_id) {
  require(!identities.empty() && frames_per_id >= 1, "canonical_grid: need at least one identity and one frame");
  torch::NoGradGuard g;
  st.model->eval();
  CanonicalGrid grid;
  std::vector<torch::Tensor> in_rows, out_rows;
  for (const int id : identities) {
    std::vector<std::pair<std::size_t, int>> pool;
    for (std::size_t c = 0; c < ds.clips().size(); ++c)
      if (ds.clip(c).identity == id)
        for (int t = 0; t < ds.clip(c).length(); ++t) pool.emplace_back(c, t);
    if (pool.empty()) throw InvalidArgument("canonical_grid: identity " + std::to_string(id) + " is not in the corpus");
    std::vector<torch::Tensor> row;
    for (int k = 0; k < frames_per_id; ++k) {
      const auto& [c, t] = pool[static_cast<std::size_t>(k) * pool.size() / static_cast<std::size_t>(frames_per_id)];
      row.push_back(ds.frames(c, {t}).squeeze(0));
    }
    const auto inputs = torch::stack(row);
    const auto outputs = st.model->canonical_images(inputs);
    grid.raw_variance += inputs.var(0, false).mean().item<double>();
    grid.canonical_variance += outputs.var(0, false).mean().item<double>();
    in_rows.push_back(inputs);
    out_rows.push_back(outputs);
  }
  grid.raw_variance /= static_cast<double>(identities.size());
  grid.canonical_variance /= static_cast<double>(identities.size());
  grid.inputs = torch::stack(in_rows);
  grid.outputs = torch::stack(out_rows);
  const auto r = grid.outputs.size(0), c = grid.outputs.size(1), h = grid.outputs.size(3), w = grid.outputs.size(4);
  grid.image = grid.outputs.permute({2, 0, 3, 1, 4}).reshape({3, r * h, c * w}).contiguous();
  return grid;
}

void write_grid_png(const CanonicalGrid& grid, const fs::path& path) {
  io::write_png(path, nets::tensor_to_frame(grid.image));
}

}  // namespace fctf::train
