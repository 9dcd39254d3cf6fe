#include "fctf/auxnets.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "fctf/audiofront.hpp"
#include "fctf/container.hpp"
#include "fctf/error.hpp"
#include "fctf/prng.hpp"

namespace fctf::aux {
namespace F = torch::nn::functional;
using nlohmann::json;
namespace {

constexpr std::uint64_t kTagSyncTrain = 0x53594e43ull;  // "SYNC"
constexpr std::uint64_t kTagSyncEval = 0x53594e45ull;
constexpr std::uint64_t kTagIdTrain = 0x49445452ull;
constexpr std::uint64_t kTagIdEval = 0x49444556ull;
constexpr double kIdScale = 16.0;

torch::nn::LeakyReLU act() { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); }
torch::nn::Conv2d conv(int in, int out, int k, int s, int p) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(s).padding(p));
}
torch::nn::Conv1d conv1(int in, int out, int k, int s, int p) {
  return torch::nn::Conv1d(torch::nn::Conv1dOptions(in, out, k).stride(s).padding(p));
}

std::vector<int> range(int lo, int hi) {
  std::vector<int> v(static_cast<std::size_t>(hi - lo));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

/// Training identities mapped to dense class indices, used for the classifier head.
std::vector<int> class_of_identity(const data::Dataset& ds) {
  std::vector<int> cls(static_cast<std::size_t>(ds.spec().identities), -1);
  int next = 0;
  for (const int id : ds.identities_in(synth::Split::Train)) cls[static_cast<std::size_t>(id)] = next++;
  return cls;
}

/// Clips used to fit the identity net: all but the last clip of each training identity.
std::vector<std::size_t> id_fit_clips(const data::Dataset& ds) {
  const int last = ds.spec().clips_per_identity - 1;
  std::vector<std::size_t> out;
  for (const auto i : ds.clips_in(synth::Split::Train))
    if (last == 0 || ds.clip(i).clip < last) out.push_back(i);
  return out;
}

std::vector<std::size_t> id_holdout_clips(const data::Dataset& ds) {
  const int last = ds.spec().clips_per_identity - 1;
  std::vector<std::size_t> out;
  for (const auto i : ds.clips_in(synth::Split::Train))
    if (ds.clip(i).clip == last) out.push_back(i);
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << s;
  if (!out) throw IoError("write failed: " + p.string());
}

}  // namespace

// --- networks -------------------------------------------------------------

SyncNetImpl::SyncNetImpl() {
  video_ = register_module(
      "video", torch::nn::Sequential(conv(3 * kSyncFrames, 32, 4, 2, 1), act(), conv(32, 64, 3, 1, 1), act(),
                                     conv(64, 128, 4, 2, 1), act(), conv(128, 128, 4, 2, 1), act(), torch::nn::Flatten(),
                                     torch::nn::Linear(128 * 4 * 8, 256), act(), torch::nn::Linear(256, kEmbedDim)));
  audio_ = register_module("audio", torch::nn::Sequential(conv1(80, 128, 3, 1, 1), act(), conv1(128, 128, 4, 2, 1), act(),
                                                          conv1(128, 128, 4, 2, 1), act(), torch::nn::Flatten(),
                                                          torch::nn::Linear(128 * 4, 256), act(),
                                                          torch::nn::Linear(256, kEmbedDim)));
  log_scale_ = register_parameter("log_scale", torch::full({1}, std::log(10.0)));
  bias_ = register_parameter("bias", torch::zeros({1}));
}

torch::Tensor SyncNetImpl::embed_video(const torch::Tensor& frames) {
  if (frames.dim() != 5 || frames.size(1) != kSyncFrames || frames.size(2) != 3 || frames.size(3) != synth::kImageSize)
    throw InvalidArgument("sync video branch expects [B,5,3,64,64], got " + c10::str(frames.sizes()));
  const auto h = synth::kImageSize / 2;
  const auto lower = frames.narrow(3, h, h).reshape({frames.size(0), 3 * kSyncFrames, h, frames.size(4)});
  return F::normalize(video_->forward(lower * 2.0 - 1.0), F::NormalizeFuncOptions().dim(1));
}

torch::Tensor SyncNetImpl::embed_audio(const torch::Tensor& mel) {
  if (mel.dim() != 3 || mel.size(1) != audio::kMels || mel.size(2) != audio::kWindowSteps)
    throw InvalidArgument("sync audio branch expects [B,80,16], got " + c10::str(mel.sizes()));
  return F::normalize(audio_->forward((mel + 4.0) / 4.0), F::NormalizeFuncOptions().dim(1));
}

torch::Tensor SyncNetImpl::logit(const torch::Tensor& f_v, const torch::Tensor& f_a) {
  return (f_v * f_a).sum(1) * log_scale_.exp() + bias_;
}

IdNetImpl::IdNetImpl(int classes) : classes_(classes) {
  require(classes >= 1, "identity net needs at least one class");
  trunk_ = register_module("trunk", torch::nn::Sequential(conv(3, 32, 4, 2, 1), act(), conv(32, 64, 4, 2, 1), act(),
                                                          conv(64, 128, 4, 2, 1), act(), conv(128, 128, 4, 2, 1), act(),
                                                          torch::nn::Flatten(), torch::nn::Linear(128 * 4 * 4, 256), act(),
                                                          torch::nn::Linear(256, kEmbedDim)));
  centres_ = register_parameter("centres", torch::randn({classes, kEmbedDim}));
}

torch::Tensor IdNetImpl::embed(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw InvalidArgument("identity net expects [B,3,64,64]");
  return F::normalize(trunk_->forward(images * 2.0 - 1.0), F::NormalizeFuncOptions().dim(1));
}

torch::Tensor IdNetImpl::class_logits(const torch::Tensor& embedding) {
  return kIdScale * torch::matmul(embedding, F::normalize(centres_, F::NormalizeFuncOptions().dim(1)).t());
}

PerceptualNetImpl::PerceptualNetImpl(std::uint64_t seed) {
  const int widths[5] = {3, 16, 32, 64, 64};
  const RandomStream root(seed);
  for (int i = 0; i < kFeatureMaps; ++i) {
    auto c = register_module("stage" + std::to_string(i + 1), conv(widths[i], widths[i + 1], 3, i == 0 ? 1 : 2, 1));
    RandomStream r = root.child(static_cast<std::uint64_t>(i));
    torch::NoGradGuard g;
    auto w = c->weight.data_ptr<float>();
    const double std = std::sqrt(2.0 / (widths[i] * 9.0));
    for (std::int64_t k = 0; k < c->weight.numel(); ++k) w[k] = static_cast<float>(std * r.normal());
    c->bias.zero_();
    stages_.push_back(c);
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> PerceptualNetImpl::features(const torch::Tensor& images) {
  std::vector<torch::Tensor> out;
  auto x = images * 2.0 - 1.0;
  for (auto& s : stages_) {
    x = F::leaky_relu(s->forward(x), F::LeakyReLUFuncOptions().negative_slope(0.2));
    out.push_back(x);
  }
  return out;
}

AuxNets::AuxNets(int id_classes, std::uint64_t init_seed) : sync(nullptr), id(nullptr), perceptual(nullptr) {
  torch::manual_seed(init_seed);
  sync = SyncNet();
  id = IdNet(id_classes);
  perceptual = PerceptualNet();
}

void AuxNets::set_trainable(bool sync_on, bool id_on) {
  for (auto& p : sync->parameters()) p.set_requires_grad(sync_on);
  for (auto& p : id->parameters()) p.set_requires_grad(id_on);
  for (auto& p : perceptual->parameters()) p.set_requires_grad(false);
}

void AuxNets::to(torch::Dtype dtype) {
  sync->to(dtype);
  id->to(dtype);
  perceptual->to(dtype);
}

torch::Tensor sync_video(AuxNets& aux, const torch::Tensor& frames) {
  if (!aux.sync_trained) throw PreconditionError("sync network is untrained; run pretrain-aux first");
  return aux.sync->embed_video(frames);
}

torch::Tensor sync_audio(AuxNets& aux, const torch::Tensor& mel) {
  if (!aux.sync_trained) throw PreconditionError("sync network is untrained; run pretrain-aux first");
  return aux.sync->embed_audio(mel);
}

torch::Tensor id_embed(AuxNets& aux, const torch::Tensor& images) {
  if (!aux.id_trained) throw PreconditionError("identity network is untrained; run pretrain-aux first");
  return aux.id->embed(images);
}

std::vector<torch::Tensor> perceptual_features(AuxNets& aux, const torch::Tensor& images) {
  return aux.perceptual->features(images);
}

// --- sync pretraining -----------------------------------------------------

SyncPairs sample_sync_pairs(const data::Dataset& ds, const std::vector<std::size_t>& clips, std::uint64_t key, int n) {
  require(!clips.empty(), "sync pairs: no clips to sample from");
  RandomStream r(key);
  std::vector<torch::Tensor> video, mel;
  std::vector<float> label;
  video.reserve(static_cast<std::size_t>(n));
  mel.reserve(static_cast<std::size_t>(n));
  int produced = 0, attempts = 0;
  while (produced < n) {
    require(++attempts < 100 * n + 100, "sync pairs: clips too short for shifted negatives");
    const auto ci = clips[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(clips.size()) - 1))];
    const int len = ds.clip(ci).length();
    if (len < kSyncFrames) continue;
    const int c = static_cast<int>(r.uniform_int(kSyncFrames / 2, len - 1 - kSyncFrames / 2));
    const bool positive = r.uniform() < 0.5;
    int a = c;
    if (!positive) {
      std::vector<int> far;
      for (int t = 0; t < len; ++t)
        if (std::abs(t - c) >= kMinNegativeShift) far.push_back(t);
      if (far.empty()) continue;
      a = far[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(far.size()) - 1))];
    }
    video.push_back(ds.frames(ci, range(c - kSyncFrames / 2, c + kSyncFrames / 2 + 1)));
    mel.push_back(ds.mel_windows(ci, {a}).squeeze(0));
    label.push_back(positive ? 1.0f : 0.0f);
    ++produced;
  }
  return {torch::stack(video), torch::stack(mel), torch::tensor(label)};
}

SyncReport evaluate_syncnet(AuxNets& aux, const data::Dataset& ds, std::uint64_t seed, int pairs) {
  torch::NoGradGuard g;
  auto clips = ds.clips_in(synth::Split::Val);
  if (clips.empty()) clips = ds.clips_in(synth::Split::Train);
  SyncReport rep;
  int correct = 0, n_pos = 0, n_neg = 0;
  constexpr int kChunk = 100;
  for (int done = 0; done < pairs; done += kChunk) {
    const int n = std::min(kChunk, pairs - done);
    const auto p = sample_sync_pairs(ds, clips, RandomStream(seed).child(kTagSyncEval).child(static_cast<std::uint64_t>(done)).key(), n);
    const auto fv = aux.sync->embed_video(p.video);
    const auto fa = aux.sync->embed_audio(p.mel);
    const auto cos = (fv * fa).sum(1);
    const auto pred = aux.sync->logit(fv, fa).gt(0.0).to(torch::kFloat32);
    correct += pred.eq(p.label).sum().item<int>();
    const auto pos = p.label.gt(0.5);
    n_pos += pos.sum().item<int>();
    n_neg += n - pos.sum().item<int>();
    rep.mean_aligned_cos += cos.masked_select(pos).sum().item<double>();
    rep.mean_shifted_cos += cos.masked_select(pos.logical_not()).sum().item<double>();
  }
  rep.accuracy = static_cast<double>(correct) / pairs;
  rep.mean_aligned_cos /= std::max(1, n_pos);
  rep.mean_shifted_cos /= std::max(1, n_neg);
  return rep;
}

SyncReport train_syncnet(AuxNets& aux, const data::Dataset& ds, const PretrainOptions& opt) {
  const auto clips = ds.clips_in(synth::Split::Train);
  require(!clips.empty(), "train_syncnet: corpus has no training clips");
  aux.sync->train();
  torch::optim::Adam adam(aux.sync->parameters(), torch::optim::AdamOptions(opt.sync_lr));
  std::vector<double> curve;
  const RandomStream root = RandomStream(opt.seed).child(kTagSyncTrain);
  for (int step = 0; step < opt.sync_steps; ++step) {
    const auto p = sample_sync_pairs(ds, clips, root.child(static_cast<std::uint64_t>(step)).key(), opt.sync_batch);
    const auto logits = aux.sync->logit(aux.sync->embed_video(p.video), aux.sync->embed_audio(p.mel));
    const auto loss = F::binary_cross_entropy_with_logits(logits, p.label);
    adam.zero_grad();
    loss.backward();
    adam.step();
    curve.push_back(loss.item<double>());
  }
  aux.sync->eval();
  aux.sync_trained = true;
  auto rep = evaluate_syncnet(aux, ds, opt.seed, opt.eval_pairs);
  rep.loss_curve = std::move(curve);
  return rep;
}

// --- identity pretraining -------------------------------------------------

double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  require(!positives.empty() && !negatives.empty(), "roc_auc: need both classes");
  std::vector<std::pair<double, int>> all;
  for (const double v : positives) all.emplace_back(v, 1);
  for (const double v : negatives) all.emplace_back(v, 0);
  std::sort(all.begin(), all.end());
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;  // 1-based average rank
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(positives.size()), nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double evaluate_id_embedder(AuxNets& aux, const data::Dataset& ds, std::uint64_t seed, int pairs) {
  torch::NoGradGuard g;
  const auto clips = id_holdout_clips(ds);
  require(clips.size() >= 2, "identity evaluation needs at least two training identities");
  RandomStream r = RandomStream(seed).child(kTagIdEval);
  // One embedding per sampled frame, drawn once and reused across pairs.
  constexpr int kFramesPerClip = 8;
  std::vector<torch::Tensor> emb;
  for (const auto ci : clips) {
    std::vector<int> idx;
    for (int k = 0; k < kFramesPerClip; ++k) idx.push_back(static_cast<int>(r.uniform_int(0, ds.clip(ci).length() - 1)));
    emb.push_back(aux.id->embed(ds.frames(ci, idx)));
  }
  std::vector<double> same, diff;
  for (int k = 0; k < pairs; ++k) {
    const auto a = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(clips.size()) - 1));
    const auto i = r.uniform_int(0, kFramesPerClip - 1);
    if (k % 2 == 0) {
      auto j = r.uniform_int(0, kFramesPerClip - 2);
      if (j >= i) ++j;
      same.push_back((emb[a][i] * emb[a][j]).sum().item<double>());
    } else {
      auto b = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(clips.size()) - 2));
      if (b >= a) ++b;
      const auto j = r.uniform_int(0, kFramesPerClip - 1);
      diff.push_back((emb[a][i] * emb[b][j]).sum().item<double>());
    }
  }
  return roc_auc(same, diff);
}

IdReport train_id_embedder(AuxNets& aux, const data::Dataset& ds, const PretrainOptions& opt) {
  const auto clips = id_fit_clips(ds);
  require(!clips.empty(), "train_id_embedder: corpus has no training clips");
  const auto cls = class_of_identity(ds);
  aux.id->train();
  torch::optim::Adam adam(aux.id->parameters(), torch::optim::AdamOptions(opt.id_lr));
  IdReport rep;
  const RandomStream root = RandomStream(opt.seed).child(kTagIdTrain);
  for (int step = 0; step < opt.id_steps; ++step) {
    RandomStream r = root.child(static_cast<std::uint64_t>(step));
    std::vector<torch::Tensor> images;
    std::vector<std::int64_t> labels;
    for (int b = 0; b < opt.id_batch; ++b) {
      const auto ci = clips[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(clips.size()) - 1))];
      const int t = static_cast<int>(r.uniform_int(0, ds.clip(ci).length() - 1));
      images.push_back(ds.frames(ci, {t}).squeeze(0));
      labels.push_back(cls[static_cast<std::size_t>(ds.clip(ci).identity)]);
    }
    const auto logits = aux.id->class_logits(aux.id->embed(torch::stack(images)));
    const auto loss = F::cross_entropy(logits, torch::tensor(labels, torch::kLong));
    adam.zero_grad();
    loss.backward();
    adam.step();
    rep.loss_curve.push_back(loss.item<double>());
  }
  aux.id->eval();
  aux.id_trained = true;
  rep.auc = evaluate_id_embedder(aux, ds, opt.seed, opt.eval_pairs);
  return rep;
}

// --- persistence ----------------------------------------------------------

std::string PretrainReport::to_json() const {
  json j;
  j["sync_accuracy"] = sync.accuracy;
  j["sync_mean_aligned_cos"] = sync.mean_aligned_cos;
  j["sync_mean_shifted_cos"] = sync.mean_shifted_cos;
  j["sync_final_loss"] = sync.loss_curve.empty() ? 0.0 : sync.loss_curve.back();
  j["id_auc"] = id.auc;
  j["id_final_loss"] = id.loss_curve.empty() ? 0.0 : id.loss_curve.back();
  j["seconds"] = seconds;
  return j.dump(2) + "\n";
}

PretrainReport pretrain_aux(const data::Dataset& ds, const PretrainOptions& opt, const std::filesystem::path& out_dir) {
  torch::set_num_threads(1);
  const int classes = static_cast<int>(ds.identities_in(synth::Split::Train).size());
  require(classes >= 2, "pretrain-aux needs at least two training identities");
  const auto t0 = std::chrono::steady_clock::now();
  AuxNets aux(classes, opt.seed);
  PretrainReport rep;
  rep.sync = train_syncnet(aux, ds, opt);
  rep.id = train_id_embedder(aux, ds, opt);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  aux.set_trainable(false, false);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  save_aux(aux, out_dir);
  write_text(out_dir / "aux_report.json", rep.to_json());
  return rep;
}

void save_aux(const AuxNets& aux, const std::filesystem::path& dir) {
  ckpt::TensorArchive s, i, p;
  ckpt::put_module(s, "sync", *aux.sync);
  s.put_int("meta/trained", aux.sync_trained ? 1 : 0);
  ckpt::put_module(i, "id", *aux.id);
  i.put_int("meta/trained", aux.id_trained ? 1 : 0);
  i.put_int("meta/classes", aux.id->classes());
  ckpt::put_module(p, "perceptual", *aux.perceptual);
  s.save(dir / "syncnet.fctf");
  i.save(dir / "idnet.fctf");
  p.save(dir / "perceptual.fctf");
}

AuxNets load_aux(const std::filesystem::path& dir) {
  for (const char* f : {"syncnet.fctf", "idnet.fctf", "perceptual.fctf"})
    if (!std::filesystem::exists(dir / f))
      throw PreconditionError("missing auxiliary checkpoint " + (dir / f).string() + "; run pretrain-aux first");
  const auto s = ckpt::TensorArchive::load(dir / "syncnet.fctf");
  const auto i = ckpt::TensorArchive::load(dir / "idnet.fctf");
  const auto p = ckpt::TensorArchive::load(dir / "perceptual.fctf");
  AuxNets aux(static_cast<int>(i.get_int("meta/classes")), 0);
  ckpt::get_module(s, "sync", *aux.sync);
  ckpt::get_module(i, "id", *aux.id);
  ckpt::get_module(p, "perceptual", *aux.perceptual);
  aux.sync_trained = s.get_int("meta/trained") != 0;
  aux.id_trained = i.get_int("meta/trained") != 0;
  aux.sync->eval();
  aux.id->eval();
  aux.set_trainable(false, false);
  return aux;
}

}  // namespace fctf::aux
