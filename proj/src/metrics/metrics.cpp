#include "fctf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>

#include "json.hpp"

#include "fctf/error.hpp"
#include "fctf/mediaio.hpp"

namespace fctf::metrics {
using synth::FaceFrame;
using synth::MouthLandmarks;
namespace {

constexpr double kK1 = 0.01, kK2 = 0.03, kSigma = 1.5;
constexpr int kWindow = 11;
constexpr double kMsWeights[3] = {0.0448, 0.2856, 0.3001};

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  [[nodiscard]] double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

void check_shapes(const FaceFrame& a, const FaceFrame& b, const char* who) {
  if (!a.same_shape(b))
    throw InvalidArgument(std::string(who) + ": shape mismatch " + std::to_string(a.height) + "x" +
                          std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
}

Plane luma(const FaceFrame& f) {
  Plane p{f.height, f.width, std::vector<double>(static_cast<std::size_t>(f.height) * f.width)};
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      p.at(y, x) = 0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) + 0.114 * f.at(y, x, 2);
  return p;
}

Plane mul(const Plane& a, const Plane& b) {
  Plane o = a;
  for (std::size_t i = 0; i < o.v.size(); ++i) o.v[i] = a.v[i] * b.v[i];
  return o;
}

/// Separable valid-mode Gaussian filter.
Plane filter(const Plane& p, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  Plane rows{p.h, p.w - k + 1, {}};
  rows.v.assign(static_cast<std::size_t>(rows.h) * rows.w, 0.0);
  for (int y = 0; y < rows.h; ++y)
    for (int x = 0; x < rows.w; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[static_cast<std::size_t>(i)] * p.at(y, x + i);
      rows.at(y, x) = s;
    }
  Plane out{p.h - k + 1, rows.w, {}};
  out.v.assign(static_cast<std::size_t>(out.h) * out.w, 0.0);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[static_cast<std::size_t>(i)] * rows.at(y + i, x);
      out.at(y, x) = s;
    }
  return out;
}

std::vector<double> gaussian(int size) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < size; ++i) sum += g[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * kSigma * kSigma));
  for (auto& v : g) v /= sum;
  return g;
}

struct SsimParts {
  double ssim = 0, cs = 0;
};

SsimParts ssim_planes(const Plane& x, const Plane& y) {
  const auto g = gaussian(std::min({kWindow, x.h, x.w}));
  const Plane mx = filter(x, g), my = filter(y, g);
  const Plane sxx = filter(mul(x, x), g), syy = filter(mul(y, y), g), sxy = filter(mul(x, y), g);
  const double c1 = kK1 * kK1, c2 = kK2 * kK2;
  double s = 0, cs = 0;
  for (std::size_t i = 0; i < mx.v.size(); ++i) {
    const double ux = mx.v[i], uy = my.v[i];
    const double vx = sxx.v[i] - ux * ux, vy = syy.v[i] - uy * uy, cxy = sxy.v[i] - ux * uy;
    const double c = (2 * cxy + c2) / (vx + vy + c2);
    s += (2 * ux * uy + c1) / (ux * ux + uy * uy + c1) * c;
    cs += c;
  }
  const auto n = static_cast<double>(mx.v.size());
  return {s / n, cs / n};
}

Plane halve(const Plane& p) {
  Plane o{p.h / 2, p.w / 2, {}};
  o.v.resize(static_cast<std::size_t>(o.h) * o.w);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x)
      o.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
  return o;
}

MouthLandmarks collapsed(const MouthLandmarks& prev) {
  MouthLandmarks m = prev;
  const synth::Point c{(prev.left.x + prev.right.x) / 2, (prev.left.y + prev.right.y) / 2};
  m.top = c;
  m.bottom = c;
  return m;
}

std::vector<FaceFrame> to_frames(const torch::Tensor& t) {
  std::vector<FaceFrame> out;
  out.reserve(static_cast<std::size_t>(t.size(0)));
  for (std::int64_t i = 0; i < t.size(0); ++i) out.push_back(nets::tensor_to_frame(t[i]));
  return out;
}

std::vector<int> iota(int lo, int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + i;
  return v;
}

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

torch::Tensor standardise(const torch::Tensor& x, const torch::Tensor& mean, const torch::Tensor& sd) {
  return (x - mean) / sd;
}

/// Ridge weights on standardised features; y [n,k] centred inside.
torch::Tensor ridge_predict(const torch::Tensor& x_fit, const torch::Tensor& y_fit, const torch::Tensor& x_eval, double lambda) {
  require(x_fit.dim() == 2 && x_eval.dim() == 2 && x_fit.size(1) == x_eval.size(1), "ridge: feature shapes differ");
  require(x_fit.size(0) == y_fit.size(0) && x_fit.size(0) > 0, "ridge: fit set is empty or mismatched");
  require(lambda > 0, "ridge: lambda must be positive");
  const auto xf = x_fit.to(torch::kFloat64), xe = x_eval.to(torch::kFloat64), yf = y_fit.to(torch::kFloat64);
  const auto mean = xf.mean(0, true);
  const auto sd = xf.std(0, false, true).clamp_min(1e-8);
  const auto a = standardise(xf, mean, sd), e = standardise(xe, mean, sd);
  const auto ym = yf.mean(0, true);
  const auto gram = a.t().mm(a) + lambda * torch::eye(a.size(1), a.options());
  const auto w = torch::linalg_solve(gram, a.t().mm(yf - ym));
  return e.mm(w) + ym;
}

}  // namespace

// --- image metrics ----------------------------------------------------------

double ssim(const FaceFrame& a, const FaceFrame& b) {
  check_shapes(a, b, "ssim");
  return ssim_planes(luma(a), luma(b)).ssim;
}

double ms_ssim(const FaceFrame& a, const FaceFrame& b) {
  check_shapes(a, b, "ms_ssim");
  if (a.height < 32 || a.width < 32) throw InvalidArgument("ms_ssim: images must be at least 32x32");
  const double wsum = kMsWeights[0] + kMsWeights[1] + kMsWeights[2];
  Plane x = luma(a), y = luma(b);
  double out = 1.0;
  for (int j = 0; j < 3; ++j) {
    const auto p = ssim_planes(x, y);
    const double w = kMsWeights[j] / wsum;
    out *= std::pow(std::max(j < 2 ? p.cs : p.ssim, 0.0), w);
    if (j < 2) {
      x = halve(x);
      y = halve(y);
    }
  }
  return out;
}

double psnr(const FaceFrame& a, const FaceFrame& b) {
  check_shapes(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// --- landmarks ----------------------------------------------------------------

std::optional<MouthLandmarks> extract_mouth_landmarks(const FaceFrame& f) {
  const int h = f.height, w = f.width;
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<char> mask(label.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) mask[static_cast<std::size_t>(y) * w + x] = synth::is_mouth_pixel(f.at(y, x, 0), f.at(y, x, 1), f.at(y, x, 2));
  int best_size = 0, x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  int next = 0;
  std::deque<int> queue;
  for (int start = 0; start < h * w; ++start) {
    if (!mask[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    int size = 0, bx0 = w, bx1 = -1, by0 = h, by1 = -1;
    label[static_cast<std::size_t>(start)] = next;
    queue.push_back(start);
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      const int py = p / w, px = p % w;
      ++size;
      bx0 = std::min(bx0, px), bx1 = std::max(bx1, px), by0 = std::min(by0, py), by1 = std::max(by1, py);
      const int nb[4][2] = {{py - 1, px}, {py + 1, px}, {py, px - 1}, {py, px + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
        const auto qi = static_cast<std::size_t>(q[0]) * w + q[1];
        if (mask[qi] && label[qi] < 0) {
          label[qi] = next;
          queue.push_back(static_cast<int>(qi));
        }
      }
    }
    if (size > best_size) best_size = size, x0 = bx0, x1 = bx1, y0 = by0, y1 = by1;
    ++next;
  }
  if (best_size == 0) return std::nullopt;
  const double cx = (x0 + x1 + 1) / 2.0, cy = (y0 + y1 + 1) / 2.0;
  MouthLandmarks m;
  m.left = {static_cast<double>(x0), cy};
  m.right = {static_cast<double>(x1 + 1), cy};
  m.top = {cx, static_cast<double>(y0)};
  m.bottom = {cx, static_cast<double>(y1 + 1)};
  return m;
}

double landmark_distance(const MouthLandmarks& a, const MouthLandmarks& b) {
  const auto pa = a.points(), pb = b.points();
  double s = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) s += std::hypot(pa[i].x - pb[i].x, pa[i].y - pb[i].y);
  return s / static_cast<double>(pa.size());
}

LmdResult lmd_against(std::span<const FaceFrame> frames, std::span<const MouthLandmarks> truth) {
  require(frames.size() == truth.size(), "lmd: frame and landmark counts differ");
  LmdResult r;
  MouthLandmarks prior = collapsed(synth::mouth_landmarks(synth::IdentityParams{}, synth::MotionParams{}));
  double sum = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto lm = extract_mouth_landmarks(frames[i]);
    if (!lm) {
      lm = prior;
      ++r.empty_frames;
    }
    sum += landmark_distance(*lm, truth[i]);
    prior = collapsed(*lm);
  }
  r.frames = static_cast<int>(frames.size());
  r.lmd = frames.empty() ? 0.0 : sum / static_cast<double>(frames.size());
  return r;
}

LmdResult lmd(std::span<const FaceFrame> frames, const synth::IdentityParams& id, std::span<const synth::MotionParams> driving) {
  std::vector<MouthLandmarks> truth;
  truth.reserve(driving.size());
  for (const auto& m : driving) truth.push_back(synth::mouth_landmarks(id, m));
  return lmd_against(frames, truth);
}

// --- sync confidence ----------------------------------------------------------

double lse_c(aux::AuxNets& aux, const torch::Tensor& frames, const torch::Tensor& mels) {
  if (frames.dim() != 4 || mels.dim() != 3 || frames.size(0) != mels.size(0))
    throw InvalidArgument("lse_c: expected frames [n,3,64,64] and mels [n,80,16] of equal length");
  const auto n = frames.size(0);
  if (n < aux::kSyncFrames) throw InvalidArgument("lse_c: clip shorter than 5 frames");
  torch::NoGradGuard g;
  const bool was_training = aux.sync->is_training();
  aux.sync->eval();
  // One sample per call keeps identical inputs bit-identical in the embedding.
  std::vector<torch::Tensor> fa;
  for (std::int64_t t = 0; t < n; ++t) fa.push_back(aux::sync_audio(aux, mels.narrow(0, t, 1)).squeeze(0));
  const auto audio = torch::stack(fa).to(torch::kFloat64);
  double sum = 0;
  std::int64_t windows = 0;
  const std::int64_t half = aux::kSyncFrames / 2;
  for (std::int64_t c = half; c + half < n; ++c) {
    const auto fv = aux::sync_video(aux, frames.narrow(0, c - half, aux::kSyncFrames).unsqueeze(0)).squeeze(0).to(torch::kFloat64);
    std::vector<double> cos;
    for (int o = -kSyncOffsets; o <= kSyncOffsets; ++o) {
      const auto a = std::clamp<std::int64_t>(c + o, 0, n - 1);
      cos.push_back(fv.dot(audio[a]).item<double>());
    }
    const double mx = *std::max_element(cos.begin(), cos.end());
    std::nth_element(cos.begin(), cos.begin() + kSyncOffsets, cos.end());
    sum += mx - cos[kSyncOffsets];
    ++windows;
  }
  aux.sync->train(was_training);
  return sum / static_cast<double>(windows);
}

// --- reports ----------------------------------------------------------------

void EvalReport::aggregate() {
  ssim = ms_ssim = psnr = lmd = lse_c = 0;
  if (clips.empty()) return;
  for (const auto& c : clips) {
    ssim += c.ssim;
    ms_ssim += c.ms_ssim;
    psnr += c.psnr;
    lmd += c.lmd;
    lse_c += c.lse_c;
  }
  const auto n = static_cast<double>(clips.size());
  ssim /= n, ms_ssim /= n, psnr /= n, lmd /= n, lse_c /= n;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["clips"] = clips.size();
  j["ssim"] = ssim;
  j["ms_ssim"] = ms_ssim;
  j["psnr"] = psnr;
  j["lmd"] = lmd;
  j["lse_c"] = lse_c;
  j["checkpoint_fingerprint"] = hex(checkpoint_fingerprint);
  j["corpus_fingerprint"] = hex(corpus_fingerprint);
  j["checkpoint_step"] = checkpoint_step;
  auto& rows = j["per_clip"] = nlohmann::json::array();
  for (const auto& c : clips)
    rows.push_back({{"identity", c.identity}, {"clip", c.clip}, {"frames", c.frames}, {"ssim", c.ssim},
                    {"ms_ssim", c.ms_ssim}, {"psnr", c.psnr}, {"lmd", c.lmd}, {"lse_c", c.lse_c},
                    {"empty_mouth_frames", c.empty_mouth_frames}});
  return j.dump(2) + "\n";
}

bool EvalReport::beats(const EvalReport& o) const {
  return ssim > o.ssim && ms_ssim > o.ms_ssim && psnr > o.psnr && lmd < o.lmd && lse_c > o.lse_c;
}

void write_strip(const std::filesystem::path& path, const torch::Tensor& source, const torch::Tensor& driving,
                 const torch::Tensor& generated, int columns) {
  require(driving.sizes().equals(generated.sizes()) && driving.size(0) > 0, "write_strip: driving and generated differ");
  const auto n = driving.size(0);
  const auto cols = std::min<std::int64_t>(columns, n);
  std::vector<torch::Tensor> top{source}, bottom{source};
  for (std::int64_t k = 0; k < cols; ++k) {
    const auto i = k * n / cols;
    top.push_back(driving[i]);
    bottom.push_back(generated[i]);
  }
  const auto image = torch::cat({torch::cat(top, 2), torch::cat(bottom, 2)}, 1);
  io::write_png(path, nets::tensor_to_frame(image));
}

EvalReport evaluate_with(const data::Dataset& ds, aux::AuxNets& aux, const GenerateFn& generate, const EvalOptions& opt) {
  auto clips = ds.clips_in(opt.split);
  if (opt.max_clips >= 0 && static_cast<std::size_t>(opt.max_clips) < clips.size()) clips.resize(static_cast<std::size_t>(opt.max_clips));
  if (clips.empty()) throw PreconditionError("evaluate: the " + synth::to_string(opt.split) + " split is empty");
  if (opt.strips_dir) std::filesystem::create_directories(*opt.strips_dir);
  EvalReport rep;
  rep.corpus_fingerprint = ds.fingerprint();
  torch::NoGradGuard g;
  for (const auto ci : clips) {
    const auto& clip = ds.clip(ci);
    const int len = clip.length();
    if (len < aux::kSyncFrames + 1) throw PreconditionError("evaluate: clips need at least 6 frames");
    const auto frames = ds.all_frames(ci);
    const auto mels = ds.mel_windows(ci, iota(0, len));
    const auto source = frames[0];
    const auto driving = frames.narrow(0, 1, len - 1);
    const auto dmels = mels.narrow(0, 1, len - 1);
    const auto gen = generate(source, driving, dmels);
    if (!gen.sizes().equals(driving.sizes())) throw std::logic_error("evaluate: generator returned " + c10::str(gen.sizes()));
    const auto gf = to_frames(gen), df = to_frames(driving);
    ClipMetrics m;
    m.identity = clip.identity;
    m.clip = clip.clip;
    m.frames = len - 1;
    for (std::size_t i = 0; i < gf.size(); ++i) {
      m.ssim += ssim(gf[i], df[i]);
      m.ms_ssim += ms_ssim(gf[i], df[i]);
      m.psnr += psnr(gf[i], df[i]);
    }
    m.ssim /= static_cast<double>(gf.size());
    m.ms_ssim /= static_cast<double>(gf.size());
    m.psnr /= static_cast<double>(gf.size());
    const auto l = lmd(gf, clip.identity_params, std::span(clip.motions).subspan(1));
    m.lmd = l.lmd;
    m.empty_mouth_frames = l.empty_frames;
    m.lse_c = lse_c(aux, gen, dmels);
    rep.clips.push_back(m);
    if (opt.strips_dir) {
      char name[64];
      std::snprintf(name, sizeof name, "strip_id%04d_clip%02d.png", clip.identity, clip.clip);
      write_strip(*opt.strips_dir / name, source, driving, gen);
    }
  }
  rep.aggregate();
  return rep;
}

EvalReport evaluate(train::TrainState& st, const data::Dataset& ds, const EvalOptions& opt) {
  if (st.corpus_fingerprint != ds.fingerprint())
    throw PreconditionError("evaluate: checkpoint was trained on a different corpus");
  auto rep = evaluate_with(
      ds, st.aux,
      [&st](const torch::Tensor& s, const torch::Tensor& d, const torch::Tensor& m) { return train::generate_clip(st, s, d, m); },
      opt);
  rep.checkpoint_fingerprint = st.generator_checksum();
  rep.checkpoint_step = st.step;
  return rep;
}

// --- probes -------------------------------------------------------------------

double ridge_r2(const torch::Tensor& x_fit, const torch::Tensor& y_fit, const torch::Tensor& x_eval,
                const torch::Tensor& y_eval, double lambda) {
  const auto pred = ridge_predict(x_fit, y_fit.reshape({-1, 1}), x_eval, lambda).flatten();
  const auto y = y_eval.to(torch::kFloat64).flatten();
  const double ss_res = (y - pred).square().sum().item<double>();
  const double ss_tot = (y - y.mean()).square().sum().item<double>();
  require(ss_tot > 0, "ridge_r2: evaluation targets are constant");
  return 1.0 - ss_res / ss_tot;
}

double ridge_accuracy(const torch::Tensor& x_fit, const torch::Tensor& labels_fit, const torch::Tensor& x_eval,
                      const torch::Tensor& labels_eval, double lambda) {
  const auto lf = labels_fit.to(torch::kLong), le = labels_eval.to(torch::kLong);
  const auto k = std::max(lf.max().item<std::int64_t>(), le.max().item<std::int64_t>()) + 1;
  const auto onehot = torch::one_hot(lf, k).to(torch::kFloat64);
  const auto pred = ridge_predict(x_fit, onehot, x_eval, lambda).argmax(1);
  return pred.eq(le).to(torch::kFloat64).mean().item<double>();
}

std::string ProbeReport::to_json() const {
  nlohmann::json j{{"sc_identity_accuracy", sc_identity_accuracy}, {"sc_lip_r2", sc_lip_r2},
                   {"cd_identity_accuracy", cd_identity_accuracy}, {"cd_lip_r2", cd_lip_r2},
                   {"fit_samples", fit_samples}, {"eval_samples", eval_samples}};
  return j.dump(2) + "\n";
}

ProbeReport latent_probes(train::TrainState& st, const data::Dataset& ds, double lambda) {
  const auto ids = ds.identities_in(synth::Split::Test);
  if (ids.empty()) throw PreconditionError("latent_probes: the test split is empty");
  torch::NoGradGuard g;
  st.model->eval();
  const auto rows = torch::tensor(st.model->routing().manipulated_rows(), torch::kLong);
  int last_clip = 0;
  for (const auto ci : ds.clips_in(synth::Split::Test)) last_clip = std::max(last_clip, ds.clip(ci).clip);
  if (last_clip == 0) throw PreconditionError("latent_probes: need at least two clips per test identity");
  std::vector<torch::Tensor> sc[2], cd[2], lip[2], who[2];
  for (const auto ci : ds.clips_in(synth::Split::Test)) {
    const auto& clip = ds.clip(ci);
    const int part = clip.clip == last_clip ? 1 : 0;
    const auto frames = ds.all_frames(ci);
    const auto mels = ds.mel_windows(ci, iota(0, clip.length()));
    const auto z = st.model->visual->forward(frames);
    const auto za = st.model->audio->forward(mels);
    sc[part].push_back(st.model->canonical->forward(z).index_select(1, rows).flatten(1));
    cd[part].push_back(st.model->motion->forward(z, za).index_select(1, rows).flatten(1));
    std::vector<float> lo;
    for (const auto& m : clip.motions) lo.push_back(static_cast<float>(m.lip_open));
    lip[part].push_back(torch::tensor(lo));
    const auto label = std::find(ids.begin(), ids.end(), clip.identity) - ids.begin();
    who[part].push_back(torch::full({clip.length()}, static_cast<std::int64_t>(label), torch::kLong));
  }
  require(!sc[0].empty() && !sc[1].empty(), "latent_probes: empty fit or evaluation set");
  const auto scf = torch::cat(sc[0]), sce = torch::cat(sc[1]), cdf = torch::cat(cd[0]), cde = torch::cat(cd[1]);
  const auto lf = torch::cat(lip[0]), le = torch::cat(lip[1]), wf = torch::cat(who[0]), we = torch::cat(who[1]);
  ProbeReport r;
  r.sc_identity_accuracy = ridge_accuracy(scf, wf, sce, we, lambda);
  r.sc_lip_r2 = ridge_r2(scf, lf, sce, le, lambda);
  r.cd_identity_accuracy = ridge_accuracy(cdf, wf, cde, we, lambda);
  r.cd_lip_r2 = ridge_r2(cdf, lf, cde, le, lambda);
  r.fit_samples = static_cast<int>(scf.size(0));
  r.eval_samples = static_cast<int>(sce.size(0));
  return r;
}

}  // namespace fctf::metrics
