#include "fctf/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "fctf/error.hpp"
#include "fctf/mediaio.hpp"
#include "fctf/prng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fctf::synth {
namespace {

constexpr std::uint64_t kTagCorpusIdentity = 0x1D0;
constexpr std::uint64_t kTagClip = 0xC1;
constexpr std::uint64_t kTagSplit = 0x5B;
constexpr const char* kManifestName = "manifest.json";

std::string clip_dir_name(int identity, int clip) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "id%04d/clip%02d", identity, clip);
  return buf;
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", t);
  return buf;
}

json identity_json(const IdentityParams& id) {
  return {{"face_hue", id.face_hue},       {"face_aspect", id.face_aspect}, {"eye_spacing", id.eye_spacing},
          {"mouth_width", id.mouth_width}, {"nose_len", id.nose_len},       {"skin_texture_seed", id.skin_texture_seed}};
}

IdentityParams identity_from_json(const json& j) {
  IdentityParams id;
  id.face_hue = j.at("face_hue").get<double>();
  id.face_aspect = j.at("face_aspect").get<double>();
  id.eye_spacing = j.at("eye_spacing").get<double>();
  id.mouth_width = j.at("mouth_width").get<double>();
  id.nose_len = j.at("nose_len").get<double>();
  id.skin_texture_seed = j.at("skin_texture_seed").get<std::uint64_t>();
  return id;
}

json motions_json(const std::vector<MotionParams>& ms) {
  json j = json::object();
  auto column = [&](const char* name, double MotionParams::*field) {
    json arr = json::array();
    for (const auto& m : ms) arr.push_back(m.*field);
    j[name] = std::move(arr);
  };
  column("yaw", &MotionParams::yaw);
  column("pitch", &MotionParams::pitch);
  column("lip_open", &MotionParams::lip_open);
  column("blink", &MotionParams::blink);
  column("gaze_x", &MotionParams::gaze_x);
  column("gaze_y", &MotionParams::gaze_y);
  column("brow_raise", &MotionParams::brow_raise);
  return j;
}

std::vector<MotionParams> motions_from_json(const json& j) {
  const std::size_t n = j.at("yaw").size();
  std::vector<MotionParams> ms(n);
  auto column = [&](const char* name, double MotionParams::*field) {
    const auto& arr = j.at(name);
    if (arr.size() != n) throw IoError(std::string("factor column length mismatch: ") + name);
    for (std::size_t i = 0; i < n; ++i) ms[i].*field = arr[i].get<double>();
  };
  column("yaw", &MotionParams::yaw);
  column("pitch", &MotionParams::pitch);
  column("lip_open", &MotionParams::lip_open);
  column("blink", &MotionParams::blink);
  column("gaze_x", &MotionParams::gaze_x);
  column("gaze_y", &MotionParams::gaze_y);
  column("brow_raise", &MotionParams::brow_raise);
  return ms;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

CorpusManifest make_manifest(const CorpusSpec& spec, const fs::path& out_dir) {
  CorpusManifest m;
  m.root = fs::absolute(out_dir).lexically_normal().string();
  m.spec = spec;
  m.identity_split = assign_splits(spec.corpus_seed, spec.identities);
  for (int i = 0; i < spec.identities; ++i)
    for (int c = 0; c < spec.clips_per_identity; ++c)
      m.clips.push_back({i, c, m.identity_split[static_cast<std::size_t>(i)], clip_dir_name(i, c)});
  return m;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InvalidArgument("unknown split: " + s);
}

std::vector<int> CorpusManifest::identities_in(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < identity_split.size(); ++i)
    if (identity_split[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<ClipRef> CorpusManifest::clips_in(Split s) const {
  std::vector<ClipRef> out;
  for (const auto& c : clips)
    if (c.split == s) out.push_back(c);
  return out;
}

std::string CorpusManifest::to_json() const {
  json j;
  j["format"] = "fctf-corpus";
  j["version"] = 1;
  j["root"] = root;
  j["corpus_seed"] = spec.corpus_seed;
  j["identities"] = spec.identities;
  j["clips_per_identity"] = spec.clips_per_identity;
  j["frames_per_clip"] = spec.frames_per_clip;
  j["fps"] = kFps;
  j["sample_rate"] = kSampleRate;
  j["image_size"] = kImageSize;
  json splits = json::array();
  for (const Split s : identity_split) splits.push_back(fctf::synth::to_string(s));
  j["identity_split"] = std::move(splits);
  json clips_j = json::array();
  for (const auto& c : clips)
    clips_j.push_back({{"identity", c.identity}, {"clip", c.clip}, {"split", fctf::synth::to_string(c.split)}, {"dir", c.dir}});
  j["clips"] = std::move(clips_j);
  return j.dump(2) + "\n";
}

CorpusManifest CorpusManifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "fctf-corpus") throw IoError("manifest: wrong format tag");
    CorpusManifest m;
    m.root = j.at("root").get<std::string>();
    m.spec.corpus_seed = j.at("corpus_seed").get<std::uint64_t>();
    m.spec.identities = j.at("identities").get<int>();
    m.spec.clips_per_identity = j.at("clips_per_identity").get<int>();
    m.spec.frames_per_clip = j.at("frames_per_clip").get<int>();
    for (const auto& s : j.at("identity_split")) m.identity_split.push_back(split_from_string(s.get<std::string>()));
    for (const auto& c : j.at("clips"))
      m.clips.push_back({c.at("identity").get<int>(), c.at("clip").get<int>(),
                         split_from_string(c.at("split").get<std::string>()), c.at("dir").get<std::string>()});
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest parse error: ") + e.what());
  }
}

std::uint64_t CorpusManifest::hash() const {
  const std::string text = to_json();
  Fnv1a64 h;
  h.update(text.data(), text.size());
  return h.digest();
}

std::uint64_t identity_seed(std::uint64_t corpus_seed, int index) {
  return RandomStream(corpus_seed).child(kTagCorpusIdentity).child(static_cast<std::uint64_t>(index)).key();
}

std::uint64_t clip_seed(std::uint64_t corpus_seed, int identity_index, int clip_index) {
  return RandomStream(identity_seed(corpus_seed, identity_index))
      .child(kTagClip)
      .child(static_cast<std::uint64_t>(clip_index))
      .key();
}

std::vector<Split> assign_splits(std::uint64_t corpus_seed, int identities) {
  require(identities >= 1, "corpus needs at least one identity");
  std::vector<int> order(static_cast<std::size_t>(identities));
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng = RandomStream(corpus_seed).child(kTagSplit);
  for (int i = identities - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  const int n_val = identities / 10;
  const int n_test = identities / 10;
  const int n_train = identities - n_val - n_test;
  std::vector<Split> out(static_cast<std::size_t>(identities));
  for (int r = 0; r < identities; ++r) {
    const Split s = r < n_train ? Split::Train : (r < n_train + n_val ? Split::Val : Split::Test);
    out[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = s;
  }
  return out;
}

ClipSample make_clip(const CorpusSpec& spec, int identity_index, int clip_index, Split split) {
  ClipSample clip;
  clip.identity_index = identity_index;
  clip.clip_index = clip_index;
  clip.split = split;
  clip.identity = sample_identity(identity_seed(spec.corpus_seed, identity_index));
  clip.motions = sample_motion_sequence(clip_seed(spec.corpus_seed, identity_index, clip_index), spec.frames_per_clip);
  clip.frames.reserve(clip.motions.size());
  for (std::size_t t = 0; t < clip.motions.size(); ++t) {
    clip.frames.push_back(render_face(clip.identity, clip.motions[t]));
    clip.frames.back().frame_index = static_cast<int>(t);
  }
  clip.waveform = synth_audio(clip.motions, clip.identity);
  return clip;
}

CorpusManifest build_corpus(const CorpusSpec& spec, const fs::path& out_dir, bool force) {
  require(spec.identities >= 1 && spec.clips_per_identity >= 1 && spec.frames_per_clip >= 1,
          "corpus counts must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const CorpusManifest manifest = make_manifest(spec, out_dir);
  const fs::path manifest_path = out_dir / kManifestName;
  if (fs::exists(manifest_path)) {
    CorpusManifest existing = CorpusManifest::from_json(read_text(manifest_path));
    const std::string old_root = existing.root;
    existing.root = manifest.root;
    if (existing == manifest) {
      // A moved corpus is still valid; record where it lives now.
      if (old_root != manifest.root) write_text(manifest_path, manifest.to_json());
      return manifest;
    }
    if (!force)
      throw PreconditionError("corpus at " + out_dir.string() +
                              " was built with a different spec; pass --force to overwrite");
    for (const auto& c : existing.clips) fs::remove_all(out_dir / c.dir, ec);
    fs::remove(manifest_path, ec);
  }

  for (const auto& ref : manifest.clips) {
    const ClipSample clip = make_clip(spec, ref.identity, ref.clip, ref.split);
    const fs::path dir = out_dir / ref.dir;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t t = 0; t < clip.frames.size(); ++t) io::write_png(dir / frame_name(static_cast<int>(t)), clip.frames[t]);
    io::write_wav(dir / "audio.wav", clip.waveform, kSampleRate);
    const json factors = {{"identity", identity_json(clip.identity)},
                          {"identity_index", ref.identity},
                          {"clip_index", ref.clip},
                          {"motions", motions_json(clip.motions)}};
    write_text(dir / "factors.json", factors.dump(1) + "\n");
  }
  // Manifest goes last so a partially written corpus is never mistaken for a complete one.
  write_text(manifest_path, manifest.to_json());
  return manifest;
}

CorpusManifest load_manifest(const fs::path& corpus_dir) {
  const fs::path p = corpus_dir / kManifestName;
  if (!fs::exists(p)) throw PreconditionError("no corpus manifest at " + p.string());
  return CorpusManifest::from_json(read_text(p));
}

ClipSample load_clip(const fs::path& corpus_dir, const CorpusManifest& manifest, const ClipRef& ref) {
  const fs::path dir = corpus_dir / ref.dir;
  ClipSample clip;
  clip.identity_index = ref.identity;
  clip.clip_index = ref.clip;
  clip.split = ref.split;
  json factors;
  try {
    factors = json::parse(read_text(dir / "factors.json"));
    clip.identity = identity_from_json(factors.at("identity"));
    clip.motions = motions_from_json(factors.at("motions"));
  } catch (const json::exception& e) {
    throw IoError("bad factors file in " + dir.string() + ": " + e.what());
  }
  const int frames = manifest.spec.frames_per_clip;
  clip.frames.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    clip.frames.push_back(io::read_png(dir / frame_name(t)));
    clip.frames.back().frame_index = t;
  }
  clip.waveform = io::read_wav(dir / "audio.wav").samples;
  return clip;
}

}  // namespace fctf::synth
