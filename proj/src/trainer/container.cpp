#include "fctf/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fctf/error.hpp"
#include "fctf/prng.hpp"

namespace fctf::ckpt {
namespace {

constexpr char kMagic[4] = {'F', 'C', 'T', 'F'};

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    default: throw InvalidArgument(std::string("container: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_code(std::uint8_t c) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    default: throw IoError("container: unknown dtype code " + std::to_string(c));
  }
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw IoError("container: truncated data");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += sizeof(T);
    return static_cast<T>(v);
  }
};

}  // namespace

void TensorArchive::put(const std::string& name, const torch::Tensor& t) {
  entries_[name] = t.detach().to(torch::kCPU).contiguous().clone();
}

void TensorArchive::put_string(const std::string& name, const std::string& value) {
  auto t = torch::empty({static_cast<std::int64_t>(value.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr(), value.data(), value.size());
  entries_[name] = t;
}

void TensorArchive::put_int(const std::string& name, std::int64_t value) {
  entries_[name] = torch::tensor({value}, torch::kInt64);
}

const torch::Tensor& TensorArchive::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw PreconditionError("checkpoint is missing tensor '" + name + "'");
  return it->second;
}

std::string TensorArchive::get_string(const std::string& name) const {
  const auto& t = get(name);
  if (t.scalar_type() != torch::kUInt8) throw PreconditionError("checkpoint entry '" + name + "' is not a string");
  return {reinterpret_cast<const char*>(t.data_ptr()), static_cast<std::size_t>(t.numel())};
}

std::int64_t TensorArchive::get_int(const std::string& name) const {
  const auto& t = get(name);
  if (t.scalar_type() != torch::kInt64 || t.numel() != 1) throw PreconditionError("checkpoint entry '" + name + "' is not an integer");
  return t.item<std::int64_t>();
}

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::vector<std::string> TensorArchive::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it)
    out.push_back(it->first);
  return out;
}

std::vector<std::uint8_t> TensorArchive::to_bytes() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(dtype_code(t.scalar_type()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (const auto d : t.sizes()) put_le<std::int64_t>(out, d);
    const auto nbytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
    put_le<std::uint64_t>(out, offset);
    put_le<std::uint64_t>(out, nbytes);
    offset += nbytes;
  }
  // Payloads are raw host bytes; every supported host is little-endian.
  static_assert(std::endian::native == std::endian::little);
  for (const auto& [name, t] : entries_) {
    const auto* p = static_cast<const std::uint8_t*>(t.data_ptr());
    out.insert(out.end(), p, p + t.numel() * t.element_size());
  }
  return out;
}

TensorArchive TensorArchive::from_bytes(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("container: bad magic, not an FCTF file");
  r.pos = 4;
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) throw IoError("container: unsupported format version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  struct Entry {
    std::string name;
    torch::ScalarType dtype;
    std::vector<std::int64_t> shape;
    std::uint64_t offset, nbytes;
  };
  std::vector<Entry> index;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = r.get<std::uint32_t>();
    r.need(len);
    e.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), len);
    r.pos += len;
    e.dtype = dtype_from_code(r.get<std::uint8_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::int64_t>());
    e.offset = r.get<std::uint64_t>();
    e.nbytes = r.get<std::uint64_t>();
    index.push_back(std::move(e));
  }
  const std::size_t base = r.pos;
  TensorArchive ar;
  for (const auto& e : index) {
    if (base + e.offset + e.nbytes > bytes.size()) throw IoError("container: payload of '" + e.name + "' is truncated");
    auto t = torch::empty(e.shape, e.dtype);
    if (static_cast<std::uint64_t>(t.numel()) * t.element_size() != e.nbytes)
      throw IoError("container: size mismatch for '" + e.name + "'");
    std::memcpy(t.data_ptr(), bytes.data() + base + e.offset, e.nbytes);
    ar.entries_[e.name] = t;
  }
  return ar;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path.string() + ": " + ec.message());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return from_bytes(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void put_module(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters(true)) ar.put(prefix + "/" + p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) ar.put(prefix + "/" + b.key(), b.value());
}

void get_module(const TensorArchive& ar, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard guard;
  auto copy = [&](const std::string& key, torch::Tensor& dst) {
    const auto& src = ar.get(prefix + "/" + key);
    if (!src.sizes().equals(dst.sizes()))
      throw PreconditionError("checkpoint tensor '" + prefix + "/" + key + "' has shape " + c10::str(src.sizes()) +
                              ", model expects " + c10::str(dst.sizes()) + " (config mismatch?)");
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters(true)) copy(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) copy(b.key(), b.value());
  const auto stored = ar.names_with_prefix(prefix + "/");
  const auto expected = module.named_parameters(true).size() + module.named_buffers(true).size();
  if (stored.size() != expected)
    throw PreconditionError("checkpoint group '" + prefix + "' holds " + std::to_string(stored.size()) +
                            " tensors, model expects " + std::to_string(expected) + " (config mismatch?)");
}

void put_adam(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module, torch::optim::Adam& opt) {
  auto& state = opt.state();
  for (const auto& p : module.named_parameters(true)) {
    const auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    ar.put(prefix + "/" + p.key() + "/exp_avg", s.exp_avg());
    ar.put(prefix + "/" + p.key() + "/exp_avg_sq", s.exp_avg_sq());
    ar.put_int(prefix + "/" + p.key() + "/step", s.step());
  }
}

void get_adam(const TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module, torch::optim::Adam& opt) {
  auto& state = opt.state();
  state.clear();
  for (const auto& p : module.named_parameters(true)) {
    const std::string base = prefix + "/" + p.key();
    if (!ar.has(base + "/step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(ar.get_int(base + "/step"));
    s->exp_avg(ar.get(base + "/exp_avg").clone());
    s->exp_avg_sq(ar.get(base + "/exp_avg_sq").clone());
    if (!s->exp_avg().sizes().equals(p.value().sizes()))
      throw PreconditionError("optimizer state '" + base + "' does not match the model (config mismatch?)");
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

std::uint64_t checksum(const TensorArchive& ar) {
  const auto bytes = ar.to_bytes();
  Fnv1a64 h;
  h.update(bytes.data(), bytes.size());
  return h.digest();
}

}  // namespace fctf::ckpt
