#include "keat/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "keat/errors.hpp"
#include "keat/model.hpp"

namespace keat {

namespace {

constexpr const char* kParamPrefix = "param/";
constexpr const char* kAdamMPrefix = "adam.m/";
constexpr const char* kAdamVPrefix = "adam.v/";
constexpr const char* kRngKey = "rng_state";
constexpr const char* kStepKey = "adam_step";

Tensor round_to_float(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<double>(static_cast<float>(t[i]));
  return out;
}

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void str(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint32_t>::max()) throw FormatError("string too long");
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string take() { return std::move(buf_); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void expect_bytes(const char* p, std::size_t n, const char* what) {
    need(n, what);
    if (std::memcmp(b_.data() + pos_, p, n) != 0) throw FormatError(std::string("bad ") + what);
    pos_ += n;
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  // Guards counts read from the file before they size an allocation.
  void plausible(std::uint64_t count, std::size_t min_bytes_each, const char* what) const {
    if (min_bytes_each && count > remaining() / min_bytes_each) {
      throw FormatError(std::string("truncated checkpoint: ") + what + " count " +
                        std::to_string(count) + " exceeds the remaining data");
    }
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated checkpoint while reading ") + what);
  }
  std::uint64_t le(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  const Tensor* tensor;
};

}  // namespace

Checkpoint Checkpoint::capture(const HyperParams& hp, const Vocab& vocab,
                               std::vector<std::string> classes, std::vector<std::string> concepts,
                               const ParamStore& params, const AdamState& adam,
                               const std::string& rng_state) {
  Checkpoint c;
  c.hp = hp;
  c.vocab = vocab;
  c.classes = std::move(classes);
  c.concepts = std::move(concepts);
  for (const auto& [name, p] : params.entries()) c.params.add(name, round_to_float(p.value));
  apply_regularization_policy(c.params);
  c.adam.step = adam.step;
  for (const auto& [name, t] : adam.m) c.adam.m.emplace(name, round_to_float(t));
  for (const auto& [name, t] : adam.v) c.adam.v.emplace(name, round_to_float(t));
  c.rng_state = rng_state;
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);

  auto meta = ckpt.hp.to_map();
  meta[kRngKey] = ckpt.rng_state;
  meta[kStepKey] = std::to_string(ckpt.adam.step);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }

  w.u32(static_cast<std::uint32_t>(ckpt.vocab.size()));
  for (std::size_t i = 0; i < ckpt.vocab.size(); ++i) {
    w.str(ckpt.vocab.token(i));
    w.u64(ckpt.vocab.count(i));
  }
  w.u32(static_cast<std::uint32_t>(ckpt.classes.size()));
  for (const auto& c : ckpt.classes) w.str(c);
  w.u32(static_cast<std::uint32_t>(ckpt.concepts.size()));
  for (const auto& c : ckpt.concepts) w.str(c);

  std::vector<Entry> entries;
  for (const auto& [name, p] : ckpt.params.entries()) entries.push_back({kParamPrefix + name, &p.value});
  for (const auto& [name, t] : ckpt.adam.m) entries.push_back({kAdamMPrefix + name, &t});
  for (const auto& [name, t] : ckpt.adam.v) entries.push_back({kAdamVPrefix + name, &t});

  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const Entry& e : entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor->rank()));
    for (std::size_t d : e.tensor->shape()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("tensor extent too large");
      w.u32(static_cast<std::uint32_t>(d));
    }
  }
  for (const Entry& e : entries) {
    w.u64(static_cast<std::uint64_t>(e.tensor->numel()) * 4);
    for (double v : e.tensor->data()) w.f32(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect_bytes(kCheckpointMagic, 4, "magic bytes (not a checkpoint file)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint c;
  const std::uint32_t n_meta = r.u32("settings count");
  r.plausible(n_meta, 8, "settings");
  std::map<std::string, std::string> meta;
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str("setting key");
    std::string v = r.str("setting value");
    if (!meta.emplace(std::move(k), std::move(v)).second) throw FormatError("duplicate setting key");
  }
  auto take = [&](const char* key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("checkpoint lacks '") + key + "'");
    std::string v = it->second;
    meta.erase(it);
    return v;
  };
  c.rng_state = take(kRngKey);
  const std::string step = take(kStepKey);
  try {
    std::size_t used = 0;
    c.adam.step = std::stoull(step, &used);
    if (used != step.size()) throw std::invalid_argument(step);
  } catch (const std::exception&) {
    throw FormatError("bad optimizer step '" + step + "'");
  }
  try {
    c.hp = HyperParams::from_map(meta);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad settings in checkpoint: ") + e.what());
  }

  const std::uint32_t n_vocab = r.u32("vocabulary size");
  r.plausible(n_vocab, 12, "vocabulary");
  std::vector<std::pair<std::string, std::uint64_t>> tokens;
  for (std::uint32_t i = 0; i < n_vocab; ++i) {
    std::string t = r.str("vocabulary token");
    tokens.emplace_back(std::move(t), r.u64("vocabulary count"));
  }
  if (tokens.size() < 2 || tokens[0].first != Vocab::kUnkToken || tokens[1].first != Vocab::kPadToken) {
    throw FormatError("checkpoint vocabulary must start with <unk>, <pad>");
  }
  {
    std::string text;
    for (const auto& [t, n] : tokens) {
      if (t.find_first_of("\t\n") != std::string::npos) throw FormatError("bad vocabulary token");
      text += t + "\t" + std::to_string(n) + "\n";
    }
    std::istringstream in(text);
    c.vocab = Vocab::load(in);
  }
  if (c.vocab.size() != tokens.size()) throw FormatError("duplicate vocabulary token in checkpoint");

  const std::uint32_t n_classes = r.u32("class count");
  r.plausible(n_classes, 4, "classes");
  for (std::uint32_t i = 0; i < n_classes; ++i) c.classes.push_back(r.str("class name"));
  const std::uint32_t n_concepts = r.u32("concept count");
  r.plausible(n_concepts, 4, "concepts");
  for (std::uint32_t i = 0; i < n_concepts; ++i) c.concepts.push_back(r.str("concept name"));

  const std::uint32_t n_tensors = r.u32("tensor count");
  r.plausible(n_tensors, 8, "tensors");
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    r.plausible(rank, 4, "tensor extents");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32("tensor extent"));
    manifest.emplace_back(std::move(name), std::move(shape));
  }

  for (const auto& [name, shape] : manifest) {
    const std::uint64_t expected = static_cast<std::uint64_t>(shape_numel(shape)) * 4;
    const std::uint64_t length = r.u64("tensor byte length");
    if (length != expected) {
      throw FormatError("tensor '" + name + "': byte length " + std::to_string(length) +
                        " does not match its manifest shape " + shape_str(shape) + " (" +
                        std::to_string(expected) + " bytes)");
    }
    if (r.remaining() < length) throw FormatError("truncated checkpoint inside tensor '" + name + "'");
    Tensor t(shape);
    for (double& v : t.data()) {
      v = static_cast<double>(r.f32("tensor data"));
      if (!std::isfinite(v)) throw FormatError("tensor '" + name + "' holds a non-finite value");
    }
    auto has_prefix = [&](const char* p) { return name.rfind(p, 0) == 0; };
    auto strip = [&](const char* p) { return name.substr(std::strlen(p)); };
    if (has_prefix(kParamPrefix)) {
      const std::string key = strip(kParamPrefix);
      if (c.params.contains(key)) throw FormatError("duplicate tensor '" + name + "'");
      c.params.add(key, std::move(t));
    } else if (has_prefix(kAdamMPrefix)) {
      if (!c.adam.m.emplace(strip(kAdamMPrefix), std::move(t)).second) throw FormatError("duplicate tensor '" + name + "'");
    } else if (has_prefix(kAdamVPrefix)) {
      if (!c.adam.v.emplace(strip(kAdamVPrefix), std::move(t)).second) throw FormatError("duplicate tensor '" + name + "'");
    } else {
      throw FormatError("unknown tensor '" + name + "'");
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " unexpected trailing bytes in checkpoint");
  }
  for (const auto* moments : {&c.adam.m, &c.adam.v}) {
    for (const auto& [name, t] : *moments) {
      if (!c.params.contains(name) || c.params.value(name).shape() != t.shape()) {
        throw FormatError("optimizer moment '" + name + "' does not match any parameter");
      }
    }
  }
  apply_regularization_policy(c.params);
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw FormatError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace keat
