#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "hybridnet/config_json.hpp"
#include "hybridnet/errors.hpp"
#include "hybridnet/trainer.hpp"

namespace hybridnet {
namespace {

constexpr char kMagic[4] = {'H', 'Y', 'B', 'N'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(Bytes& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::size_t pos() const { return pos_; }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T get(const char* what) {
    auto s = take(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(s[i]) << (8 * i));
    return v;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

bool same_architecture(ModelConfig a, ModelConfig b) {
  a.seed = 0;
  b.seed = 0;
  return a == b;
}

}  // namespace

Checkpoint make_checkpoint(const HybridNet& model, std::uint64_t iteration, Stage stage) {
  Checkpoint c;
  c.config = model.config();
  c.iteration = iteration;
  c.stage = stage;
  for (const auto& p : model.parameters()) c.tensors.push_back({p.name, p.value});
  return c;
}

void load_parameters(HybridNet& model, const Checkpoint& ckpt) {
  std::set<std::string> seen;
  for (const auto& t : ckpt.tensors) {
    if (!seen.insert(t.name).second) throw CheckpointError("checkpoint lists '" + t.name + "' twice");
    Parameter& p = model.parameter(t.name);
    if (p.value.dims() != t.value.dims()) {
      throw CheckpointError("checkpoint tensor '" + t.name + "' has dims " + shape_to_string(t.value.dims()) +
                            ", model expects " + shape_to_string(p.value.dims()));
    }
  }
  if (seen.size() != model.parameters().size()) {
    for (const auto& p : model.parameters()) {
      if (!seen.contains(p.name)) throw CheckpointError("checkpoint is missing '" + p.name + "'");
    }
  }
  for (const auto& t : ckpt.tensors) {
    Parameter& p = model.parameter(t.name);
    p.value = t.value;
    p.grad = Tensor(p.value.dims());
  }
}

HybridNet model_from_checkpoint(const Checkpoint& ckpt) {
  HybridNet model(ckpt.config);
  load_parameters(model, ckpt);
  return model;
}

Bytes serialize_checkpoint(const Checkpoint& ckpt) {
  Bytes out(std::begin(kMagic), std::end(kMagic));
  put<std::uint16_t>(out, ckpt.format_version);
  const Json meta{{"model", to_json(ckpt.config)},
                  {"iteration", ckpt.iteration},
                  {"stage", std::string(stage_name(ckpt.stage))}};
  const std::string text = meta.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xFFFF) throw CheckpointError("parameter name too long: " + t.name);
    if (t.value.rank() > 0xFF) throw CheckpointError("tensor rank too large: " + t.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.dims()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.value.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Cursor cur(bytes);
  auto magic = cur.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)", 0);

  Checkpoint c;
  const std::size_t version_at = cur.pos();
  c.format_version = cur.get<std::uint16_t>("version");
  if (c.format_version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(c.format_version), version_at);
  }

  const auto meta_len = cur.get<std::uint32_t>("config length");
  const std::size_t meta_at = cur.pos();
  auto meta_bytes = cur.take(meta_len, "config block");
  try {
    const Json meta = Json::parse(meta_bytes.begin(), meta_bytes.end());
    reject_unknown_keys(meta, {"model", "iteration", "stage"}, "checkpoint config");
    from_json(meta.at("model"), c.config);
    c.config.validate();
    c.iteration = meta.at("iteration").get<std::uint64_t>();
    c.stage = parse_stage(meta.at("stage").get<std::string>());
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid checkpoint config block: ") + e.what(), meta_at);
  }

  const auto count = cur.get<std::uint32_t>("entry count");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name_len = cur.get<std::uint16_t>("name length");
    auto name = cur.take(name_len, "name");
    t.name.assign(name.begin(), name.end());
    const auto rank = cur.get<std::uint8_t>("rank");
    Shape dims(rank);
    for (auto& d : dims) d = cur.get<std::uint32_t>("dims");
    const std::size_t n = shape_numel(dims);
    if (n > (bytes.size() - cur.pos()) / 8) {
      throw FormatError("checkpoint truncated in tensor '" + t.name + "'", cur.pos());
    }
    std::vector<double> data(n);
    for (auto& v : data) {
      const std::size_t at = cur.pos();
      v = std::bit_cast<double>(cur.get<std::uint64_t>("tensor data"));
      if (!std::isfinite(v)) throw FormatError("non-finite value in tensor '" + t.name + "'", at);
    }
    t.value = Tensor(std::move(dims), std::move(data));
    c.tensors.push_back(std::move(t));
  }
  if (!cur.at_end()) throw FormatError("trailing bytes after checkpoint", cur.pos());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

Checkpoint merge_checkpoints(const Checkpoint& depth_ckpt, const Checkpoint& seg_ckpt) {
  if (!same_architecture(depth_ckpt.config, seg_ckpt.config)) {
    throw CheckpointError("merge: checkpoints were built for different model configurations");
  }
  if (depth_ckpt.tensors.size() != seg_ckpt.tensors.size()) throw CheckpointError("merge: parameter sets differ");
  std::unordered_map<std::string, const NamedTensor*> seg_by_name;
  for (const auto& t : seg_ckpt.tensors) seg_by_name[t.name] = &t;

  Checkpoint out;
  out.config = seg_ckpt.config;
  out.iteration = 0;
  out.stage = Stage::hybrid;
  for (const auto& t : depth_ckpt.tensors) {
    auto it = seg_by_name.find(t.name);
    if (it == seg_by_name.end()) throw CheckpointError("merge: '" + t.name + "' missing from segmentation checkpoint");
    if (it->second->value.dims() != t.value.dims()) throw CheckpointError("merge: '" + t.name + "' dims differ");
    const Block b = block_of(t.name);
    const bool from_depth = b == Block::global_depth || b == Block::refine_depth;
    out.tensors.push_back(from_depth ? t : *it->second);
  }
  return out;
}

}  // namespace hybridnet
