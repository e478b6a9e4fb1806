#include "factr/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "factr/common/errors.hpp"

namespace factr::model {
namespace {

constexpr char kMagic[8] = {'F', 'A', 'C', 'T', 'R', 'C', 'K', 'P'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) { out_ += s; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size())
      throw IntegrityError("checkpoint truncated at byte " + std::to_string(pos_) + " (wanted " +
                           std::to_string(n) + " more)");
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

template <typename Real>
constexpr DType dtype_of() {
  return sizeof(Real) == 4 ? DType::F32 : DType::F64;
}

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

ModelConfig Checkpoint::model_config() const {
  if (!header.contains("model")) throw IntegrityError("checkpoint header has no model config");
  return ModelConfig::from_json(header.at("model"));
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint<std::uint32_t>(Checkpoint::kVersion);
  const std::string header = ckpt.header.dump();
  w.uint<std::uint64_t>(header.size());
  w.str(header);
  w.uint<std::uint64_t>(ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    if (ad::numel(t.shape) != t.values.size())
      throw IntegrityError("tensor '" + t.name + "' shape does not match its value count");
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.str(t.name);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.uint<std::uint64_t>(d);
    for (double v : t.values) {
      if (t.dtype == DType::F32)
        w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        w.uint<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
    throw IntegrityError("not a checkpoint file (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto hlen = r.uint<std::uint64_t>();
  try {
    ckpt.header = nlohmann::json::parse(r.str(hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const auto count = r.uint<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str(r.uint<std::uint32_t>());
    const auto tag = r.uint<std::uint8_t>();
    if (tag != 1 && tag != 2) throw IntegrityError("tensor '" + t.name + "' has unknown dtype tag " + std::to_string(tag));
    t.dtype = static_cast<DType>(tag);
    const auto ndim = r.uint<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      t.shape.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
      n *= t.shape.back();
    }
    r.need(n * (t.dtype == DType::F32 ? 4 : 8));
    t.values.resize(n);
    for (auto& v : t.values)
      v = t.dtype == DType::F32 ? static_cast<double>(std::bit_cast<float>(r.uint<std::uint32_t>()))
                                : std::bit_cast<double>(r.uint<std::uint64_t>());
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw IntegrityError("trailing bytes after the last checkpoint tensor");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IntegrityError("cannot write checkpoint '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IntegrityError("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return deserialize_checkpoint(buf.str());
}

template <typename Real>
Checkpoint make_checkpoint(const FaCTRModel<Real>& model, const nlohmann::json& meta,
                           const std::vector<std::string>& skip_prefixes) {
  Checkpoint ckpt;
  ckpt.header = {{"model", model.config().to_json()}, {"meta", meta}};
  for (const auto& [name, t] : model.params().entries()) {
    if (has_prefix(name, skip_prefixes)) continue;
    CheckpointTensor ct;
    ct.name = name;
    ct.dtype = dtype_of<Real>();
    ct.shape = t.shape();
    ct.values.assign(t.data().begin(), t.data().end());
    ckpt.tensors.push_back(std::move(ct));
  }
  return ckpt;
}

template <typename Real>
std::vector<std::string> load_into(FaCTRModel<Real>& model, const Checkpoint& ckpt,
                                   const std::vector<std::string>& optional_prefixes) {
  auto& params = model.params();
  std::vector<std::string> loaded;
  for (const auto& t : ckpt.tensors) {
    if (!params.contains(t.name))
      throw IntegrityError("checkpoint tensor '" + t.name + "' has no counterpart in the model");
    auto& dst = params.at(t.name);
    if (dst.shape() != t.shape)
      throw IntegrityError("checkpoint tensor '" + t.name + "' is " + ad::shape_str(t.shape) +
                           ", model expects " + ad::shape_str(dst.shape()));
    auto data = dst.data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<Real>(t.values[i]);
    loaded.push_back(t.name);
  }
  for (const auto& [name, t] : params.entries())
    if (!ckpt.find(name) && !has_prefix(name, optional_prefixes))
      throw IntegrityError("checkpoint is missing tensor '" + name + "'");
  return loaded;
}

template <typename Real>
FaCTRModel<Real> model_from_checkpoint(const Checkpoint& ckpt) {
  FaCTRModel<Real> model(ckpt.model_config());
  load_into(model, ckpt);
  return model;
}

template Checkpoint make_checkpoint(const FaCTRModel<float>&, const nlohmann::json&, const std::vector<std::string>&);
template Checkpoint make_checkpoint(const FaCTRModel<double>&, const nlohmann::json&, const std::vector<std::string>&);
template std::vector<std::string> load_into(FaCTRModel<float>&, const Checkpoint&, const std::vector<std::string>&);
template std::vector<std::string> load_into(FaCTRModel<double>&, const Checkpoint&, const std::vector<std::string>&);
template FaCTRModel<float> model_from_checkpoint(const Checkpoint&);
template FaCTRModel<double> model_from_checkpoint(const Checkpoint&);

}  // namespace factr::model
