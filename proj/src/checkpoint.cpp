#include "gcnet/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "gcnet/data_io.hpp"

namespace gcnet {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.begin() + long(pos_), b_.begin() + long(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("truncated checkpoint", pos_);
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params) {
  const ModelConfig& c = params.config();
  Writer w;
  w.bytes("GCN1");
  w.u32(kCheckpointVersion);
  w.u32(std::uint32_t(c.features));
  w.u32(std::uint32_t(c.max_disparity));
  w.u32(std::uint32_t(c.height));
  w.u32(std::uint32_t(c.width));
  w.u32(std::uint32_t(c.channels));
  w.u8(std::uint8_t(c.variant));
  w.u8(std::uint8_t(c.loss));
  const auto tensors = params.named_tensors();
  w.u32(std::uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(std::uint32_t(name.size()));
    w.bytes(name);
    w.u32(std::uint32_t(t.rank()));
    for (std::size_t e : t.shape()) w.u32(std::uint32_t(e));
    for (float v : t.values()) w.f32(v);
  }
  return std::move(w.out);
}

ModelParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != "GCN1") throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  ModelConfig c;
  c.features = r.u32();
  c.max_disparity = r.u32();
  c.height = r.u32();
  c.width = r.u32();
  c.channels = r.u32();
  const std::size_t enum_at = r.pos();
  const std::uint8_t variant = r.u8(), loss = r.u8();
  if (variant > 2 || loss > 2) throw FormatError("bad variant or loss code", enum_at);
  c.variant = Variant(variant);
  c.loss = LossKind(loss);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid stored config: ") + e.what(), 8);
  }
  ModelParams<float> params = ModelParams<float>::zeros(c);
  const std::size_t expected = params.named_tensors().size();
  const std::uint32_t count = r.u32();
  if (count != expected)
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config needs " +
                          std::to_string(expected),
                      r.pos() - 4);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("bad rank for '" + name + "'", at);
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    std::vector<float> data(shape_size(shape));
    for (auto& v : data) v = r.f32();
    try {
      params.assign(name, Tensor<float>(shape, std::move(data)));
    } catch (const std::exception& e) {
      throw FormatError(e.what(), at);
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());
  return params;
}

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace gcnet
