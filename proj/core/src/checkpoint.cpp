#include "retgan/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "retgan/check.hpp"

namespace retgan {

namespace {
constexpr char kMagic[4] = {'N', 'T', 'C', 'K'};
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeU32 = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64_le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(buf_[pos_]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf_[pos_ + 1])) << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    RETGAN_CHECK_RUNTIME(pos_ + n <= buf_.size(),
                         "checkpoint: truncated file " << path_ << " at offset " << pos_);
  }
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};
}  // namespace

void TensorStore::put(const std::string& name, Tensor t) {
  RETGAN_CHECK(!u32s_.count(name), "checkpoint: '" << name << "' already stored as u32");
  tensors_[name] = std::move(t);
}

void TensorStore::put_u32(const std::string& name, std::vector<std::uint32_t> values) {
  RETGAN_CHECK(!tensors_.count(name), "checkpoint: '" << name << "' already stored as f64");
  u32s_[name] = std::move(values);
}

void TensorStore::put_text(const std::string& name, const std::string& text) {
  std::vector<std::uint32_t> v(text.size());
  for (std::size_t i = 0; i < text.size(); ++i)
    v[i] = static_cast<std::uint8_t>(text[i]);
  put_u32(name, std::move(v));
}

const Tensor& TensorStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  RETGAN_CHECK_RUNTIME(it != tensors_.end(), "checkpoint: missing tensor '" << name << "'");
  return it->second;
}

const std::vector<std::uint32_t>& TensorStore::get_u32(const std::string& name) const {
  auto it = u32s_.find(name);
  RETGAN_CHECK_RUNTIME(it != u32s_.end(), "checkpoint: missing u32 entry '" << name << "'");
  return it->second;
}

std::uint32_t TensorStore::get_scalar_u32(const std::string& name) const {
  const auto& v = get_u32(name);
  RETGAN_CHECK_RUNTIME(v.size() == 1, "checkpoint: '" << name << "' is not a scalar");
  return v[0];
}

std::string TensorStore::get_text(const std::string& name) const {
  const auto& v = get_u32(name);
  std::string s;
  s.reserve(v.size());
  for (std::uint32_t c : v) s.push_back(static_cast<char>(c));
  return s;
}

bool TensorStore::has(const std::string& name) const { return tensors_.count(name) > 0; }
bool TensorStore::has_u32(const std::string& name) const { return u32s_.count(name) > 0; }

std::vector<std::string> TensorStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : tensors_) out.push_back(name);
  for (const auto& [name, _] : u32s_) out.push_back(name);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> TensorStore::names_under(const std::string& prefix) const {
  const std::string p = prefix + "/";
  std::vector<std::string> out;
  for (const std::string& name : names())
    if (name.rfind(p, 0) == 0) out.push_back(name.substr(p.size()));
  return out;
}

void TensorStore::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32_le(out, kVersion);
  const std::vector<std::string> all = names();
  put_u32_le(out, static_cast<std::uint32_t>(all.size()));
  for (const std::string& name : all) {
    RETGAN_CHECK(name.size() <= 0xffff, "checkpoint: name too long: " << name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    auto tit = tensors_.find(name);
    if (tit != tensors_.end()) {
      const Tensor& t = tit->second;
      out.push_back(static_cast<char>(kDtypeF64));
      out.push_back(static_cast<char>(t.rank()));
      for (std::size_t d : t.shape()) put_u32_le(out, static_cast<std::uint32_t>(d));
      for (std::size_t i = 0; i < t.size(); ++i) put_f64_le(out, t[i]);
    } else {
      const auto& v = u32s_.at(name);
      out.push_back(static_cast<char>(kDtypeU32));
      out.push_back(1);
      put_u32_le(out, static_cast<std::uint32_t>(v.size()));
      for (std::uint32_t x : v) put_u32_le(out, x);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  RETGAN_CHECK_RUNTIME(f.good(), "checkpoint: cannot open " << path << " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  RETGAN_CHECK_RUNTIME(f.good(), "checkpoint: short write to " << path);
}

TensorStore TensorStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  RETGAN_CHECK_RUNTIME(f.good(), "checkpoint: cannot open " << path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(buf, path);
  RETGAN_CHECK_RUNTIME(r.bytes(4) == std::string(kMagic, 4),
                       "checkpoint: " << path << " is not an NTCK container");
  const std::uint32_t version = r.u32();
  RETGAN_CHECK_RUNTIME(version == kVersion,
                       "checkpoint: unsupported version " << version << " in " << path);
  const std::uint32_t count = r.u32();
  TensorStore store;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    const std::uint8_t dtype = r.u8();
    const std::uint8_t rank = r.u8();
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape[d] = r.u32();
      total *= shape[d];
    }
    if (dtype == kDtypeF64) {
      std::vector<double> data(total);
      for (std::size_t i = 0; i < total; ++i) data[i] = r.f64();
      store.put(name, Tensor(std::move(shape), std::move(data)));
    } else if (dtype == kDtypeU32) {
      std::vector<std::uint32_t> data(total);
      for (std::size_t i = 0; i < total; ++i) data[i] = r.u32();
      store.put_u32(name, std::move(data));
    } else {
      RETGAN_CHECK_RUNTIME(false, "checkpoint: unknown dtype " << int(dtype) << " for entry '"
                                      << name << "' in " << path);
    }
  }
  RETGAN_CHECK_RUNTIME(r.done(), "checkpoint: trailing bytes in " << path);
  return store;
}

void load_into(const TensorStore& s, const std::map<std::string, Tensor*>& dst) {
  for (auto& [name, t] : dst) {
    const Tensor& stored = s.get(name);
    RETGAN_CHECK_RUNTIME(stored.same_shape(*t), "checkpoint: tensor '"
                                                    << name << "' has shape "
                                                    << stored.shape_str() << ", expected "
                                                    << t->shape_str());
    *t = stored;
  }
}

}  // namespace retgan
