#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retgan/tensor.hpp"

namespace retgan {

/// Named-tensor container behind every on-disk checkpoint. Holds f64
/// tensors and u32 arrays side by side; save() writes entries sorted by
/// name in the NTCK layout: magic "NTCK", version u32, entry count u32,
/// then per entry name length u16 + name bytes, dtype u8 (0 = f64,
/// 1 = u32), rank u8, dims u32 each, payload. All fields little-endian.
class TensorStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, Tensor t);
  void put_u32(const std::string& name, std::vector<std::uint32_t> values);
  void put_scalar_u32(const std::string& name, std::uint32_t v) { put_u32(name, {v}); }
  /// Text payload stored as one u32 per byte.
  void put_text(const std::string& name, const std::string& text);

  const Tensor& get(const std::string& name) const;
  const std::vector<std::uint32_t>& get_u32(const std::string& name) const;
  std::uint32_t get_scalar_u32(const std::string& name) const;
  std::string get_text(const std::string& name) const;

  bool has(const std::string& name) const;
  bool has_u32(const std::string& name) const;
  std::vector<std::string> names() const;
  /// Names under "prefix/" with the prefix stripped.
  std::vector<std::string> names_under(const std::string& prefix) const;

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  void save(const std::string& path) const;
  static TensorStore load(const std::string& path);

 private:
  std::map<std::string, Tensor> tensors_;
  std::map<std::string, std::vector<std::uint32_t>> u32s_;
};

/// Copies each named entry into the destination tensor; a missing name or
/// shape mismatch is an error.
void load_into(const TensorStore& s, const std::map<std::string, Tensor*>& dst);

}  // namespace retgan
