#include "retgan/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "retgan/check.hpp"
#include "retgan/math.hpp"

namespace retgan {

double cosine_similarity(const Tensor& t, const Tensor& v) {
  RETGAN_CHECK(t.size() == v.size() && t.size() > 0,
               "cosine: length mismatch " << t.shape_str() << " vs " << v.shape_str());
  const double nt = num::l2_norm(t.data(), t.size());
  const double nv = num::l2_norm(v.data(), v.size());
  RETGAN_CHECK(nt > 0.0 && nv > 0.0, "cosine: zero vector");
  return num::dot(t.data(), v.data(), t.size()) / (nt * nv);
}

Tensor build_similarity_matrix(const Tensor& text_embeds, const Tensor& image_embeds) {
  RETGAN_CHECK(text_embeds.rank() == 2 && image_embeds.rank() == 2 &&
                   text_embeds.cols() == image_embeds.cols(),
               "similarity: need [N_C x d] and [N_I x d], got " << text_embeds.shape_str()
                                                                << " and "
                                                                << image_embeds.shape_str());
  const std::size_t nc = text_embeds.rows(), ni = image_embeds.rows(), d = text_embeds.cols();
  std::vector<double> nt(nc), nv(ni);
  for (std::size_t i = 0; i < nc; ++i) {
    nt[i] = num::l2_norm(text_embeds.data() + i * d, d);
    RETGAN_CHECK(nt[i] > 0.0, "similarity: zero text embedding at row " << i);
  }
  for (std::size_t j = 0; j < ni; ++j) {
    nv[j] = num::l2_norm(image_embeds.data() + j * d, d);
    RETGAN_CHECK(nv[j] > 0.0, "similarity: zero image embedding at column " << j);
  }
  Tensor sim({nc, ni});
  num::matmul_acc(text_embeds, false, image_embeds, true, 1.0, sim);
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t j = 0; j < ni; ++j) {
      double s = sim[i * ni + j] / (nt[i] * nv[j]);
      sim[i * ni + j] = std::clamp(s, -1.0, 1.0);
    }
  return sim;
}

const std::uint32_t* RetrievalMap::row(std::size_t caption_index) const {
  RETGAN_CHECK(caption_index < n_captions(),
               "retrieval map: caption index " << caption_index << " out of range");
  return indices.data() + caption_index * k;
}

RetrievalMap topk_map(const Tensor& sim, std::size_t k) {
  RETGAN_CHECK(sim.rank() == 2, "topk: similarity matrix must be rank-2");
  const std::size_t nc = sim.rows(), ni = sim.cols();
  RETGAN_CHECK(k > 0 && k <= ni, "topk: K " << k << " out of range for " << ni << " images");
  RetrievalMap map;
  map.k = k;
  map.indices.resize(nc * k);
  std::vector<std::uint32_t> order(ni);
  for (std::size_t row = 0; row < nc; ++row) {
    const double* s = sim.data() + row * ni;
    std::iota(order.begin(), order.end(), 0u);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [s](std::uint32_t a, std::uint32_t b) {
                        if (s[a] != s[b]) return s[a] > s[b];
                        return a < b;
                      });
    std::copy(order.begin(), order.begin() + k, map.indices.begin() + row * k);
  }
  return map;
}

std::uint32_t sample_reference(const RetrievalMap& map, std::size_t caption_index, Rng& rng) {
  return map.row(caption_index)[rng.below(map.k)];
}

namespace {
void write_u32(std::ofstream& f, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(buf, 4);
}

std::uint32_t read_u32(std::ifstream& f, const std::string& path) {
  char buf[4];
  f.read(buf, 4);
  RETGAN_CHECK_RUNTIME(f.gcount() == 4, "retrieval map: truncated file " << path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[i])) << (8 * i);
  return v;
}
}  // namespace

void save_retrieval_map(const std::string& path, const RetrievalMap& map) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  RETGAN_CHECK_RUNTIME(f.good(), "retrieval map: cannot open " << path << " for writing");
  f.write("GMAP", 4);
  write_u32(f, 1);
  write_u32(f, static_cast<std::uint32_t>(map.n_captions()));
  write_u32(f, static_cast<std::uint32_t>(map.k));
  for (std::uint32_t idx : map.indices) write_u32(f, idx);
  RETGAN_CHECK_RUNTIME(f.good(), "retrieval map: short write to " << path);
}

RetrievalMap load_retrieval_map(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  RETGAN_CHECK_RUNTIME(f.good(), "retrieval map: cannot open " << path);
  char magic[4];
  f.read(magic, 4);
  RETGAN_CHECK_RUNTIME(f.gcount() == 4 && std::string(magic, 4) == "GMAP",
                       "retrieval map: " << path << " is not a GMAP file");
  const std::uint32_t version = read_u32(f, path);
  RETGAN_CHECK_RUNTIME(version == 1, "retrieval map: unsupported version " << version);
  const std::uint32_t nc = read_u32(f, path);
  const std::uint32_t k = read_u32(f, path);
  RetrievalMap map;
  map.k = k;
  map.indices.resize(std::size_t(nc) * k);
  for (auto& idx : map.indices) idx = read_u32(f, path);
  return map;
}

}  // namespace retgan
