#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retgan/rng.hpp"
#include "retgan/tensor.hpp"

namespace retgan {

// Offline cross-modal search: all-pairs cosine scores between caption and
// image embeddings, reduced to a per-caption top-K index map that training
// and inference sample references from.

/// dot(t,v) / (|t||v|); zero vectors are a contract error.
double cosine_similarity(const Tensor& t, const Tensor& v);

/// [N_C x d] texts, [N_I x d] images -> [N_C x N_I] cosine scores.
Tensor build_similarity_matrix(const Tensor& text_embeds, const Tensor& image_embeds);

struct RetrievalMap {
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // n_captions x k row-major, descending score

  std::size_t n_captions() const { return k == 0 ? 0 : indices.size() / k; }
  const std::uint32_t* row(std::size_t caption_index) const;
};

/// Per caption, indices of the K highest scores, descending; ties broken by
/// the smaller image index.
RetrievalMap topk_map(const Tensor& sim, std::size_t k);

/// Uniform draw from a caption's top-K row.
std::uint32_t sample_reference(const RetrievalMap& map, std::size_t caption_index, Rng& rng);

// Map file: magic "GMAP", version u32, N_C u32, K u32, then N_C*K u32
// indices row-major, little-endian.
void save_retrieval_map(const std::string& path, const RetrievalMap& map);
RetrievalMap load_retrieval_map(const std::string& path);

}  // namespace retgan
