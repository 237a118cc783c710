#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "retgan/corpus.hpp"
#include "retgan/graph.hpp"
#include "retgan/rng.hpp"
#include "retgan/tensor.hpp"

namespace retgan {

// Two-tower image/text encoders pretrained with a symmetric contrastive
// objective, then frozen. They define the shared 256-dim space used by
// retrieval, the guidance loss, and the eval metrics.

constexpr std::size_t kEmbedDim = 256;
constexpr std::size_t kTokenDim = 64;

struct ImageEncoderParams {
  explicit ImageEncoderParams(std::size_t hidden = 128);
  Tensor w1, b1, w2, b2, w3, b3;  // 48 -> hidden -> hidden -> 256

  void init(Rng& rng, double stddev = 0.02);
  std::map<std::string, Tensor*> named(const std::string& prefix);
  std::map<std::string, const Tensor*> named(const std::string& prefix) const;
};

struct TextEncoderParams {
  explicit TextEncoderParams(std::size_t hidden = 128);
  Tensor embed;                   // vocab x 64, mean-pooled over tokens
  Tensor w1, b1, w2, b2;          // 64 -> hidden -> 256

  void init(Rng& rng, double stddev = 0.02);
  std::map<std::string, Tensor*> named(const std::string& prefix);
  std::map<std::string, const Tensor*> named(const std::string& prefix) const;
};

// Graph builders shared by eager encoding and every training loss that
// needs gradients through (or into) the encoders.
Graph::NodeId image_encoder_graph(Graph& g, const ImageEncoderParams& p, Graph::NodeId images,
                                  const std::string& prefix, bool trainable);
Graph::NodeId text_encoder_graph(Graph& g, const TextEncoderParams& p,
                                 const std::vector<std::vector<std::uint32_t>>& token_batch,
                                 const std::string& prefix, bool trainable);

/// [B x 3072] rasters -> [B x 256].
Tensor encode_images(const ImageEncoderParams& p, const Tensor& images);
/// Single raster ([32 x 32 x 3] or flat [3072]) -> [256].
Tensor encode_image(const ImageEncoderParams& p, const Tensor& raster);
Tensor encode_texts(const TextEncoderParams& p,
                    const std::vector<std::vector<std::uint32_t>>& token_batch);
Tensor encode_text(const TextEncoderParams& p, const std::vector<std::uint32_t>& tokens);

struct PretrainConfig {
  std::size_t batch = 32;
  std::size_t steps = 2000;
  double lr = 1e-3;
  double temperature = 0.1;
  std::uint64_t seed = 1;
};

struct PretrainResult {
  std::vector<double> losses;  // one per step
  double recall_at_5 = 0.0;    // on the test split, against ground-truth pairing
};

/// Trains both towers in place on the train split, returns the loss trace
/// and test recall@5. Aborts with a diagnostic if the loss goes non-finite.
PretrainResult pretrain_contrastive(ImageEncoderParams& img, TextEncoderParams& txt,
                                    const Corpus& corpus, const PretrainConfig& cfg,
                                    const std::function<void(std::size_t, double)>& on_step = {});

// Embedding cache: magic "EMBX", version u32, rows u32, dim u32, then
// row-major f64, all little-endian.
void save_embeddings(const std::string& path, const Tensor& rows);
Tensor load_embeddings(const std::string& path);

// Encoder tensors in a checkpoint container, hidden width recovered from
// the stored shapes.
class TensorStore;
ImageEncoderParams load_image_encoder(const TensorStore& s, const std::string& prefix);
TextEncoderParams load_text_encoder(const TensorStore& s, const std::string& prefix);

}  // namespace retgan
