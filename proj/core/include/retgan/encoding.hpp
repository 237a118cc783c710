#pragma once

#include <map>
#include <string>

#include "retgan/graph.hpp"
#include "retgan/rng.hpp"
#include "retgan/tensor.hpp"

namespace retgan {

// Conditional encoding layer: linear maps taking 256-dim encoder features
// to 128-dim conditioning vectors, with the visual map's weights either
// trained directly or predicted per-text by a hypernetwork.

constexpr std::size_t kCondDim = 128;
constexpr std::size_t kHyperHidden = 64;
constexpr std::size_t kHyperFlat = 256 * kCondDim;  // 32768

enum class EncoderMode { kDirect, kHyper };

struct LinearMap {
  Tensor weight{{256, kCondDim}};
  Tensor bias{{kCondDim}};
};

struct HyperNet {
  Tensor w1{{256, kHyperHidden}};
  Tensor b1{{kHyperHidden}};
  Tensor w2{{kHyperHidden, kHyperFlat}};
  Tensor b2{{kHyperFlat}};
};

/// Text map plus one visual pathway. In hyper mode the visual weight matrix
/// is reshaped from the hypernet output and only the 128-dim visual bias is
/// a standalone parameter; with `additive` set the predicted matrix is a
/// delta on top of a trained base weight instead of a full replacement.
struct EncoderBundle {
  EncoderMode mode = EncoderMode::kDirect;
  bool additive = false;
  LinearMap text_map;
  LinearMap visual_map;  // direct mode; in hyper mode only as additive base
  HyperNet hyper;
  Tensor visual_bias{{kCondDim}};

  /// Weights ~ N(0, stddev^2), biases zero; hypernet layer2 further scaled
  /// by 1/sqrt(hidden) so predicted matrices start small.
  void init(Rng& rng, double stddev = 0.02);
  std::map<std::string, Tensor*> named(const std::string& prefix);
  std::map<std::string, const Tensor*> named(const std::string& prefix) const;
};

// ---- eager single-vector ops ----
Tensor encode_text_cond(const EncoderBundle& b, const Tensor& t);                    // [256] -> [128]
Tensor encode_visual_direct(const EncoderBundle& b, const Tensor& v);                // direct mode only
Tensor hyper_predict_weights(const EncoderBundle& b, const Tensor& t);               // [256 x 128]
Tensor encode_visual_hyper(const EncoderBundle& b, const Tensor& v, const Tensor& t);

// ---- batched graph builders ----
Graph::NodeId text_cond_graph(Graph& g, const EncoderBundle& b, Graph::NodeId t,
                              const std::string& prefix, bool trainable);
/// Visual conditioning for whichever pathway the bundle is in; t is the
/// [B x 256] text feature batch (ignored in direct mode).
Graph::NodeId visual_cond_graph(Graph& g, const EncoderBundle& b, Graph::NodeId v,
                                Graph::NodeId t, const std::string& prefix, bool trainable);

}  // namespace retgan
