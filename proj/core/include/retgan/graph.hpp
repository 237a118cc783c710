#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retgan/tensor.hpp"

namespace retgan {

/// Reverse-mode autodiff over an append-only tape. Forward values are
/// computed eagerly at node creation; backward(loss) walks the tape once in
/// reverse and returns a gradient per trainable parameter (zeros for
/// trainable parameters the loss never reached).
///
/// Parameter and external-constant nodes hold a view of caller-owned
/// tensors; those must outlive the graph and stay unmodified while it is
/// alive. A graph must not be mutated from two threads at once.
class Graph {
 public:
  using NodeId = std::int32_t;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----
  NodeId constant(Tensor value);
  NodeId constant_view(const Tensor& value);
  NodeId param(const std::string& name, const Tensor& value, bool trainable = true);

  // ---- elementwise ----
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);  // log(1 + e^x), computed without overflow
  NodeId log(NodeId a);  // domain error on non-positive input
  NodeId square(NodeId a);
  NodeId abs(NodeId a);
  NodeId scale(NodeId a, double alpha);
  NodeId add_scalar(NodeId a, double alpha);
  NodeId clamp(NodeId a, double lo, double hi);

  // ---- structure ----
  NodeId matmul(NodeId a, NodeId b);
  NodeId add_rowvec(NodeId m, NodeId v);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);
  NodeId detach(NodeId a);

  // ---- reductions ----
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sum_axis(NodeId a, std::size_t axis);
  NodeId mean_axis(NodeId a, std::size_t axis);

  // ---- fused domain ops ----
  /// [B x 3072] rasters -> [B x 48] patch means.
  NodeId patch_pool(NodeId images);
  /// Mean of embedding-table rows per id sequence: table [V x d] -> [B x d].
  NodeId embed_mean(NodeId table, const std::vector<std::vector<std::uint32_t>>& ids);
  /// Per-row vector-matrix product with a per-row flattened weight matrix:
  /// v [B x n], flat [B x n*m] -> [B x m], out[b][j] = sum_i v[b][i] flat[b][i*m+j].
  NodeId hyper_apply(NodeId v, NodeId flat);
  /// All-pairs cosine similarity: [n x d], [m x d] -> [n x m]. Zero rows are
  /// a contract error.
  NodeId cosine_matrix(NodeId a, NodeId b);
  /// Symmetric InfoNCE with diagonal targets over a square similarity
  /// matrix: mean over both softmax directions of -log p(diagonal).
  NodeId info_nce(NodeId sim, double temperature);

  const Tensor& value(NodeId id) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradients of a scalar loss for every trainable parameter.
  std::map<std::string, Tensor> backward(NodeId loss);

 private:
  enum class Op : std::uint8_t {
    kConstant, kParam, kAdd, kSub, kMul, kRelu, kTanh, kSigmoid, kSoftplus, kLog, kSquare,
    kAbs, kScale, kAddScalar, kClamp, kMatmul, kAddRowVec, kConcatCols,
    kReshape, kDetach, kSumAll, kMeanAll, kSumAxis, kMeanAxis, kPatchPool,
    kEmbedMean, kHyperApply, kCosineMatrix, kInfoNce,
  };

  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor owned;             // forward value (empty when `view` is set)
    const Tensor* view = nullptr;
    double alpha = 0.0;       // scale factor / clamp lo / temperature
    double beta = 0.0;        // clamp hi
    std::size_t axis = 0;
    bool needs_grad = false;
    bool trainable = false;
    std::string name;                          // parameters only
    std::vector<std::uint32_t> ids;            // embed_mean: flattened token ids
    std::vector<std::uint32_t> id_offsets;     //   and row offsets (B+1 entries)
    Tensor grad;                               // allocated during backward
  };

  const Tensor& val(NodeId id) const { return nodes_[id].view ? *nodes_[id].view : nodes_[id].owned; }
  NodeId push(Node n);
  NodeId unary(Op op, NodeId a, Tensor value, double alpha = 0.0, double beta = 0.0);
  NodeId binary(Op op, NodeId a, NodeId b, Tensor value);
  Tensor& grad_of(NodeId id);
  void check_id(NodeId id) const;
  void backprop_node(NodeId id);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> param_index_;
};

}  // namespace retgan
