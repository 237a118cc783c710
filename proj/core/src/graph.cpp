#include "retgan/graph.hpp"

#include <cmath>

#include "retgan/check.hpp"
#include "retgan/math.hpp"

namespace retgan {

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  RETGAN_CHECK(a.same_shape(b) || a.is_scalar() || b.is_scalar(),
               op << ": shape mismatch " << a.shape_str() << " vs " << b.shape_str()
                  << " (only scalar-tensor broadcast is allowed)");
}

// Scalar-tensor broadcast: returns (value at i) for either operand.
inline double pick(const Tensor& t, std::size_t i) { return t.is_scalar() ? t[0] : t[i]; }
}  // namespace

void Graph::check_id(NodeId id) const {
  RETGAN_CHECK(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(),
               "graph: unknown node id " << id);
}

Graph::NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id);
  return val(id);
}

Tensor& Graph::grad_of(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(val(id).shape());
  return n.grad;
}

Graph::NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.owned = std::move(value);
  return push(std::move(n));
}

Graph::NodeId Graph::constant_view(const Tensor& value) {
  Node n;
  n.op = Op::kConstant;
  n.view = &value;
  return push(std::move(n));
}

Graph::NodeId Graph::param(const std::string& name, const Tensor& value, bool trainable) {
  auto it = param_index_.find(name);
  if (it != param_index_.end()) {
    const Node& existing = nodes_[it->second];
    RETGAN_CHECK(existing.view == &value && existing.trainable == trainable,
                 "graph: parameter '" << name << "' re-registered with a different tensor");
    return it->second;
  }
  Node n;
  n.op = Op::kParam;
  n.view = &value;
  n.name = name;
  n.trainable = trainable;
  n.needs_grad = trainable;
  param_index_[name] = static_cast<NodeId>(nodes_.size());
  return push(std::move(n));
}

Graph::NodeId Graph::unary(Op op, NodeId a, Tensor value, double alpha, double beta) {
  check_id(a);
  Node n;
  n.op = op;
  n.inputs = {a};
  n.owned = std::move(value);
  n.alpha = alpha;
  n.beta = beta;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Graph::NodeId Graph::binary(Op op, NodeId a, NodeId b, Tensor value) {
  check_id(a);
  check_id(b);
  Node n;
  n.op = op;
  n.inputs = {a, b};
  n.owned = std::move(value);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  check_same_shape(x, y, "add");
  Tensor out(x.is_scalar() ? y.shape() : x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick(x, i) + pick(y, i);
  return binary(Op::kAdd, a, b, std::move(out));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  check_same_shape(x, y, "sub");
  Tensor out(x.is_scalar() ? y.shape() : x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick(x, i) - pick(y, i);
  return binary(Op::kSub, a, b, std::move(out));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  check_same_shape(x, y, "mul");
  Tensor out(x.is_scalar() ? y.shape() : x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick(x, i) * pick(y, i);
  return binary(Op::kMul, a, b, std::move(out));
}

Graph::NodeId Graph::relu(NodeId a) { return unary(Op::kRelu, a, num::relu(value(a))); }
Graph::NodeId Graph::tanh(NodeId a) { return unary(Op::kTanh, a, num::tanh(value(a))); }
Graph::NodeId Graph::sigmoid(NodeId a) { return unary(Op::kSigmoid, a, num::sigmoid(value(a))); }

Graph::NodeId Graph::softplus(NodeId a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::max(x[i], 0.0) + std::log1p(std::exp(-std::abs(x[i])));
  return unary(Op::kSoftplus, a, std::move(out));
}

Graph::NodeId Graph::log(NodeId a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    RETGAN_CHECK_DOMAIN(x[i] > 0.0, "log of non-positive input " << x[i] << " at index " << i);
    out[i] = std::log(x[i]);
  }
  return unary(Op::kLog, a, std::move(out));
}

Graph::NodeId Graph::square(NodeId a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * x[i];
  return unary(Op::kSquare, a, std::move(out));
}

Graph::NodeId Graph::abs(NodeId a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
  return unary(Op::kAbs, a, std::move(out));
}

Graph::NodeId Graph::scale(NodeId a, double alpha) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i];
  return unary(Op::kScale, a, std::move(out), alpha);
}

Graph::NodeId Graph::add_scalar(NodeId a, double alpha) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + alpha;
  return unary(Op::kAddScalar, a, std::move(out), alpha);
}

Graph::NodeId Graph::clamp(NodeId a, double lo, double hi) {
  RETGAN_CHECK(lo <= hi, "clamp: lo " << lo << " > hi " << hi);
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::min(std::max(x[i], lo), hi);
  return unary(Op::kClamp, a, std::move(out), lo, hi);
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  return binary(Op::kMatmul, a, b, num::matmul(value(a), value(b)));
}

Graph::NodeId Graph::add_rowvec(NodeId m, NodeId v) {
  return binary(Op::kAddRowVec, m, v, num::add_rowvec(value(m), value(v)));
}

Graph::NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  RETGAN_CHECK(!parts.empty(), "concat_cols: no inputs");
  std::size_t rows = 0, cols = 0;
  bool needs = false;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = value(parts[k]);
    RETGAN_CHECK(t.rank() == 2, "concat_cols: input " << k << " is not rank-2: " << t.shape_str());
    if (k == 0) rows = t.rows();
    RETGAN_CHECK(t.rows() == rows, "concat_cols: row mismatch at input " << k << ": "
                                       << t.shape_str() << " vs " << rows << " rows");
    cols += t.cols();
    needs = needs || nodes_[parts[k]].needs_grad;
  }
  Tensor out({rows, cols});
  std::size_t col0 = 0;
  for (NodeId p : parts) {
    const Tensor& t = val(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) out[r * cols + col0 + c] = t[r * t.cols() + c];
    col0 += t.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.inputs = parts;
  n.owned = std::move(out);
  n.needs_grad = needs;
  return push(std::move(n));
}

Graph::NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
  return unary(Op::kReshape, a, value(a).reshaped(std::move(shape)));
}

Graph::NodeId Graph::detach(NodeId a) {
  NodeId id = unary(Op::kDetach, a, value(a));
  nodes_[id].needs_grad = false;
  return id;
}

Graph::NodeId Graph::sum(NodeId a) {
  const Tensor& x = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  return unary(Op::kSumAll, a, Tensor::scalar(s));
}

Graph::NodeId Graph::mean(NodeId a) {
  const Tensor& x = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  return unary(Op::kMeanAll, a, Tensor::scalar(s / static_cast<double>(x.size())));
}

namespace {
// Shared axis-reduction walk: out[outer][inner] aggregates over the extent.
void reduce_axis(const Tensor& x, std::size_t axis, bool take_mean, Tensor& out) {
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t extent = shape[axis];
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += x[(o * extent + e) * inner + i];
  if (take_mean)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<double>(extent);
}

std::vector<std::size_t> drop_axis(const std::vector<std::size_t>& shape, std::size_t axis) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  if (out.empty()) out.push_back(1);
  return out;
}
}  // namespace

Graph::NodeId Graph::sum_axis(NodeId a, std::size_t axis) {
  const Tensor& x = value(a);
  RETGAN_CHECK(axis < x.rank(), "sum_axis: axis " << axis << " out of range for " << x.shape_str());
  Tensor out(drop_axis(x.shape(), axis));
  reduce_axis(x, axis, false, out);
  NodeId id = unary(Op::kSumAxis, a, std::move(out));
  nodes_[id].axis = axis;
  return id;
}

Graph::NodeId Graph::mean_axis(NodeId a, std::size_t axis) {
  const Tensor& x = value(a);
  RETGAN_CHECK(axis < x.rank(), "mean_axis: axis " << axis << " out of range for " << x.shape_str());
  Tensor out(drop_axis(x.shape(), axis));
  reduce_axis(x, axis, true, out);
  NodeId id = unary(Op::kMeanAxis, a, std::move(out));
  nodes_[id].axis = axis;
  return id;
}

Graph::NodeId Graph::patch_pool(NodeId images) {
  return unary(Op::kPatchPool, images, num::patch_pool(value(images)));
}

Graph::NodeId Graph::embed_mean(NodeId table, const std::vector<std::vector<std::uint32_t>>& ids) {
  const Tensor& tab = value(table);
  RETGAN_CHECK(tab.rank() == 2, "embed_mean: table must be rank-2, got " << tab.shape_str());
  RETGAN_CHECK(!ids.empty(), "embed_mean: empty batch");
  const std::size_t dim = tab.cols();
  Tensor out({ids.size(), dim});
  Node n;
  n.op = Op::kEmbedMean;
  n.inputs = {table};
  n.id_offsets.push_back(0);
  for (std::size_t b = 0; b < ids.size(); ++b) {
    RETGAN_CHECK(!ids[b].empty(), "embed_mean: sample " << b << " has no tokens");
    for (std::uint32_t id : ids[b]) {
      RETGAN_CHECK(id < tab.rows(),
                   "embed_mean: token id " << id << " out of vocabulary (" << tab.rows() << ")");
      for (std::size_t c = 0; c < dim; ++c) out[b * dim + c] += tab[id * dim + c];
      n.ids.push_back(id);
    }
    const double inv = 1.0 / static_cast<double>(ids[b].size());
    for (std::size_t c = 0; c < dim; ++c) out[b * dim + c] *= inv;
    n.id_offsets.push_back(static_cast<std::uint32_t>(n.ids.size()));
  }
  n.owned = std::move(out);
  n.needs_grad = nodes_[table].needs_grad;
  return push(std::move(n));
}

Graph::NodeId Graph::hyper_apply(NodeId v, NodeId flat) {
  const Tensor& vv = value(v);
  const Tensor& ff = value(flat);
  RETGAN_CHECK(vv.rank() == 2 && ff.rank() == 2 && vv.rows() == ff.rows(),
               "hyper_apply: need matching batches, got " << vv.shape_str() << " and "
                                                          << ff.shape_str());
  const std::size_t n = vv.cols();
  RETGAN_CHECK(ff.cols() % n == 0, "hyper_apply: flat width " << ff.cols()
                                       << " is not a multiple of input dim " << n);
  const std::size_t m = ff.cols() / n;
  const std::size_t batch = vv.rows();
  Tensor out({batch, m});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* vrow = vv.data() + b * n;
    const double* frow = ff.data() + b * n * m;
    double* orow = out.data() + b * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = vrow[i];
      const double* fr = frow + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += vi * fr[j];
    }
  }
  return binary(Op::kHyperApply, v, flat, std::move(out));
}

Graph::NodeId Graph::cosine_matrix(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  RETGAN_CHECK(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
               "cosine_matrix: need [n x d], [m x d], got " << av.shape_str() << " and "
                                                            << bv.shape_str());
  const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
  std::vector<double> na(n), nb(m);
  for (std::size_t i = 0; i < n; ++i) {
    na[i] = num::l2_norm(av.data() + i * d, d);
    RETGAN_CHECK(na[i] > 0.0, "cosine_matrix: zero vector at row " << i << " of first input");
  }
  for (std::size_t j = 0; j < m; ++j) {
    nb[j] = num::l2_norm(bv.data() + j * d, d);
    RETGAN_CHECK(nb[j] > 0.0, "cosine_matrix: zero vector at row " << j << " of second input");
  }
  Tensor out({n, m});
  num::matmul_acc(av, false, bv, true, 1.0, out);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= na[i] * nb[j];
  return binary(Op::kCosineMatrix, a, b, std::move(out));
}

namespace {
// Row softmax of sim/tau into p (n x n); returns mean of -log p[diag].
double softmax_diag_xent(const Tensor& sim, double tau, bool column_direction, Tensor& p) {
  const std::size_t n = sim.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = (column_direction ? sim[j * n + i] : sim[i * n + j]) / tau;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = (column_direction ? sim[j * n + i] : sim[i * n + j]) / tau;
      const double e = std::exp(s - mx);
      p[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= z;
    loss -= std::log(p[i * n + i]);
  }
  return loss / static_cast<double>(n);
}
}  // namespace

Graph::NodeId Graph::info_nce(NodeId sim, double temperature) {
  const Tensor& s = value(sim);
  RETGAN_CHECK(s.rank() == 2 && s.rows() == s.cols(),
               "info_nce: similarity matrix must be square, got " << s.shape_str());
  RETGAN_CHECK(s.rows() >= 2, "info_nce: batch of " << s.rows() << " has no negatives");
  RETGAN_CHECK(temperature > 0.0, "info_nce: temperature must be positive");
  Tensor p({s.rows(), s.rows()});
  const double row_loss = softmax_diag_xent(s, temperature, false, p);
  const double col_loss = softmax_diag_xent(s, temperature, true, p);
  return unary(Op::kInfoNce, sim, Tensor::scalar(0.5 * (row_loss + col_loss)), temperature);
}

void Graph::backprop_node(NodeId id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto in_val = [&](int k) -> const Tensor& { return val(n.inputs[k]); };
  auto wants = [&](int k) { return nodes_[n.inputs[k]].needs_grad; };
  auto gin = [&](int k) -> Tensor& { return grad_of(n.inputs[k]); };

  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
    case Op::kDetach:
      return;
    case Op::kAdd: {
      for (int k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor& gi = gin(k);
        if (gi.is_scalar() && !g.is_scalar()) {
          for (std::size_t i = 0; i < g.size(); ++i) gi[0] += g[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
      }
      return;
    }
    case Op::kSub: {
      if (wants(0)) {
        Tensor& gi = gin(0);
        if (gi.is_scalar() && !g.is_scalar())
          for (std::size_t i = 0; i < g.size(); ++i) gi[0] += g[i];
        else
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      if (wants(1)) {
        Tensor& gi = gin(1);
        if (gi.is_scalar() && !g.is_scalar())
          for (std::size_t i = 0; i < g.size(); ++i) gi[0] -= g[i];
        else
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
      }
      return;
    }
    case Op::kMul: {
      const Tensor& x = in_val(0);
      const Tensor& y = in_val(1);
      if (wants(0)) {
        Tensor& gi = gin(0);
        if (gi.is_scalar() && !g.is_scalar())
          for (std::size_t i = 0; i < g.size(); ++i) gi[0] += g[i] * pick(y, i);
        else
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * pick(y, i);
      }
      if (wants(1)) {
        Tensor& gi = gin(1);
        if (gi.is_scalar() && !g.is_scalar())
          for (std::size_t i = 0; i < g.size(); ++i) gi[0] += g[i] * pick(x, i);
        else
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * pick(x, i);
      }
      return;
    }
    case Op::kRelu: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) gi[i] += g[i];  // subgradient 0 at x == 0
      return;
    }
    case Op::kTanh: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      const Tensor& y = n.owned;
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    }
    case Op::kSigmoid: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      const Tensor& y = n.owned;
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case Op::kSoftplus: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double e = std::exp(-std::abs(x[i]));
        const double s = x[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        gi[i] += g[i] * s;
      }
      return;
    }
    case Op::kLog: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] / x[i];
      return;
    }
    case Op::kSquare: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += 2.0 * x[i] * g[i];
      return;
    }
    case Op::kAbs: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        gi[i] += g[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
      return;
    }
    case Op::kScale: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += n.alpha * g[i];
      return;
    }
    case Op::kAddScalar: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      return;
    }
    case Op::kClamp: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] >= n.alpha && x[i] <= n.beta) gi[i] += g[i];
      return;
    }
    case Op::kMatmul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (wants(0)) num::matmul_acc(g, false, b, true, 1.0, gin(0));   // dA += G B^T
      if (wants(1)) num::matmul_acc(a, true, g, false, 1.0, gin(1));   // dB += A^T G
      return;
    }
    case Op::kAddRowVec: {
      if (wants(0)) {
        Tensor& gi = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      if (wants(1)) {
        Tensor& gv = gin(1);
        const std::size_t cols = g.cols();
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gv[c] += g[r * cols + c];
      }
      return;
    }
    case Op::kConcatCols: {
      const std::size_t rows = g.rows();
      const std::size_t cols = g.cols();
      std::size_t col0 = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t w = val(n.inputs[k]).cols();
        if (nodes_[n.inputs[k]].needs_grad) {
          Tensor& gi = grad_of(n.inputs[k]);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) gi[r * w + c] += g[r * cols + col0 + c];
        }
        col0 += w;
      }
      return;
    }
    case Op::kReshape: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      return;
    }
    case Op::kSumAll: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[0];
      return;
    }
    case Op::kMeanAll: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      const double s = g[0] / static_cast<double>(gi.size());
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += s;
      return;
    }
    case Op::kSumAxis:
    case Op::kMeanAxis: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gi = gin(0);
      const auto& shape = x.shape();
      std::size_t outer = 1, inner = 1;
      for (std::size_t i = 0; i < n.axis; ++i) outer *= shape[i];
      for (std::size_t i = n.axis + 1; i < shape.size(); ++i) inner *= shape[i];
      const std::size_t extent = shape[n.axis];
      const double f = n.op == Op::kMeanAxis ? 1.0 / static_cast<double>(extent) : 1.0;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e)
          for (std::size_t i = 0; i < inner; ++i)
            gi[(o * extent + e) * inner + i] += f * g[o * inner + i];
      return;
    }
    case Op::kPatchPool: {
      if (!wants(0)) return;
      Tensor& gi = gin(0);
      const std::size_t batch = g.rows();
      const double inv = 1.0 / static_cast<double>(num::kPatchSide * num::kPatchSide);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* grow = g.data() + b * num::kPooledDim;
        double* irow = gi.data() + b * num::kImagePixels;
        for (std::size_t i = 0; i < num::kImagePixels; ++i)
          irow[i] += inv * grow[num::patch_bucket(i)];
      }
      return;
    }
    case Op::kEmbedMean: {
      if (!wants(0)) return;
      Tensor& gt = gin(0);
      const std::size_t dim = gt.cols();
      for (std::size_t b = 0; b + 1 < n.id_offsets.size(); ++b) {
        const std::uint32_t lo = n.id_offsets[b], hi = n.id_offsets[b + 1];
        const double inv = 1.0 / static_cast<double>(hi - lo);
        for (std::uint32_t k = lo; k < hi; ++k) {
          double* row = gt.data() + n.ids[k] * dim;
          const double* grow = g.data() + b * dim;
          for (std::size_t c = 0; c < dim; ++c) row[c] += inv * grow[c];
        }
      }
      return;
    }
    case Op::kHyperApply: {
      const Tensor& v = in_val(0);
      const Tensor& f = in_val(1);
      const std::size_t batch = v.rows();
      const std::size_t nn = v.cols();
      const std::size_t mm = f.cols() / nn;
      if (wants(0)) {
        Tensor& gv = gin(0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < nn; ++i)
            gv[b * nn + i] += num::dot(g.data() + b * mm, f.data() + b * nn * mm + i * mm, mm);
      }
      if (wants(1)) {
        Tensor& gf = gin(1);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* vrow = v.data() + b * nn;
          const double* grow = g.data() + b * mm;
          double* frow = gf.data() + b * nn * mm;
          for (std::size_t i = 0; i < nn; ++i) {
            const double vi = vrow[i];
            double* fr = frow + i * mm;
            for (std::size_t j = 0; j < mm; ++j) fr[j] += vi * grow[j];
          }
        }
      }
      return;
    }
    case Op::kCosineMatrix: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      const Tensor& s = n.owned;
      const std::size_t rows = a.rows(), colsb = b.rows(), d = a.cols();
      std::vector<double> na(rows), nb(colsb);
      for (std::size_t i = 0; i < rows; ++i) na[i] = num::l2_norm(a.data() + i * d, d);
      for (std::size_t j = 0; j < colsb; ++j) nb[j] = num::l2_norm(b.data() + j * d, d);
      // dS/da_i = b_j / (|a_i||b_j|) - s_ij a_i / |a_i|^2
      if (wants(0)) {
        Tensor& ga = gin(0);
        Tensor gs({rows, colsb});
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < colsb; ++j)
            gs[i * colsb + j] = g[i * colsb + j] / (na[i] * nb[j]);
        num::matmul_acc(gs, false, b, false, 1.0, ga);
        for (std::size_t i = 0; i < rows; ++i) {
          double coef = 0.0;
          for (std::size_t j = 0; j < colsb; ++j)
            coef += g[i * colsb + j] * s[i * colsb + j];
          coef /= na[i] * na[i];
          for (std::size_t c = 0; c < d; ++c) ga[i * d + c] -= coef * a[i * d + c];
        }
      }
      if (wants(1)) {
        Tensor& gb = gin(1);
        Tensor gs({rows, colsb});
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < colsb; ++j)
            gs[i * colsb + j] = g[i * colsb + j] / (na[i] * nb[j]);
        num::matmul_acc(gs, true, a, false, 1.0, gb);
        for (std::size_t j = 0; j < colsb; ++j) {
          double coef = 0.0;
          for (std::size_t i = 0; i < rows; ++i)
            coef += g[i * colsb + j] * s[i * colsb + j];
          coef /= nb[j] * nb[j];
          for (std::size_t c = 0; c < d; ++c) gb[j * d + c] -= coef * b[j * d + c];
        }
      }
      return;
    }
    case Op::kInfoNce: {
      if (!wants(0)) return;
      const Tensor& s = in_val(0);
      const std::size_t nn = s.rows();
      Tensor p({nn, nn});
      Tensor& gi = gin(0);
      const double tau = n.alpha;
      const double w = g[0] / (2.0 * static_cast<double>(nn) * tau);
      softmax_diag_xent(s, tau, false, p);
      for (std::size_t i = 0; i < nn; ++i)
        for (std::size_t j = 0; j < nn; ++j)
          gi[i * nn + j] += w * (p[i * nn + j] - (i == j ? 1.0 : 0.0));
      softmax_diag_xent(s, tau, true, p);
      for (std::size_t j = 0; j < nn; ++j)
        for (std::size_t i = 0; i < nn; ++i)
          gi[i * nn + j] += w * (p[j * nn + i] - (i == j ? 1.0 : 0.0));
      return;
    }
  }
}

std::map<std::string, Tensor> Graph::backward(NodeId loss) {
  check_id(loss);
  RETGAN_CHECK(val(loss).is_scalar(),
               "backward: loss must be scalar, got shape " << val(loss).shape_str());
  for (Node& n : nodes_) n.grad = Tensor();
  nodes_[loss].grad = Tensor::scalar(1.0);
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (!n.needs_grad && id != loss) continue;
    backprop_node(id);
  }
  std::map<std::string, Tensor> grads;
  for (auto& [name, id] : param_index_) {
    Node& n = nodes_[id];
    if (!n.trainable) continue;
    grads[name] = n.grad.empty() ? Tensor(val(id).shape()) : std::move(n.grad);
  }
  return grads;
}

}  // namespace retgan
