#include "retgan/encoding.hpp"

#include <cmath>

#include "retgan/check.hpp"

namespace retgan {

namespace {
void init_normal(Tensor& t, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
}
}  // namespace

void EncoderBundle::init(Rng& rng, double stddev) {
  init_normal(text_map.weight, rng, stddev);
  text_map.bias.fill(0.0);
  init_normal(visual_map.weight, rng, stddev);
  visual_map.bias.fill(0.0);
  init_normal(hyper.w1, rng, stddev);
  hyper.b1.fill(0.0);
  init_normal(hyper.w2, rng, stddev / std::sqrt(double(kHyperHidden)));
  hyper.b2.fill(0.0);
  visual_bias.fill(0.0);
}

std::map<std::string, Tensor*> EncoderBundle::named(const std::string& prefix) {
  std::map<std::string, Tensor*> m = {{prefix + "/mt_w", &text_map.weight},
                                      {prefix + "/mt_b", &text_map.bias}};
  if (mode == EncoderMode::kDirect) {
    m[prefix + "/mv_w"] = &visual_map.weight;
    m[prefix + "/mv_b"] = &visual_map.bias;
  } else {
    m[prefix + "/h_w1"] = &hyper.w1;
    m[prefix + "/h_b1"] = &hyper.b1;
    m[prefix + "/h_w2"] = &hyper.w2;
    m[prefix + "/h_b2"] = &hyper.b2;
    m[prefix + "/bv"] = &visual_bias;
    if (additive) m[prefix + "/mv_w"] = &visual_map.weight;
  }
  return m;
}

std::map<std::string, const Tensor*> EncoderBundle::named(const std::string& prefix) const {
  std::map<std::string, const Tensor*> m = {{prefix + "/mt_w", &text_map.weight},
                                            {prefix + "/mt_b", &text_map.bias}};
  if (mode == EncoderMode::kDirect) {
    m[prefix + "/mv_w"] = &visual_map.weight;
    m[prefix + "/mv_b"] = &visual_map.bias;
  } else {
    m[prefix + "/h_w1"] = &hyper.w1;
    m[prefix + "/h_b1"] = &hyper.b1;
    m[prefix + "/h_w2"] = &hyper.w2;
    m[prefix + "/h_b2"] = &hyper.b2;
    m[prefix + "/bv"] = &visual_bias;
    if (additive) m[prefix + "/mv_w"] = &visual_map.weight;
  }
  return m;
}

Graph::NodeId text_cond_graph(Graph& g, const EncoderBundle& b, Graph::NodeId t,
                              const std::string& prefix, bool trainable) {
  return g.add_rowvec(g.matmul(t, g.param(prefix + "/mt_w", b.text_map.weight, trainable)),
                      g.param(prefix + "/mt_b", b.text_map.bias, trainable));
}

Graph::NodeId visual_cond_graph(Graph& g, const EncoderBundle& b, Graph::NodeId v,
                                Graph::NodeId t, const std::string& prefix, bool trainable) {
  if (b.mode == EncoderMode::kDirect) {
    return g.add_rowvec(g.matmul(v, g.param(prefix + "/mv_w", b.visual_map.weight, trainable)),
                        g.param(prefix + "/mv_b", b.visual_map.bias, trainable));
  }
  auto h = g.relu(g.add_rowvec(g.matmul(t, g.param(prefix + "/h_w1", b.hyper.w1, trainable)),
                               g.param(prefix + "/h_b1", b.hyper.b1, trainable)));
  auto flat = g.add_rowvec(g.matmul(h, g.param(prefix + "/h_w2", b.hyper.w2, trainable)),
                           g.param(prefix + "/h_b2", b.hyper.b2, trainable));
  auto ve = g.hyper_apply(v, flat);
  if (b.additive)
    ve = g.add(ve, g.matmul(v, g.param(prefix + "/mv_w", b.visual_map.weight, trainable)));
  return g.add_rowvec(ve, g.param(prefix + "/bv", b.visual_bias, trainable));
}

namespace {
Tensor as_row(const Tensor& v, const char* what) {
  RETGAN_CHECK(v.size() == 256, what << ": expected a 256-dim vector, got " << v.shape_str());
  return v.reshaped({1, 256});
}
}  // namespace

Tensor encode_text_cond(const EncoderBundle& b, const Tensor& t) {
  Graph g;
  auto out = text_cond_graph(g, b, g.constant(as_row(t, "encode_text_cond")), "enc", false);
  return g.value(out).reshaped({kCondDim});
}

Tensor encode_visual_direct(const EncoderBundle& b, const Tensor& v) {
  RETGAN_CHECK(b.mode == EncoderMode::kDirect,
               "encode_visual_direct: bundle is in hyper mode");
  Graph g;
  auto out = visual_cond_graph(g, b, g.constant(as_row(v, "encode_visual_direct")), -1, "enc",
                               false);
  return g.value(out).reshaped({kCondDim});
}

Tensor hyper_predict_weights(const EncoderBundle& b, const Tensor& t) {
  RETGAN_CHECK(b.mode == EncoderMode::kHyper,
               "hyper_predict_weights: bundle is in direct mode");
  Graph g;
  auto tin = g.constant(as_row(t, "hyper_predict_weights"));
  auto h = g.relu(g.add_rowvec(g.matmul(tin, g.param("h_w1", b.hyper.w1, false)),
                               g.param("h_b1", b.hyper.b1, false)));
  auto flat = g.add_rowvec(g.matmul(h, g.param("h_w2", b.hyper.w2, false)),
                           g.param("h_b2", b.hyper.b2, false));
  return g.value(flat).reshaped({256, kCondDim});
}

Tensor encode_visual_hyper(const EncoderBundle& b, const Tensor& v, const Tensor& t) {
  RETGAN_CHECK(b.mode == EncoderMode::kHyper, "encode_visual_hyper: bundle is in direct mode");
  Graph g;
  auto vin = g.constant(as_row(v, "encode_visual_hyper"));
  auto tin = g.constant(as_row(t, "encode_visual_hyper"));
  auto out = visual_cond_graph(g, b, vin, tin, "enc", false);
  return g.value(out).reshaped({kCondDim});
}

}  // namespace retgan
