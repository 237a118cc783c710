#include "retgan/inference.hpp"

#include <algorithm>
#include <cmath>

#include "retgan/adam.hpp"
#include "retgan/check.hpp"
#include "retgan/math.hpp"

namespace retgan {

namespace {
constexpr std::uint64_t kDomainLatentInit = 0x4c415453;

Tensor pool_row(const InferenceModel& m, std::size_t idx) {
  RETGAN_CHECK(idx < m.pool_embed.rows(), "reference index " << idx
                                              << " outside training pool of "
                                              << m.pool_embed.rows() << " images");
  Tensor v({kEmbedDim});
  std::copy(m.pool_embed.data() + idx * kEmbedDim, m.pool_embed.data() + (idx + 1) * kEmbedDim,
            v.data());
  return v;
}

struct Condition {
  Tensor t_e, v_e;
};

Condition condition_of(const InferenceModel& m, const Tensor& t, const Tensor& v) {
  Tensor t_e = encode_text_cond(m.model.g_enc, t);
  Tensor v_e = m.config.encoder_mode == EncoderMode::kHyper
                   ? encode_visual_hyper(m.model.g_enc, v, t)
                   : encode_visual_direct(m.model.g_enc, v);
  return {std::move(t_e), std::move(v_e)};
}

LatentStats latent_stats_for(const GeneratorParams& gen, const Tensor& t_e, const Tensor& v_e,
                             std::size_t n, Rng& rng) {
  RETGAN_CHECK(n >= 2, "latent stats need at least 2 samples, got " << n);
  Tensor z({n, kNoiseDim});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
  Tensor te_rows({n, kCondDim}), ve_rows({n, kCondDim});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < kCondDim; ++j) {
      te_rows.at(r, j) = t_e[j];
      ve_rows.at(r, j) = v_e[j];
    }
  Graph g;
  auto w = generator_mapping_graph(g, gen, g.constant_view(z), g.constant_view(te_rows),
                                   g.constant_view(ve_rows), "gen", false);
  const Tensor& W = g.value(w);
  LatentStats out;
  out.count = n;
  for (std::size_t j = 0; j < kWDim; ++j) {
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += W.at(r, j);
    const double mu = sum / double(n);
    double sq = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = W.at(r, j) - mu;
      sq += d * d;
    }
    out.mean[j] = mu;
    out.stddev[j] = std::sqrt(sq / double(n));
  }
  return out;
}

Tensor synth_image(const GeneratorParams& p, const Tensor& w) {
  Graph g;
  auto node = generator_synthesis_graph(g, p, g.constant(w.reshaped({1, kWDim})), "gen", false);
  return g.value(node).reshaped({num::kImageSide, num::kImageSide, 3});
}
}  // namespace

Tensor generate(const InferenceModel& m, const std::vector<std::uint32_t>& caption,
                std::size_t reference_index, const Tensor& z) {
  const Tensor t = encode_text(m.enc_txt, caption);
  const Tensor v = pool_row(m, reference_index);
  const Condition c = condition_of(m, t, v);
  auto [image, w] = generator_forward(m.model.gen, z, c.t_e, c.v_e);
  return image;
}

LatentStats sample_latent_stats(const InferenceModel& m,
                                const std::vector<std::uint32_t>& caption,
                                std::size_t reference_index, std::size_t n, Rng& rng) {
  const Tensor t = encode_text(m.enc_txt, caption);
  const Tensor v = pool_row(m, reference_index);
  const Condition c = condition_of(m, t, v);
  return latent_stats_for(m.model.gen, c.t_e, c.v_e, n, rng);
}

OptimizeResult latent_optimize(const InferenceModel& m,
                               const std::vector<std::uint32_t>& caption,
                               const Tensor& reference_image, const OptimConfig& cfg,
                               const std::vector<std::size_t>& snapshot_iters) {
  RETGAN_CHECK(reference_image.size() == num::kImagePixels,
               "latent optimize: reference image must have " << num::kImagePixels << " values");
  const Tensor t = encode_text(m.enc_txt, caption);
  const Tensor ref_flat = reference_image.reshaped({1, num::kImagePixels});
  const Tensor v = encode_image(m.enc_img, reference_image);
  const Tensor ref_feat = v.reshaped({1, kEmbedDim});
  const Condition c = condition_of(m, t, v);

  Rng stats_rng = Rng(m.config.seed).fork(kDomainLatentInit);
  const LatentStats st =
      latent_stats_for(m.model.gen, c.t_e, c.v_e, kDefaultLatentSamples, stats_rng);
  Tensor w = st.mean.reshaped({1, kWDim});

  Adam opt(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8});
  std::map<std::string, Tensor*> params{{"w", &w}};

  OptimizeResult out;
  for (std::size_t it = 0; it <= cfg.iterations; ++it) {
    Graph g;
    auto wn = g.param("w", w, true);
    auto img = generator_synthesis_graph(g, m.model.gen, wn, "gen", false);
    auto pix = g.mean(g.square(g.sub(img, g.constant_view(ref_flat))));
    auto feat = image_encoder_graph(g, m.enc_img, img, "enc_img", false);
    auto fl = g.mean(g.square(g.sub(feat, g.constant_view(ref_feat))));
    auto loss = g.add(g.scale(pix, 0.5), g.scale(fl, 0.5));
    const double value = g.value(loss).scalar_value();
    RETGAN_CHECK_RUNTIME(std::isfinite(value),
                         "latent optimize: non-finite loss at iteration " << it);
    out.trace.push_back(value);
    if (std::find(snapshot_iters.begin(), snapshot_iters.end(), it) != snapshot_iters.end())
      out.snapshots.push_back(synth_image(m.model.gen, w));
    if (it == cfg.iterations) break;
    auto grads = g.backward(loss);
    opt.step(params, grads);
  }
  out.w = w.reshaped({kWDim});
  out.image = synth_image(m.model.gen, w);
  return out;
}

}  // namespace retgan
