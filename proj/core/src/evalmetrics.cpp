#include "retgan/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "retgan/check.hpp"
#include "retgan/math.hpp"

namespace retgan {

namespace {
constexpr std::uint64_t kDomainDivNoise = 0x44564e5a;
constexpr std::uint64_t kDomainDivBoth = 0x44564254;
constexpr std::uint64_t kDomainFrechet = 0x46524543;
constexpr double kDegenerateFloor = 1e-12;
constexpr double kFrechetEps = 1e-8;

Tensor covariance(const Tensor& x, const Tensor& mu) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor centered = x;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) centered.at(r, j) -= mu[j];
  Tensor s({d, d});
  num::matmul_acc(centered, true, centered, false, 1.0 / double(n - 1), s);
  if (n <= d) {
    // rank-deficient sample, pull toward a scaled identity so the square
    // root below stays well posed
    double tr = 0.0;
    for (std::size_t j = 0; j < d; ++j) tr += s.at(j, j);
    const double ridge = 1e-3 * tr / double(d);
    for (std::size_t j = 0; j < d; ++j) s.at(j, j) += ridge;
  }
  return s;
}

/// Eigenvalues clamped at zero; below -tol (relative to the largest) is a
/// numerical error, not something to paper over.
void clamp_spectrum(Tensor& vals, const char* what) {
  double lmax = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) lmax = std::max(lmax, vals[i]);
  const double tol = kFrechetEps * std::max(lmax, 0.0) + 1e-18;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    RETGAN_CHECK_RUNTIME(vals[i] >= -tol, what << " has eigenvalue " << vals[i]
                                               << " below the negativity tolerance " << -tol
                                               << " (largest " << lmax << ")");
    vals[i] = std::max(vals[i], 0.0);
  }
}

Tensor sqrt_psd(const Tensor& s, const char* what) {
  const std::size_t n = s.rows();
  Tensor vals, vecs;
  num::sym_eig(s, vals, vecs);
  clamp_spectrum(vals, what);
  Tensor scaled = vecs;  // columns are eigenvectors
  for (std::size_t j = 0; j < n; ++j) {
    const double sq = std::sqrt(vals[j]);
    for (std::size_t i = 0; i < n; ++i) scaled.at(i, j) *= sq;
  }
  Tensor root({n, n});
  num::matmul_acc(scaled, false, vecs, true, 1.0, root);
  return root;
}

Tensor visual_condition(const InferenceModel& m, const Tensor& v, const Tensor& t) {
  return m.config.encoder_mode == EncoderMode::kHyper
             ? encode_visual_hyper(m.model.g_enc, v, t)
             : encode_visual_direct(m.model.g_enc, v);
}

Tensor row_of(const Tensor& matrix, std::size_t r) {
  Tensor out({matrix.cols()});
  std::copy(matrix.data() + r * matrix.cols(), matrix.data() + (r + 1) * matrix.cols(),
            out.data());
  return out;
}
}  // namespace

double pairwise_diversity(const std::vector<Tensor>& groups) {
  RETGAN_CHECK(!groups.empty(), "diversity needs at least one caption group");
  double total = 0.0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Tensor& g = groups[gi];
    RETGAN_CHECK(g.rank() == 2 && g.rows() >= 2,
                 "caption group " << gi << " needs at least 2 samples, got shape "
                                  << g.shape_str());
    const std::size_t n = g.rows(), d = g.cols();
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double sq = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = g.at(i, c) - g.at(j, c);
          sq += diff * diff;
        }
        sum += std::sqrt(sq);
        ++pairs;
      }
    total += sum / double(pairs);
  }
  return total / double(groups.size());
}

DiversityComparison diversity_ratio(const InferenceModel& m, const Corpus& corpus,
                                    std::size_t captions, std::size_t samples,
                                    std::uint64_t seed) {
  RETGAN_CHECK(captions >= 1 && samples >= 2,
               "diversity needs at least 1 caption and 2 samples per caption");
  const std::size_t first = 2 * corpus.manifest.n_train;
  const std::size_t count = std::min(captions, corpus.manifest.n_captions() - first);
  RETGAN_CHECK(count > 0, "diversity: no held-out captions available");

  std::vector<std::vector<std::uint32_t>> tokens;
  for (std::size_t c = first; c < first + count; ++c)
    tokens.push_back(corpus.captions[c].tokens);
  const Tensor tfeat = encode_texts(m.enc_txt, tokens);
  const Tensor sim = build_similarity_matrix(tfeat, m.pool_embed);
  const std::size_t K = std::min<std::size_t>(m.config.k, m.pool_embed.rows());
  const RetrievalMap map = topk_map(sim, K);

  const Rng base(seed);
  std::vector<Tensor> pix_a, feat_a, pix_b, feat_b;
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor t = row_of(tfeat, i);
    const Tensor t_e = encode_text_cond(m.model.g_enc, t);

    Tensor pa({samples, num::kImagePixels}), fa({samples, kEmbedDim});
    const Tensor v0 = row_of(m.pool_embed, map.row(i)[0]);
    const Tensor v_e0 = visual_condition(m, v0, t);
    Rng ra = base.fork(kDomainDivNoise, i);
    for (std::size_t s = 0; s < samples; ++s) {
      Tensor z({kNoiseDim});
      for (std::size_t j = 0; j < kNoiseDim; ++j) z[j] = ra.normal();
      const auto [img, w] = generator_forward(m.model.gen, z, t_e, v_e0);
      std::copy(img.data(), img.data() + num::kImagePixels, pa.data() + s * num::kImagePixels);
      const Tensor f = encode_image(m.enc_img, img);
      std::copy(f.data(), f.data() + kEmbedDim, fa.data() + s * kEmbedDim);
    }

    Tensor pb({samples, num::kImagePixels}), fb({samples, kEmbedDim});
    Rng rb = base.fork(kDomainDivBoth, i);
    for (std::size_t s = 0; s < samples; ++s) {
      const std::uint32_t ref = map.row(i)[rb.below(K)];
      const Tensor v = row_of(m.pool_embed, ref);
      const Tensor v_e = visual_condition(m, v, t);
      Tensor z({kNoiseDim});
      for (std::size_t j = 0; j < kNoiseDim; ++j) z[j] = rb.normal();
      const auto [img, w] = generator_forward(m.model.gen, z, t_e, v_e);
      std::copy(img.data(), img.data() + num::kImagePixels, pb.data() + s * num::kImagePixels);
      const Tensor f = encode_image(m.enc_img, img);
      std::copy(f.data(), f.data() + kEmbedDim, fb.data() + s * kEmbedDim);
    }

    pix_a.push_back(std::move(pa));
    feat_a.push_back(std::move(fa));
    pix_b.push_back(std::move(pb));
    feat_b.push_back(std::move(fb));
  }

  DiversityComparison out;
  out.vary_noise = {pairwise_diversity(pix_a), pairwise_diversity(feat_a), count, samples,
                    DiversityMode::kVaryNoise};
  out.vary_both = {pairwise_diversity(pix_b), pairwise_diversity(feat_b), count, samples,
                   DiversityMode::kVaryBoth};
  if (out.vary_noise.d_l2 < kDegenerateFloor || out.vary_noise.d_feat < kDegenerateFloor) {
    out.degenerate = true;
    out.ratio_l2 = std::numeric_limits<double>::quiet_NaN();
    out.ratio_feat = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.ratio_l2 = out.vary_both.d_l2 / out.vary_noise.d_l2;
    out.ratio_feat = out.vary_both.d_feat / out.vary_noise.d_feat;
  }
  return out;
}

FrechetProxy frechet_proxy(const Tensor& features_a, const Tensor& features_b) {
  RETGAN_CHECK(features_a.rank() == 2 && features_b.rank() == 2 &&
                   features_a.cols() == features_b.cols(),
               "frechet proxy: feature sets must be [n x d] with matching d, got "
                   << features_a.shape_str() << " and " << features_b.shape_str());
  RETGAN_CHECK(features_a.rows() >= 2 && features_b.rows() >= 2,
               "frechet proxy: need at least 2 samples per side");
  const std::size_t d = features_a.cols();
  const std::size_t na = features_a.rows(), nb = features_b.rows();

  Tensor mu_a({d}), mu_b({d});
  for (std::size_t j = 0; j < d; ++j) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t r = 0; r < na; ++r) sa += features_a.at(r, j);
    for (std::size_t r = 0; r < nb; ++r) sb += features_b.at(r, j);
    mu_a[j] = sa / double(na);
    mu_b[j] = sb / double(nb);
  }
  const Tensor cov_a = covariance(features_a, mu_a);
  const Tensor cov_b = covariance(features_b, mu_b);

  const Tensor half_a = sqrt_psd(cov_a, "frechet proxy: first covariance");
  Tensor tmp({d, d}), prod({d, d});
  num::matmul_acc(half_a, false, cov_b, false, 1.0, tmp);
  num::matmul_acc(tmp, false, half_a, false, 1.0, prod);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (prod.at(i, j) + prod.at(j, i));
      prod.at(i, j) = avg;
      prod.at(j, i) = avg;
    }
  Tensor vals, vecs;
  num::sym_eig(prod, vals, vecs);
  clamp_spectrum(vals, "frechet proxy: covariance product");

  double mean_sq = 0.0, trace_a = 0.0, trace_b = 0.0, trace_sqrt = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = mu_a[j] - mu_b[j];
    mean_sq += diff * diff;
    trace_a += cov_a.at(j, j);
    trace_b += cov_b.at(j, j);
    trace_sqrt += std::sqrt(vals[j]);
  }
  double value = mean_sq + trace_a + trace_b - 2.0 * trace_sqrt;
  RETGAN_CHECK_RUNTIME(value >= -kFrechetEps, "frechet proxy: value " << value
                                                  << " below the numerical floor");
  if (std::abs(value) <= kFrechetEps) value = 0.0;
  return {value, d, na, nb};
}

double recall_at_k(const RetrievalMap& map, const std::vector<std::uint32_t>& ground_truth) {
  RETGAN_CHECK(ground_truth.size() == map.n_captions(),
               "recall: " << ground_truth.size() << " ground-truth entries for "
                          << map.n_captions() << " captions");
  std::size_t hits = 0;
  for (std::size_t c = 0; c < map.n_captions(); ++c) {
    const std::uint32_t* row = map.row(c);
    if (std::find(row, row + map.k, ground_truth[c]) != row + map.k) ++hits;
  }
  return double(hits) / double(map.n_captions());
}

std::string EvalSummary::report() const {
  std::ostringstream o;
  o.precision(10);
  o << "d_l2_a=" << diversity.vary_noise.d_l2 << "\n";
  o << "d_l2_b=" << diversity.vary_both.d_l2 << "\n";
  if (diversity.degenerate) {
    o << "ratio_l2=degenerate\n";
  } else {
    o << "ratio_l2=" << diversity.ratio_l2 << "\n";
  }
  o << "d_feat_a=" << diversity.vary_noise.d_feat << "\n";
  o << "d_feat_b=" << diversity.vary_both.d_feat << "\n";
  if (diversity.degenerate) {
    o << "ratio_feat=degenerate\n";
  } else {
    o << "ratio_feat=" << diversity.ratio_feat << "\n";
  }
  o << "frechet_proxy=" << frechet.value << "\n";
  o << "recall_at_5=" << recall_at_5 << "\n";
  return o.str();
}

EvalSummary evaluate_model(const InferenceModel& m, const Corpus& corpus, std::size_t captions,
                           std::size_t samples, std::uint64_t seed) {
  EvalSummary out;
  out.diversity = diversity_ratio(m, corpus, captions, samples, seed);

  const std::size_t n_train = corpus.manifest.n_train;
  const std::size_t n_test = corpus.manifest.n_test;
  const std::size_t first = 2 * n_train;
  const std::size_t tc = 2 * n_test;
  std::vector<std::vector<std::uint32_t>> tokens;
  for (std::size_t c = first; c < first + tc; ++c) tokens.push_back(corpus.captions[c].tokens);
  const Tensor tfeat = encode_texts(m.enc_txt, tokens);
  const Tensor sim = build_similarity_matrix(tfeat, m.pool_embed);
  const RetrievalMap top1 = topk_map(sim, 1);

  const Rng base(seed);
  Tensor gen_feat({tc, kEmbedDim});
  for (std::size_t i = 0; i < tc; ++i) {
    const Tensor t = row_of(tfeat, i);
    const Tensor t_e = encode_text_cond(m.model.g_enc, t);
    const Tensor v = row_of(m.pool_embed, top1.row(i)[0]);
    const Tensor v_e = visual_condition(m, v, t);
    Rng zr = base.fork(kDomainFrechet, i);
    Tensor z({kNoiseDim});
    for (std::size_t j = 0; j < kNoiseDim; ++j) z[j] = zr.normal();
    const auto [img, w] = generator_forward(m.model.gen, z, t_e, v_e);
    const Tensor f = encode_image(m.enc_img, img);
    std::copy(f.data(), f.data() + kEmbedDim, gen_feat.data() + i * kEmbedDim);
  }
  Tensor real({n_test, num::kImagePixels});
  std::copy(corpus.images.data() + n_train * num::kImagePixels,
            corpus.images.data() + (n_train + n_test) * num::kImagePixels, real.data());
  const Tensor real_feat = encode_images(m.enc_img, real);
  out.frechet = frechet_proxy(gen_feat, real_feat);

  const Tensor test_sim = build_similarity_matrix(tfeat, real_feat);
  const RetrievalMap r5 = topk_map(test_sim, std::min<std::size_t>(5, n_test));
  std::vector<std::uint32_t> gt(tc);
  for (std::size_t i = 0; i < tc; ++i)
    gt[i] = static_cast<std::uint32_t>((first + i) / 2 - n_train);
  out.recall_at_5 = recall_at_k(r5, gt);
  return out;
}

}  // namespace retgan
