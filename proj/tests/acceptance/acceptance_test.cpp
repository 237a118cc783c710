// Acceptance harness: ten shipped guarantees, one PASS/FAIL line each.
// Exit status is the number of failed checks. The heavyweight checks share
// one smoke-scale training run (1000 train images, 2000 steps, batch 16).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "retgan/checkpoint.hpp"
#include "retgan/corpus.hpp"
#include "retgan/embedder.hpp"
#include "retgan/encoding.hpp"
#include "retgan/evalmetrics.hpp"
#include "retgan/gantrain.hpp"
#include "retgan/grad_check.hpp"
#include "retgan/graph.hpp"
#include "retgan/inference.hpp"
#include "retgan/pipeline.hpp"
#include "retgan/retrieval.hpp"
#include "retgan/rng.hpp"
#include "retgan/tensor.hpp"

namespace fs = std::filesystem;
using namespace retgan;

namespace {

int failures = 0;
std::set<std::string> fd_covered;  // parameter names exercised by check 1

void report(int id, const std::string& name, bool ok, const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!ok) ++failures;
}

void fail_with_exception(int id, const std::string& name, const std::exception& e) {
  report(id, name, false, std::string("exception: ") + e.what());
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

Tensor randn(const std::vector<std::size_t>& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

std::uint64_t tensor_hash(std::uint64_t h, const Tensor& t) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t model_hash(InferenceModel& m) {
  std::uint64_t h = 1469598103934665603ull;
  for (auto& [name, t] : m.model.g_side()) h = tensor_hash(h, *t);
  for (auto& [name, t] : m.model.d_side()) h = tensor_hash(h, *t);
  for (auto& [name, t] : m.enc_img.named("enc_img")) h = tensor_hash(h, *t);
  for (auto& [name, t] : m.enc_txt.named("enc_txt")) h = tensor_hash(h, *t);
  return tensor_hash(h, m.pool_embed);
}

// ---------------------------------------------------------------- check 1

struct FdFixture {
  Corpus corpus = generate_corpus(31, 8, 2);
  Tensor images{{2, num::kImagePixels}};
  std::vector<std::vector<std::uint32_t>> tokens;
  Tensor z, txt_feat, img_feat, ref_flat, ref_feat, w_opt;
  ImageEncoderParams enc_img{128};
  TextEncoderParams enc_txt{128};
  GanModel direct, hyper;

  FdFixture() {
    std::copy(corpus.images.data(), corpus.images.data() + 2 * num::kImagePixels,
              images.data());
    tokens = {corpus.captions[0].tokens, corpus.captions[3].tokens};
    Rng r(97);
    Rng re = r.fork(1), rt = r.fork(2), rd = r.fork(3), rh = r.fork(4), rz = r.fork(5);
    enc_img.init(re);
    enc_txt.init(rt);
    direct.init(rd, EncoderMode::kDirect, false);
    hyper.init(rh, EncoderMode::kHyper, false);
    z = randn({2, kNoiseDim}, rz);
    txt_feat = encode_texts(enc_txt, tokens);
    img_feat = encode_images(enc_img, images);
    ref_flat = Tensor({1, num::kImagePixels});
    std::copy(images.data(), images.data() + num::kImagePixels, ref_flat.data());
    ref_feat = encode_image(enc_img, ref_flat).reshaped({1, kEmbedDim});
    w_opt = randn({1, kWDim}, rz, 0.5);
  }
};

// Runs central finite differences against backward() for one loss builder
// and folds the worst relative error into `worst`.
void fd_sweep(FdFixture& f, const std::function<Graph::NodeId(Graph&)>& build,
              const std::string& label, Rng& rng, double& worst, std::string& worst_where) {
  std::map<std::string, Tensor> analytic;
  {
    Graph g;
    analytic = g.backward(build(g));
  }
  std::map<std::string, Tensor*> catalogue = f.direct.g_side();
  for (auto& [n, t] : f.direct.d_side()) catalogue[n] = t;
  for (auto& [n, t] : f.hyper.g_side()) catalogue[n] = t;
  for (auto& [n, t] : f.hyper.d_side()) catalogue[n] = t;
  for (auto& [n, t] : f.enc_img.named("enc_img")) catalogue[n] = t;
  for (auto& [n, t] : f.enc_txt.named("enc_txt")) catalogue[n] = t;
  catalogue["w"] = &f.w_opt;

  std::map<std::string, Tensor*> present;
  for (auto& [name, g] : analytic) {
    present[name] = catalogue.at(name);
    fd_covered.insert(name);
  }
  const auto loss_fn = [&]() {
    Graph g;
    return g.value(build(g)).scalar_value();
  };
  const GradCheckResult res = grad_check(loss_fn, present, analytic, 1e-5, 6, rng);
  if (res.max_rel_err > worst) {
    worst = res.max_rel_err;
    worst_where = label + " @ " + res.worst_param;
  }
}

void criterion1() {
  const std::string name = "gradient soundness across parameter groups and losses";
  try {
    const auto t0 = std::chrono::steady_clock::now();
    FdFixture f;
    Rng rng(999);
    double worst = 0.0;
    std::string where = "-";

    fd_sweep(
        f,
        [&](Graph& g) {
          auto ie = image_encoder_graph(g, f.enc_img, g.constant_view(f.images), "enc_img",
                                        true);
          auto te = text_encoder_graph(g, f.enc_txt, f.tokens, "enc_txt", true);
          return g.info_nce(g.cosine_matrix(te, ie), 0.1);
        },
        "contrastive-pretrain", rng, worst, where);

    for (GanModel* M : {&f.direct, &f.hyper}) {
      const std::string tag =
          M->g_enc.mode == EncoderMode::kHyper ? "[hyper]" : "[direct]";
      const auto cond_g = [&](Graph& g) {
        auto tf = g.constant_view(f.txt_feat);
        auto te = text_cond_graph(g, M->g_enc, tf, "g_enc", true);
        auto ve = visual_cond_graph(g, M->g_enc, g.constant_view(f.img_feat), tf, "g_enc",
                                    true);
        return std::pair{te, ve};
      };
      const auto cond_d = [&](Graph& g) {
        auto tf = g.constant_view(f.txt_feat);
        auto te = text_cond_graph(g, M->d_enc, tf, "d_enc", true);
        auto ve = visual_cond_graph(g, M->d_enc, g.constant_view(f.img_feat), tf, "d_enc",
                                    true);
        return std::pair{te, ve};
      };

      fd_sweep(
          f,
          [&](Graph& g) {
            auto [te, ve] = cond_g(g);
            auto [img, w] = generator_graph(g, M->gen, g.constant_view(f.z), te, ve, "gen",
                                            true);
            auto [td, vd] = cond_d(g);
            auto logit = discriminator_graph(g, M->disc, img, td, vd, "disc", true);
            return gen_adv_loss(g, logit, GanLoss::kNonsaturating);
          },
          "adversarial-generator " + tag, rng, worst, where);

      fd_sweep(
          f,
          [&](Graph& g) {
            auto [te, ve] = cond_g(g);
            auto [img, w] = generator_graph(g, M->gen, g.constant_view(f.z), te, ve, "gen",
                                            true);
            auto feat = image_encoder_graph(g, f.enc_img, img, "enc_img", true);
            return guide_l1_loss(g, feat, g.constant_view(f.img_feat));
          },
          "guidance-l1 " + tag, rng, worst, where);

      fd_sweep(
          f,
          [&](Graph& g) {
            auto [te, ve] = cond_g(g);
            auto [img, w] = generator_graph(g, M->gen, g.constant_view(f.z), te, ve, "gen",
                                            true);
            auto feat = image_encoder_graph(g, f.enc_img, img, "enc_img", true);
            return guide_contrastive_loss(g, feat, g.constant_view(f.img_feat), 0.1);
          },
          "guidance-contrastive " + tag, rng, worst, where);

      fd_sweep(
          f,
          [&](Graph& g) {
            auto [te, ve] = cond_g(g);
            auto [fake, w] = generator_graph(g, M->gen, g.constant_view(f.z), te, ve, "gen",
                                             true);
            auto [td, vd] = cond_d(g);
            auto lr = discriminator_graph(g, M->disc, g.constant_view(f.images), td, vd,
                                          "disc", true);
            auto lf = discriminator_graph(g, M->disc, fake, td, vd, "disc", true);
            return disc_bce_loss(g, lr, lf);
          },
          "discriminator-bce " + tag, rng, worst, where);
    }

    fd_sweep(
        f,
        [&](Graph& g) {
          auto wn = g.param("w", f.w_opt, true);
          auto img = generator_synthesis_graph(g, f.direct.gen, wn, "gen", true);
          auto pix = g.mean(g.square(g.sub(img, g.constant_view(f.ref_flat))));
          auto feat = image_encoder_graph(g, f.enc_img, img, "enc_img", true);
          auto fl = g.mean(g.square(g.sub(feat, g.constant_view(f.ref_feat))));
          return g.add(g.scale(pix, 0.5), g.scale(fl, 0.5));
        },
        "perceptual-proxy", rng, worst, where);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = worst <= 1e-4 && secs < 120.0;
    report(1, name, ok,
           "worst rel err " + fmt(worst) + " at " + where + ", " + fmt(secs) + "s, " +
               std::to_string(fd_covered.size()) + " param tensors");
  } catch (const std::exception& e) {
    fail_with_exception(1, name, e);
  }
}

// ---------------------------------------------------------------- check 2

void criterion2() {
  const std::string name = "retrieval top-k exactness and cosine identities";
  try {
    Rng rng(41);
    Tensor txt = randn({200, 64}, rng);
    Tensor img = randn({500, 64}, rng);
    // duplicated image rows force exact score ties
    for (auto [dst, src] : {std::pair<std::size_t, std::size_t>{13, 7}, {212, 211}, {0, 499}})
      std::copy(img.data() + src * 64, img.data() + (src + 1) * 64, img.data() + dst * 64);

    const Tensor sim = build_similarity_matrix(txt, img);
    const RetrievalMap map = topk_map(sim, 5);

    bool exact = map.k == 5 && map.n_captions() == 200;
    for (std::size_t c = 0; c < 200 && exact; ++c) {
      std::vector<std::uint32_t> order(500);
      for (std::uint32_t i = 0; i < 500; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (sim.at(c, a) != sim.at(c, b)) return sim.at(c, a) > sim.at(c, b);
        return a < b;
      });
      for (std::size_t j = 0; j < 5; ++j)
        if (map.row(c)[j] != order[j]) exact = false;
    }

    Tensor u = randn({9}, rng);
    Tensor neg = u;
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
    Tensor a({4}), b({4});
    a[0] = 0.37; a[1] = -1.2; a[2] = 0.0; a[3] = 0.0;
    b[0] = 1.2;  b[1] = 0.37; b[2] = 0.0; b[3] = 0.0;  // dot is exactly zero
    const double self_err = std::abs(cosine_similarity(u, u) - 1.0);
    const double anti_err = std::abs(cosine_similarity(u, neg) + 1.0);
    const double orth_err = std::abs(cosine_similarity(a, b));
    const bool ids = self_err <= 1e-12 && anti_err <= 1e-12 && orth_err <= 1e-12;

    report(2, name, exact && ids,
           std::string("200x500 rows ") + (exact ? "exact" : "MISMATCH") +
               ", identity errs " + fmt(self_err) + "/" + fmt(anti_err) + "/" +
               fmt(orth_err));
  } catch (const std::exception& e) {
    fail_with_exception(2, name, e);
  }
}

// ---------------------------------------------------------------- check 3

void criterion3() {
  const std::string name = "hypernet weight contract";
  try {
    EncoderBundle b;
    b.mode = EncoderMode::kHyper;
    Rng r(55);
    b.init(r);

    bool flat_ok = kHyperFlat == 32768 && b.hyper.w2.rows() == kHyperHidden &&
                   b.hyper.w2.cols() == kHyperFlat && b.hyper.b2.size() == kHyperFlat;

    double worst = 0.0;
    Rng rv(56);
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor v = randn({256}, rv);
      const Tensor t = randn({256}, rv);
      // hand-rolled hypernet forward, then reshape and matmul by hand
      std::vector<double> hidden(kHyperHidden);
      for (std::size_t h = 0; h < kHyperHidden; ++h) {
        double s = b.hyper.b1[h];
        for (std::size_t i = 0; i < 256; ++i) s += t[i] * b.hyper.w1.at(i, h);
        hidden[h] = std::max(0.0, s);
      }
      std::vector<double> flat(kHyperFlat);
      for (std::size_t fidx = 0; fidx < kHyperFlat; ++fidx) {
        double s = b.hyper.b2[fidx];
        for (std::size_t h = 0; h < kHyperHidden; ++h) s += hidden[h] * b.hyper.w2.at(h, fidx);
        flat[fidx] = s;
      }
      const Tensor phi = hyper_predict_weights(b, t);
      const Tensor got = encode_visual_hyper(b, v, t);
      for (std::size_t i = 0; i < 256; ++i)
        for (std::size_t j = 0; j < kCondDim; ++j)
          worst = std::max(worst, std::abs(phi.at(i, j) - flat[i * kCondDim + j]));
      for (std::size_t j = 0; j < kCondDim; ++j) {
        double s = b.visual_bias[j];
        for (std::size_t i = 0; i < 256; ++i) s += v[i] * flat[i * kCondDim + j];
        worst = std::max(worst, std::abs(got[j] - s));
      }
    }

    const bool fd_hits = fd_covered.count("g_enc/h_w1") && fd_covered.count("g_enc/h_b1") &&
                         fd_covered.count("g_enc/h_w2") && fd_covered.count("g_enc/h_b2");
    report(3, name, flat_ok && worst <= 1e-12 && fd_hits,
           "flat len " + std::to_string(kHyperFlat) + ", worst dev " + fmt(worst) +
               (fd_hits ? ", hypernet params in gradient sweep"
                        : ", hypernet params MISSING from gradient sweep"));
  } catch (const std::exception& e) {
    fail_with_exception(3, name, e);
  }
}

// ---------------------------------------------------------------- check 4

void criterion4() {
  const std::string name = "loss value oracles";
  try {
    const double ln2 = std::log(2.0);
    Graph g;
    auto zero_logits = g.constant(Tensor({2, 1}));
    const double disc_at_half =
        g.value(disc_bce_loss(g, zero_logits, zero_logits)).scalar_value();
    const double nonsat_at_zero =
        g.value(gen_adv_loss(g, zero_logits, GanLoss::kNonsaturating)).scalar_value();

    Rng rng(71);
    const Tensor feats = randn({3, kEmbedDim}, rng);
    Graph g2;
    auto fnode = g2.constant_view(feats);
    const double l1_equal = g2.value(guide_l1_loss(g2, fnode, fnode)).scalar_value();

    Tensor same({4, kEmbedDim});
    const Tensor proto = randn({kEmbedDim}, rng);
    for (std::size_t r = 0; r < 4; ++r)
      std::copy(proto.data(), proto.data() + kEmbedDim, same.data() + r * kEmbedDim);
    Graph g3;
    const double nce_same =
        g3.value(guide_contrastive_loss(g3, g3.constant_view(same), g3.constant_view(same),
                                        0.1))
            .scalar_value();

    // lambda = 1 total is the bit-exact sum of its two terms
    Graph g4;
    auto logits = g4.constant(randn({2, 1}, rng));
    auto fa = g4.constant(randn({2, kEmbedDim}, rng));
    auto fb = g4.constant(randn({2, kEmbedDim}, rng));
    auto adv = gen_adv_loss(g4, logits, GanLoss::kNonsaturating);
    auto guide = guide_l1_loss(g4, fa, fb);
    auto total = g4.add(adv, g4.scale(guide, 1.0));
    const bool sum_exact = g4.value(total).scalar_value() ==
                           g4.value(adv).scalar_value() + g4.value(guide).scalar_value();

    const bool ok = std::abs(disc_at_half - 2.0 * ln2) <= 1e-9 &&
                    std::abs(nonsat_at_zero - ln2) <= 1e-9 && l1_equal == 0.0 &&
                    std::abs(nce_same - std::log(4.0)) <= 1e-9 && sum_exact;
    report(4, name, ok,
           "disc@0.5=" + fmt(disc_at_half) + ", nonsat@0=" + fmt(nonsat_at_zero) +
               ", l1=" + fmt(l1_equal) + ", nce(batch4)=" + fmt(nce_same) +
               (sum_exact ? ", sum exact" : ", sum NOT exact"));
  } catch (const std::exception& e) {
    fail_with_exception(4, name, e);
  }
}

// ------------------------------------------------------------ checks 5-7

struct Smoke {
  fs::path corpus_dir, embed_dir, map_path, ckpt_path;
  Corpus corpus;
  bool available = false;
};

void criterion5(Smoke& s, const fs::path& work) {
  const std::string name = "training smoke run: finite, deterministic, guidance descends";
  try {
    const PipelineConfig pc;  // stock settings are the smoke settings
    s.corpus_dir = work / "corpus";
    s.embed_dir = work / "embed";
    s.map_path = work / "map.gmap";
    s.ckpt_path = work / "smoke.ntck";

    run_gen_corpus(pc, s.corpus_dir.string());
    std::ofstream null_log("/dev/null");
    run_pretrain(pc, s.corpus_dir.string(), s.embed_dir.string(), null_log);
    run_build_index(pc.k, s.corpus_dir.string(), s.embed_dir.string(), s.map_path.string());

    s.corpus = load_corpus(s.corpus_dir.string());
    const RetrievalMap map = load_retrieval_map(s.map_path.string());
    const TensorStore enc = TensorStore::load((s.embed_dir / "encoders.ntck").string());
    const ImageEncoderParams enc_img = load_image_encoder(enc, "enc_img");
    const TextEncoderParams enc_txt = load_text_encoder(enc, "enc_txt");
    const TrainConfig tc = pc.train_config();

    const fs::path step0 = work / "step0.ntck";
    Trainer a(tc, s.corpus, enc_img, enc_txt, map);
    a.save(step0.string());
    bool finite = true;
    const auto t0 = std::chrono::steady_clock::now();
    a.run([&](const StepMetrics& m) {
      finite = finite && std::isfinite(m.loss_d) && std::isfinite(m.loss_gen) &&
               std::isfinite(m.loss_guide);
    });
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    a.save(s.ckpt_path.string());

    const fs::path twin = work / "twin.ntck";
    Trainer b(tc, s.corpus, enc_img, enc_txt, map);
    b.run();
    b.save(twin.string());
    const auto read_all = [](const fs::path& p) {
      std::ifstream f(p, std::ios::binary);
      std::ostringstream o;
      o << f.rdbuf();
      return o.str();
    };
    const bool identical = read_all(s.ckpt_path) == read_all(twin);
    fs::remove(twin);

    const InferenceModel m0 = InferenceModel::load(step0.string());
    const InferenceModel mt = InferenceModel::load(s.ckpt_path.string());
    const double h0 = heldout_guidance_l1(m0, s.corpus, 200, 7);
    const double ht = heldout_guidance_l1(mt, s.corpus, 200, 7);
    fs::remove(step0);

    const bool ok = finite && secs < 900.0 && identical && ht <= 0.70 * h0;
    s.available = true;
    report(5, name, ok,
           "2000 steps in " + fmt(secs) + "s, " + (finite ? "finite" : "NON-FINITE") + ", " +
               (identical ? "reruns bit-identical" : "reruns DIFFER") + ", held-out guide " +
               fmt(h0) + " -> " + fmt(ht) + " (" + fmt(100.0 * ht / h0) + "%)");
  } catch (const std::exception& e) {
    fail_with_exception(5, name, e);
  }
}

void criterion6(const Smoke& s) {
  const std::string name = "diversity rises when references vary";
  if (!s.available) {
    report(6, name, false, "smoke model unavailable");
    return;
  }
  try {
    const InferenceModel m = InferenceModel::load(s.ckpt_path.string());
    const DiversityComparison d = diversity_ratio(m, s.corpus, 50, 8, 7);
    const bool ok = !d.degenerate && d.ratio_l2 > 1.0 && d.ratio_feat > 1.0;
    report(6, name, ok,
           "ratio_l2=" + fmt(d.ratio_l2) + ", ratio_feat=" + fmt(d.ratio_feat) +
               (d.degenerate ? ", DEGENERATE" : ""));
  } catch (const std::exception& e) {
    fail_with_exception(6, name, e);
  }
}

void criterion7(const Smoke& s) {
  const std::string name = "latent optimization recovers a synthesized target";
  if (!s.available) {
    report(7, name, false, "smoke model unavailable");
    return;
  }
  try {
    InferenceModel m = InferenceModel::load(s.ckpt_path.string());
    const std::uint64_t before = model_hash(m);
    const OptimConfig oc;  // lr 0.02, betas 0.9/0.999, 300 iterations

    std::vector<double> ratios;
    for (int trial = 0; trial < 10; ++trial) {
      Rng rng(700 + trial);
      const auto& tokens = s.corpus.captions[(trial * 191 + 3) % 2000].tokens;
      Rng stats_rng = rng.fork(1);
      const LatentStats st =
          sample_latent_stats(m, tokens, (trial * 53) % 1000, 2000, stats_rng);
      Tensor w_star({1, kWDim});
      for (std::size_t j = 0; j < kWDim; ++j)
        w_star[j] = st.mean[j] + st.stddev[j] * rng.normal();

      Graph g;
      auto img = generator_synthesis_graph(g, m.model.gen, g.constant_view(w_star), "gen",
                                           false);
      const Tensor target = g.value(img).reshaped({num::kImagePixels});

      const OptimizeResult res = latent_optimize(m, tokens, target, oc);
      ratios.push_back(res.trace.back() / res.trace.front());
    }
    std::sort(ratios.begin(), ratios.end());
    const double median = 0.5 * (ratios[4] + ratios[5]);
    const bool frozen = model_hash(m) == before;
    const bool ok = median < 0.10 && frozen;
    report(7, name, ok,
           "median final/initial " + fmt(median) + " over 10 trials, model " +
               (frozen ? "unchanged" : "MUTATED"));
  } catch (const std::exception& e) {
    fail_with_exception(7, name, e);
  }
}

// ---------------------------------------------------------------- check 8

void criterion8() {
  const std::string name = "latent statistics match a streaming oracle";
  try {
    const std::size_t n = kDefaultLatentSamples;
    Corpus corpus = generate_corpus(11, 40, 8);
    InferenceModel m;
    m.config.seed = 11;
    m.config.encoder_mode = EncoderMode::kHyper;
    Rng r(11);
    Rng rm = r.fork(1), ri = r.fork(2), rt = r.fork(3);
    m.model.init(rm, EncoderMode::kHyper, false);
    m.enc_img = ImageEncoderParams(64);
    m.enc_txt = TextEncoderParams(64);
    m.enc_img.init(ri);
    m.enc_txt.init(rt);
    Tensor train_images({40, num::kImagePixels});
    std::copy(corpus.images.data(), corpus.images.data() + train_images.size(),
              train_images.data());
    m.pool_embed = encode_images(m.enc_img, train_images);

    const auto& tokens = corpus.captions[5].tokens;
    const std::size_t ref = 3;
    Rng stats_rng(123);
    const LatentStats st = sample_latent_stats(m, tokens, ref, n, stats_rng);

    // oracle: same draw order, hand-rolled mapping forward, Welford moments
    const Tensor t = encode_text(m.enc_txt, tokens);
    Tensor v({kEmbedDim});
    std::copy(m.pool_embed.data() + ref * kEmbedDim, m.pool_embed.data() + (ref + 1) * kEmbedDim,
              v.data());
    const Tensor t_e = encode_text_cond(m.model.g_enc, t);
    const Tensor v_e = encode_visual_hyper(m.model.g_enc, v, t);
    const GeneratorParams& p = m.model.gen;

    Rng oracle_rng(123);
    std::vector<double> mean(kWDim, 0.0), m2(kWDim, 0.0);
    std::vector<double> x(kNoiseDim + 2 * kCondDim), h1(256), h2(256), w(kWDim);
    for (std::size_t sample = 0; sample < n; ++sample) {
      for (std::size_t j = 0; j < kNoiseDim; ++j) x[j] = oracle_rng.normal();
      for (std::size_t j = 0; j < kCondDim; ++j) x[kNoiseDim + j] = t_e[j];
      for (std::size_t j = 0; j < kCondDim; ++j) x[kNoiseDim + kCondDim + j] = v_e[j];
      for (std::size_t c = 0; c < 256; ++c) {
        double sum = p.map_b1[c];
        for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * p.map_w1.at(i, c);
        h1[c] = std::max(0.0, sum);
      }
      for (std::size_t c = 0; c < 256; ++c) {
        double sum = p.map_b2[c];
        for (std::size_t i = 0; i < 256; ++i) sum += h1[i] * p.map_w2.at(i, c);
        h2[c] = std::max(0.0, sum);
      }
      for (std::size_t c = 0; c < kWDim; ++c) {
        double sum = p.map_b3[c];
        for (std::size_t i = 0; i < 256; ++i) sum += h2[i] * p.map_w3.at(i, c);
        w[c] = sum;
      }
      for (std::size_t c = 0; c < kWDim; ++c) {
        const double delta = w[c] - mean[c];
        mean[c] += delta / double(sample + 1);
        m2[c] += delta * (w[c] - mean[c]);
      }
    }
    double worst = 0.0;
    for (std::size_t c = 0; c < kWDim; ++c) {
      worst = std::max(worst, std::abs(st.mean[c] - mean[c]));
      worst = std::max(worst, std::abs(st.stddev[c] - std::sqrt(m2[c] / double(n))));
    }
    const bool ok = worst <= 1e-9 && st.count == n && kDefaultLatentSamples == 10000;
    report(8, name, ok,
           "n=" + std::to_string(n) + ", worst coordinate dev " + fmt(worst));
  } catch (const std::exception& e) {
    fail_with_exception(8, name, e);
  }
}

// ---------------------------------------------------------------- check 9

void criterion9() {
  const std::string name = "frechet proxy numerics";
  try {
    Rng rng(61);
    const Tensor a = randn({50, 6}, rng);
    const double ident = frechet_proxy(a, a).value;

    // independent gaussians with a known mean offset, 5000 each
    const std::size_t n = 5000, d = 8;
    std::vector<double> shift = {1.0, -0.8, 0.5, 0.0, 1.2, -0.3, 0.7, 0.4};
    double shift_sq = 0.0;
    for (double s : shift) shift_sq += s * s;
    Tensor ga = randn({n, d}, rng);
    Tensor gb = randn({n, d}, rng);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) gb.at(r, c) += shift[c];
    const double mean_case = frechet_proxy(ga, gb).value;
    const double mean_err = std::abs(mean_case - shift_sq) / shift_sq;

    // sign-pattern columns make the sample covariance exactly diagonal
    const int h8[8][8] = {
        {1, 1, 1, 1, 1, 1, 1, 1},       {1, -1, 1, -1, 1, -1, 1, -1},
        {1, 1, -1, -1, 1, 1, -1, -1},   {1, -1, -1, 1, 1, -1, -1, 1},
        {1, 1, 1, 1, -1, -1, -1, -1},   {1, -1, 1, -1, -1, 1, -1, 1},
        {1, 1, -1, -1, -1, -1, 1, 1},   {1, -1, -1, 1, -1, 1, 1, -1},
    };
    const std::vector<double> sa = {0.6, 1.1, 0.35, 2.0};
    const std::vector<double> sb = {1.4, 0.2, 0.9, 0.5};
    Tensor da({8, 4}), db({8, 4});
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        da.at(r, c) = sa[c] * h8[r][c + 1];
        db.at(r, c) = sb[c] * h8[r][c + 1];
      }
    double closed = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      const double va = 8.0 / 7.0 * sa[c] * sa[c];
      const double vb = 8.0 / 7.0 * sb[c] * sb[c];
      const double dsd = std::sqrt(va) - std::sqrt(vb);
      closed += dsd * dsd;  // means are exactly zero
    }
    const double diag_case = frechet_proxy(da, db).value;
    const double diag_err = std::abs(diag_case - closed);

    const Tensor p = randn({40, 6}, rng);
    const Tensor q = randn({30, 6}, rng);
    const double sym_err = std::abs(frechet_proxy(p, q).value - frechet_proxy(q, p).value);

    const bool ok =
        std::abs(ident) <= 1e-8 && mean_err <= 0.05 && diag_err <= 1e-6 && sym_err <= 1e-8;
    report(9, name, ok,
           "identical=" + fmt(ident) + ", mean-shift rel err " + fmt(mean_err) +
               ", diagonal err " + fmt(diag_err) + ", asymmetry " + fmt(sym_err));
  } catch (const std::exception& e) {
    fail_with_exception(9, name, e);
  }
}

// --------------------------------------------------------------- check 10

int run_cli(const std::string& args, const fs::path& capture) {
#ifdef RETGAN_CLI_PATH
  const std::string cmd =
      std::string(RETGAN_CLI_PATH) + " " + args + " >" + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#else
  (void)args;
  (void)capture;
  return -1;
#endif
}

void criterion10(const Smoke& s, const fs::path& work) {
  const std::string name = "ablation harness completes all four variants";
  try {
    PipelineConfig pc;
    // the check pins the corpus and the variant grid, not the step count;
    // 400 steps keeps four sequential trainings inside the suite budget
    pc.steps = 400;
    const fs::path cfg_path = work / "ablate.cfg";
    {
      std::ofstream f(cfg_path);
      f << pc.serialize();
    }
    fs::path corpus_dir = s.corpus_dir;
    if (corpus_dir.empty() || !fs::exists(corpus_dir / "manifest.txt")) {
      corpus_dir = work / "corpus";
      if (run_cli("gen-corpus --config " + cfg_path.string() + " --out-dir " +
                      corpus_dir.string(),
                  work / "gen.log") != 0)
        throw std::runtime_error("gen-corpus failed, see " + (work / "gen.log").string());
    }

    const fs::path out_dir = work / "ablation";
    const fs::path log = work / "ablate.log";
    const int code = run_cli("ablate --config " + cfg_path.string() + " --corpus-dir " +
                                 corpus_dir.string() + " --out-dir " + out_dir.string(),
                             log);
    if (code != 0)
      throw std::runtime_error("ablate exited " + std::to_string(code) + ", see " +
                               log.string());

    std::ifstream table(out_dir / "ablation.txt");
    std::string header;
    std::getline(table, header);
    const bool header_ok =
        header ==
        "variant d_l2_a d_l2_b ratio_l2 d_feat_a d_feat_b ratio_feat frechet_proxy recall_at_5";

    const std::vector<std::string> expected = {"Ret", "Ret-L1", "Ret-Contrast",
                                               "Ret-Hyper-L1"};
    std::size_t rows = 0;
    bool rows_ok = true;
    std::string line;
    while (std::getline(table, line)) {
      if (line.empty()) continue;
      std::istringstream in(line);
      std::string variant;
      in >> variant;
      if (rows >= expected.size() || variant != expected[rows]) rows_ok = false;
      for (int fld = 0; fld < 8; ++fld) {
        double value = 0.0;
        if (!(in >> value) || !std::isfinite(value)) rows_ok = false;
      }
      ++rows;
      rows_ok = rows_ok && fs::exists(out_dir / variant / "ckpt.ntck") &&
                fs::exists(out_dir / variant / "report.txt");
    }
    const bool ok = header_ok && rows == 4 && rows_ok;
    report(10, name, ok,
           std::to_string(rows) + " rows" + (header_ok ? "" : ", BAD HEADER") +
               (rows_ok ? ", all metrics finite" : ", metric/variant MISMATCH"));
  } catch (const std::exception& e) {
    fail_with_exception(10, name, e);
  }
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "retgan_acceptance";
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work);

  criterion1();
  criterion2();
  criterion3();
  criterion4();
  Smoke smoke;
  criterion5(smoke, work);
  criterion6(smoke);
  criterion7(smoke);
  criterion8();
  criterion9();
  criterion10(smoke, work);

  if (failures == 0)
    std::cout << "acceptance: all 10 criteria passed" << std::endl;
  else
    std::cout << "acceptance: " << failures << " criteria FAILED" << std::endl;
  return failures;
}
