#include "retgan/gantrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "retgan/check.hpp"
#include "retgan/checkpoint.hpp"
#include "retgan/math.hpp"

namespace retgan {

namespace {
// rng substream tags
constexpr std::uint64_t kDomainModelInit = 0x4d494e49;
constexpr std::uint64_t kDomainTrainLoop = 0x54524149;
constexpr std::uint64_t kDomainHeldout = 0x48454c44;

// pilot hooks, removed once settings are fixed
double pilot_env(const char* name, double dflt) {
  const char* v = std::getenv(name);
  return v ? std::atof(v) : dflt;
}

void init_he(Tensor& w, Rng& rng) {
  const double stddev = std::sqrt(2.0 / double(w.rows()));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
}

void init_linear_out(Tensor& w, Rng& rng) {
  const double stddev = std::sqrt(1.0 / double(w.rows()));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
}

Graph::NodeId affine(Graph& g, Graph::NodeId x, const Tensor& w, const Tensor& b,
                     const std::string& wname, const std::string& bname, bool trainable) {
  return g.add_rowvec(g.matmul(x, g.param(wname, w, trainable)), g.param(bname, b, trainable));
}

}  // namespace

void GeneratorParams::init(Rng& rng) {
  const double out_scale = pilot_env("RETGAN_PILOT_OUTSCALE", 1.0);
  init_he(map_w1, rng);
  init_he(map_w2, rng);
  init_linear_out(map_w3, rng);
  init_he(syn_w1, rng);
  init_he(syn_w2, rng);
  init_linear_out(syn_w3, rng);
  for (std::size_t i = 0; i < map_w3.size(); ++i) map_w3[i] *= out_scale;
  for (std::size_t i = 0; i < syn_w3.size(); ++i) syn_w3[i] *= out_scale;
  map_b1.fill(0.0);
  map_b2.fill(0.0);
  map_b3.fill(0.0);
  syn_b1.fill(0.0);
  syn_b2.fill(0.0);
  syn_b3.fill(0.0);
}

std::map<std::string, Tensor*> GeneratorParams::named(const std::string& prefix) {
  return {{prefix + "/map_w1", &map_w1}, {prefix + "/map_b1", &map_b1},
          {prefix + "/map_w2", &map_w2}, {prefix + "/map_b2", &map_b2},
          {prefix + "/map_w3", &map_w3}, {prefix + "/map_b3", &map_b3},
          {prefix + "/syn_w1", &syn_w1}, {prefix + "/syn_b1", &syn_b1},
          {prefix + "/syn_w2", &syn_w2}, {prefix + "/syn_b2", &syn_b2},
          {prefix + "/syn_w3", &syn_w3}, {prefix + "/syn_b3", &syn_b3}};
}

std::map<std::string, const Tensor*> GeneratorParams::named(const std::string& prefix) const {
  std::map<std::string, const Tensor*> out;
  for (auto& [n, t] : const_cast<GeneratorParams*>(this)->named(prefix)) out[n] = t;
  return out;
}

void DiscriminatorParams::init(Rng& rng) {
  init_he(trunk_w1, rng);
  init_linear_out(trunk_w2, rng);
  init_he(head_w1, rng);
  init_linear_out(head_w2, rng);
  trunk_b1.fill(0.0);
  trunk_b2.fill(0.0);
  head_b1.fill(0.0);
  head_b2.fill(0.0);
}

std::map<std::string, Tensor*> DiscriminatorParams::named(const std::string& prefix) {
  return {{prefix + "/trunk_w1", &trunk_w1}, {prefix + "/trunk_b1", &trunk_b1},
          {prefix + "/trunk_w2", &trunk_w2}, {prefix + "/trunk_b2", &trunk_b2},
          {prefix + "/head_w1", &head_w1},   {prefix + "/head_b1", &head_b1},
          {prefix + "/head_w2", &head_w2},   {prefix + "/head_b2", &head_b2}};
}

std::map<std::string, const Tensor*> DiscriminatorParams::named(const std::string& prefix) const {
  std::map<std::string, const Tensor*> out;
  for (auto& [n, t] : const_cast<DiscriminatorParams*>(this)->named(prefix)) out[n] = t;
  return out;
}

const char* guidance_name(Guidance g) {
  switch (g) {
    case Guidance::kNone: return "none";
    case Guidance::kL1: return "l1";
    case Guidance::kContrastive: return "contrastive";
  }
  return "?";
}

Guidance guidance_from(const std::string& name) {
  if (name == "none") return Guidance::kNone;
  if (name == "l1") return Guidance::kL1;
  if (name == "contrastive") return Guidance::kContrastive;
  RETGAN_CHECK(false, "unknown guidance variant '" << name << "'");
  return Guidance::kNone;
}

const char* gan_loss_name(GanLoss l) {
  return l == GanLoss::kNonsaturating ? "nonsaturating" : "minimax";
}

GanLoss gan_loss_from(const std::string& name) {
  if (name == "nonsaturating") return GanLoss::kNonsaturating;
  if (name == "minimax") return GanLoss::kMinimax;
  RETGAN_CHECK(false, "unknown gan loss '" << name << "'");
  return GanLoss::kNonsaturating;
}

const char* encoder_mode_name(EncoderMode m) {
  return m == EncoderMode::kDirect ? "direct" : "hyper";
}

EncoderMode encoder_mode_from(const std::string& name) {
  if (name == "direct") return EncoderMode::kDirect;
  if (name == "hyper") return EncoderMode::kHyper;
  RETGAN_CHECK(false, "unknown encoder mode '" << name << "'");
  return EncoderMode::kDirect;
}

std::string TrainConfig::serialize() const {
  std::ostringstream out;
  out.precision(17);
  out << "lambda = " << lambda << "\n";
  out << "k = " << k << "\n";
  out << "lr_g = " << lr_g << "\n";
  out << "lr_d = " << lr_d << "\n";
  out << "batch = " << batch << "\n";
  out << "steps = " << steps << "\n";
  out << "guidance = " << guidance_name(guidance) << "\n";
  out << "encoder_mode = " << encoder_mode_name(encoder_mode) << "\n";
  out << "hyper_additive = " << (hyper_additive ? 1 : 0) << "\n";
  out << "gan_loss = " << gan_loss_name(gan_loss) << "\n";
  out << "seed = " << seed << "\n";
  out << "tau_g = " << tau_g << "\n";
  return out.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, eq, value;
    RETGAN_CHECK(ls >> key >> eq >> value && eq == "=",
                 "train config: malformed line '" << line << "'");
    if (key == "lambda") cfg.lambda = std::stod(value);
    else if (key == "k") cfg.k = std::stoul(value);
    else if (key == "lr_g") cfg.lr_g = std::stod(value);
    else if (key == "lr_d") cfg.lr_d = std::stod(value);
    else if (key == "batch") cfg.batch = std::stoul(value);
    else if (key == "steps") cfg.steps = std::stoul(value);
    else if (key == "guidance") cfg.guidance = guidance_from(value);
    else if (key == "encoder_mode") cfg.encoder_mode = encoder_mode_from(value);
    else if (key == "hyper_additive") cfg.hyper_additive = value != "0";
    else if (key == "gan_loss") cfg.gan_loss = gan_loss_from(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "tau_g") cfg.tau_g = std::stod(value);
    else RETGAN_CHECK(false, "train config: unknown key '" << key << "'");
  }
  return cfg;
}

void GanModel::init(Rng& rng, EncoderMode mode, bool hyper_additive) {
  g_enc.mode = mode;
  d_enc.mode = mode;
  g_enc.additive = hyper_additive;
  d_enc.additive = hyper_additive;
  Rng rg = rng.fork(1), rd = rng.fork(2), rge = rng.fork(3), rde = rng.fork(4);
  gen.init(rg);
  disc.init(rd);
  g_enc.init(rge);
  d_enc.init(rde);
}

std::map<std::string, Tensor*> GanModel::g_side() {
  auto m = gen.named("gen");
  for (auto& [n, t] : g_enc.named("g_enc")) m[n] = t;
  return m;
}

std::map<std::string, Tensor*> GanModel::d_side() {
  auto m = disc.named("disc");
  for (auto& [n, t] : d_enc.named("d_enc")) m[n] = t;
  return m;
}

Graph::NodeId generator_mapping_graph(Graph& g, const GeneratorParams& p, Graph::NodeId z,
                                      Graph::NodeId t_e, Graph::NodeId v_e,
                                      const std::string& prefix, bool trainable) {
  auto x = g.concat_cols({z, t_e, v_e});
  auto h1 = g.relu(affine(g, x, p.map_w1, p.map_b1, prefix + "/map_w1", prefix + "/map_b1",
                          trainable));
  auto h2 = g.relu(affine(g, h1, p.map_w2, p.map_b2, prefix + "/map_w2", prefix + "/map_b2",
                          trainable));
  return affine(g, h2, p.map_w3, p.map_b3, prefix + "/map_w3", prefix + "/map_b3", trainable);
}

Graph::NodeId generator_synthesis_graph(Graph& g, const GeneratorParams& p, Graph::NodeId w,
                                        const std::string& prefix, bool trainable) {
  auto s1 = g.relu(affine(g, w, p.syn_w1, p.syn_b1, prefix + "/syn_w1", prefix + "/syn_b1",
                          trainable));
  auto s2 = g.relu(affine(g, s1, p.syn_w2, p.syn_b2, prefix + "/syn_w2", prefix + "/syn_b2",
                          trainable));
  auto raw = g.tanh(affine(g, s2, p.syn_w3, p.syn_b3, prefix + "/syn_w3", prefix + "/syn_b3",
                           trainable));
  return g.scale(g.add_scalar(raw, 1.0), 0.5);
}

std::pair<Graph::NodeId, Graph::NodeId> generator_graph(Graph& g, const GeneratorParams& p,
                                                        Graph::NodeId z, Graph::NodeId t_e,
                                                        Graph::NodeId v_e,
                                                        const std::string& prefix,
                                                        bool trainable) {
  auto w = generator_mapping_graph(g, p, z, t_e, v_e, prefix, trainable);
  return {generator_synthesis_graph(g, p, w, prefix, trainable), w};
}

Graph::NodeId discriminator_graph(Graph& g, const DiscriminatorParams& p, Graph::NodeId image,
                                  Graph::NodeId t_e, Graph::NodeId v_e,
                                  const std::string& prefix, bool trainable) {
  auto h = g.relu(affine(g, image, p.trunk_w1, p.trunk_b1, prefix + "/trunk_w1",
                         prefix + "/trunk_b1", trainable));
  auto feat = affine(g, h, p.trunk_w2, p.trunk_b2, prefix + "/trunk_w2", prefix + "/trunk_b2",
                     trainable);
  auto x = g.concat_cols({feat, t_e, v_e});
  auto hh = g.relu(affine(g, x, p.head_w1, p.head_b1, prefix + "/head_w1", prefix + "/head_b1",
                          trainable));
  return affine(g, hh, p.head_w2, p.head_b2, prefix + "/head_w2", prefix + "/head_b2", trainable);
}

std::pair<Tensor, Tensor> generator_forward(const GeneratorParams& p, const Tensor& z,
                                            const Tensor& t_e, const Tensor& v_e) {
  RETGAN_CHECK(z.size() == kNoiseDim && t_e.size() == kCondDim && v_e.size() == kCondDim,
               "generator_forward: bad input shapes " << z.shape_str() << ", " << t_e.shape_str()
                                                      << ", " << v_e.shape_str());
  Graph g;
  auto [img, w] = generator_graph(g, p, g.constant(z.reshaped({1, kNoiseDim})),
                                  g.constant(t_e.reshaped({1, kCondDim})),
                                  g.constant(v_e.reshaped({1, kCondDim})), "gen", false);
  return {g.value(img).reshaped({num::kImageSide, num::kImageSide, 3}),
          g.value(w).reshaped({kWDim})};
}

double discriminator_forward(const DiscriminatorParams& p, const Tensor& image,
                             const Tensor& t_e, const Tensor& v_e) {
  RETGAN_CHECK(image.size() == num::kImagePixels && t_e.size() == kCondDim &&
                   v_e.size() == kCondDim,
               "discriminator_forward: bad input shapes");
  Graph g;
  auto logit = discriminator_graph(g, p, g.constant(image.reshaped({1, num::kImagePixels})),
                                   g.constant(t_e.reshaped({1, kCondDim})),
                                   g.constant(v_e.reshaped({1, kCondDim})), "disc", false);
  return g.value(logit).scalar_value();
}

// -log sigmoid(x) = softplus(-x) and -log(1 - sigmoid(x)) = softplus(x),
// evaluated directly so no logit can produce -Inf or a dead plateau. A
// hard probability clamp freezes the game once one side wins: the
// nonsaturating generator loss exists precisely to keep gradient flowing
// when D rejects every fake, and clamping took that away.
Graph::NodeId gen_adv_loss(Graph& g, Graph::NodeId fake_logits, GanLoss kind) {
  if (kind == GanLoss::kNonsaturating)
    return g.mean(g.softplus(g.scale(fake_logits, -1.0)));
  return g.scale(g.mean(g.softplus(fake_logits)), -1.0);
}

Graph::NodeId disc_bce_loss(Graph& g, Graph::NodeId real_logits, Graph::NodeId fake_logits) {
  return g.add(g.mean(g.softplus(g.scale(real_logits, -1.0))),
               g.mean(g.softplus(fake_logits)));
}

Graph::NodeId guide_l1_loss(Graph& g, Graph::NodeId gen_feat, Graph::NodeId target_feat) {
  return g.mean(g.abs(g.sub(gen_feat, target_feat)));
}

Graph::NodeId guide_contrastive_loss(Graph& g, Graph::NodeId gen_feat, Graph::NodeId target_feat,
                                     double tau_g) {
  RETGAN_CHECK(g.value(gen_feat).rows() >= 2,
               "guide_contrastive: needs a batch of at least 2 for negatives");
  return g.info_nce(g.cosine_matrix(gen_feat, target_feat), tau_g);
}

// ---- trainer ----

Trainer::Trainer(const TrainConfig& cfg, const Corpus& corpus, const ImageEncoderParams& enc_img,
                 const TextEncoderParams& enc_txt, const RetrievalMap& map)
    : cfg_(cfg),
      corpus_(&corpus),
      map_(&map),
      enc_img_(enc_img),
      enc_txt_(enc_txt),
      adam_g_(AdamConfig{cfg.lr_g, pilot_env("RETGAN_PILOT_B1", 0.9), 0.999, 1e-8}),
      adam_d_(AdamConfig{cfg.lr_d, pilot_env("RETGAN_PILOT_B1", 0.9), 0.999, 1e-8}),
      rng_(Rng(cfg.seed).fork(kDomainTrainLoop)) {
  RETGAN_CHECK(cfg.batch >= 2, "train: batch must be at least 2");
  RETGAN_CHECK(cfg.lambda >= 0.0, "train: lambda must be non-negative");
  RETGAN_CHECK(map.n_captions() == 2 * corpus.manifest.n_train,
               "train: retrieval map covers " << map.n_captions() << " captions, expected "
                                              << 2 * corpus.manifest.n_train);
  Rng init_rng = Rng(cfg.seed).fork(kDomainModelInit);
  model_.init(init_rng, cfg.encoder_mode, cfg.hyper_additive);
  precompute_features(corpus);
  bind_params();
}

void Trainer::precompute_features(const Corpus& corpus) {
  const std::size_t n_train = corpus.manifest.n_train;
  Tensor train_images({n_train, num::kImagePixels});
  std::copy(corpus.images.data(), corpus.images.data() + n_train * num::kImagePixels,
            train_images.data());
  pool_embed_ = encode_images(enc_img_, train_images);
  std::vector<std::vector<std::uint32_t>> tokens;
  for (std::size_t c = 0; c < 2 * n_train; ++c) tokens.push_back(corpus.captions[c].tokens);
  caption_feats_ = encode_texts(enc_txt_, tokens);
}

void Trainer::bind_params() {
  g_params_ = model_.g_side();
  d_params_ = model_.d_side();
}

StepMetrics Trainer::step() {
  const std::size_t B = cfg_.batch;
  const std::size_t n_caps = 2 * corpus_->manifest.n_train;

  std::vector<std::size_t> caps(B);
  Tensor t_feat({B, kEmbedDim}), v_feat({B, kEmbedDim}), real({B, num::kImagePixels});
  for (std::size_t b = 0; b < B; ++b) {
    caps[b] = rng_.below(n_caps);
    const std::uint32_t k1 = sample_reference(*map_, caps[b], rng_);
    std::copy(caption_feats_.data() + caps[b] * kEmbedDim,
              caption_feats_.data() + (caps[b] + 1) * kEmbedDim, t_feat.data() + b * kEmbedDim);
    std::copy(pool_embed_.data() + k1 * kEmbedDim, pool_embed_.data() + (k1 + 1) * kEmbedDim,
              v_feat.data() + b * kEmbedDim);
    const std::size_t img = corpus_->image_of_caption(caps[b]);
    std::copy(corpus_->images.data() + img * num::kImagePixels,
              corpus_->images.data() + (img + 1) * num::kImagePixels,
              real.data() + b * num::kImagePixels);
  }
  Tensor z({B, kNoiseDim});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng_.normal();

  // fake batch for the discriminator phase, values only
  Tensor fake;
  {
    Graph gf;
    auto tf = gf.constant_view(t_feat);
    auto te = text_cond_graph(gf, model_.g_enc, tf, "g_enc", false);
    auto ve = visual_cond_graph(gf, model_.g_enc, gf.constant_view(v_feat), tf, "g_enc", false);
    auto [img, w] = generator_graph(gf, model_.gen, gf.constant_view(z), te, ve, "gen", false);
    (void)w;
    fake = gf.value(img);
  }

  double ld = 0.0;
  {
    Graph gd;
    auto tf = gd.constant_view(t_feat);
    auto te = text_cond_graph(gd, model_.d_enc, tf, "d_enc", true);
    auto ve = visual_cond_graph(gd, model_.d_enc, gd.constant_view(v_feat), tf, "d_enc", true);
    auto lr = discriminator_graph(gd, model_.disc, gd.constant_view(real), te, ve, "disc", true);
    auto lf = discriminator_graph(gd, model_.disc, gd.constant_view(fake), te, ve, "disc", true);
    auto loss = disc_bce_loss(gd, lr, lf);
    ld = gd.value(loss).scalar_value();
    RETGAN_CHECK_RUNTIME(std::isfinite(ld),
                         "train: non-finite discriminator loss at step " << step_);
    auto grads = gd.backward(loss);
    adam_d_.step(d_params_, grads);
  }

  Tensor target_feat;
  if (cfg_.guidance != Guidance::kNone) {
    target_feat = Tensor({B, kEmbedDim});
    for (std::size_t b = 0; b < B; ++b) {
      const std::uint32_t k2 = sample_reference(*map_, caps[b], rng_);
      std::copy(pool_embed_.data() + k2 * kEmbedDim, pool_embed_.data() + (k2 + 1) * kEmbedDim,
                target_feat.data() + b * kEmbedDim);
    }
  }

  double lgen = 0.0, lguide = 0.0;
  {
    Graph gg;
    auto tf = gg.constant_view(t_feat);
    auto te = text_cond_graph(gg, model_.g_enc, tf, "g_enc", true);
    auto ve = visual_cond_graph(gg, model_.g_enc, gg.constant_view(v_feat), tf, "g_enc", true);
    auto [img, w] = generator_graph(gg, model_.gen, gg.constant_view(z), te, ve, "gen", true);
    (void)w;
    auto te_d = text_cond_graph(gg, model_.d_enc, tf, "d_enc", false);
    auto ve_d = visual_cond_graph(gg, model_.d_enc, gg.constant_view(v_feat), tf, "d_enc", false);
    auto logit = discriminator_graph(gg, model_.disc, img, te_d, ve_d, "disc", false);
    auto loss = gen_adv_loss(gg, logit, cfg_.gan_loss);
    lgen = gg.value(loss).scalar_value();
    if (cfg_.guidance != Guidance::kNone) {
      auto gen_feat = image_encoder_graph(gg, enc_img_, img, "enc_img", false);
      auto guide = cfg_.guidance == Guidance::kL1
                       ? guide_l1_loss(gg, gen_feat, gg.constant_view(target_feat))
                       : guide_contrastive_loss(gg, gen_feat, gg.constant_view(target_feat),
                                                cfg_.tau_g);
      lguide = gg.value(guide).scalar_value();
      loss = gg.add(loss, gg.scale(guide, cfg_.lambda));
    }
    const double total = gg.value(loss).scalar_value();
    RETGAN_CHECK_RUNTIME(std::isfinite(total),
                         "train: non-finite generator loss at step " << step_);
    auto grads = gg.backward(loss);
    adam_g_.step(g_params_, grads);
  }

  ++step_;
  return {step_, ld, lgen, lguide};
}

void Trainer::run(const std::function<void(const StepMetrics&)>& on_step) {
  while (step_ < cfg_.steps) {
    const StepMetrics m = step();
    if (on_step) on_step(m);
  }
}

namespace {
void put_group(TensorStore& s, const std::map<std::string, const Tensor*>& group) {
  for (auto& [name, t] : group) s.put(name, *t);
}

void put_adam(TensorStore& s, const std::string& prefix, const Adam& opt) {
  s.put_scalar_u32(prefix + "/step", static_cast<std::uint32_t>(opt.step_count()));
  for (auto& [name, t] : opt.first_moments()) s.put(prefix + "/m/" + name, t);
  for (auto& [name, t] : opt.second_moments()) s.put(prefix + "/v/" + name, t);
}

Adam load_adam(const TensorStore& s, const std::string& prefix, AdamConfig cfg) {
  Adam opt(cfg);
  std::map<std::string, Tensor> m, v;
  for (const std::string& name : s.names_under(prefix + "/m")) m[name] = s.get(prefix + "/m/" + name);
  for (const std::string& name : s.names_under(prefix + "/v")) v[name] = s.get(prefix + "/v/" + name);
  opt.restore(s.get_scalar_u32(prefix + "/step"), std::move(m), std::move(v));
  return opt;
}

std::vector<std::uint32_t> rng_words(const Rng& rng) {
  const std::uint64_t k = rng.key(), c = rng.counter();
  return {std::uint32_t(k & 0xffffffffu), std::uint32_t(k >> 32), std::uint32_t(c & 0xffffffffu),
          std::uint32_t(c >> 32)};
}

Rng rng_from_words(const std::vector<std::uint32_t>& w) {
  RETGAN_CHECK_RUNTIME(w.size() == 4, "checkpoint: rng state must be 4 words");
  return Rng(std::uint64_t(w[0]) | (std::uint64_t(w[1]) << 32),
             std::uint64_t(w[2]) | (std::uint64_t(w[3]) << 32));
}

void configure_model(GanModel& model, const TrainConfig& cfg) {
  model.g_enc.mode = cfg.encoder_mode;
  model.d_enc.mode = cfg.encoder_mode;
  model.g_enc.additive = cfg.hyper_additive;
  model.d_enc.additive = cfg.hyper_additive;
}
}  // namespace

void Trainer::save(const std::string& path) const {
  TensorStore s;
  put_group(s, model_.gen.named("gen"));
  put_group(s, model_.disc.named("disc"));
  put_group(s, model_.g_enc.named("g_enc"));
  put_group(s, model_.d_enc.named("d_enc"));
  put_group(s, enc_img_.named("enc_img"));
  put_group(s, enc_txt_.named("enc_txt"));
  s.put("pool/img_embed", pool_embed_);
  put_adam(s, "adam_g", adam_g_);
  put_adam(s, "adam_d", adam_d_);
  s.put_scalar_u32("meta/step", static_cast<std::uint32_t>(step_));
  s.put_u32("meta/rng", rng_words(rng_));
  s.put_text("config/text", cfg_.serialize());
  s.save(path);
}

Trainer::Trainer(const std::string& ckpt_path, const Corpus& corpus, const RetrievalMap& map)
    : corpus_(&corpus),
      map_(&map),
      adam_g_(AdamConfig{}),
      adam_d_(AdamConfig{}),
      rng_(0) {
  const TensorStore s = TensorStore::load(ckpt_path);
  cfg_ = TrainConfig::parse(s.get_text("config/text"));
  RETGAN_CHECK(map.n_captions() == 2 * corpus.manifest.n_train,
               "train: retrieval map does not match the corpus");
  configure_model(model_, cfg_);
  load_into(s, model_.gen.named("gen"));
  load_into(s, model_.disc.named("disc"));
  load_into(s, model_.g_enc.named("g_enc"));
  load_into(s, model_.d_enc.named("d_enc"));
  enc_img_ = load_image_encoder(s, "enc_img");
  enc_txt_ = load_text_encoder(s, "enc_txt");
  pool_embed_ = s.get("pool/img_embed");
  adam_g_ = load_adam(s, "adam_g", AdamConfig{cfg_.lr_g, pilot_env("RETGAN_PILOT_B1", 0.9), 0.999, 1e-8});
  adam_d_ = load_adam(s, "adam_d", AdamConfig{cfg_.lr_d, pilot_env("RETGAN_PILOT_B1", 0.9), 0.999, 1e-8});
  step_ = s.get_scalar_u32("meta/step");
  rng_ = rng_from_words(s.get_u32("meta/rng"));
  std::vector<std::vector<std::uint32_t>> tokens;
  for (std::size_t c = 0; c < 2 * corpus.manifest.n_train; ++c)
    tokens.push_back(corpus.captions[c].tokens);
  caption_feats_ = encode_texts(enc_txt_, tokens);
  bind_params();
}

InferenceModel InferenceModel::load(const std::string& ckpt_path) {
  const TensorStore s = TensorStore::load(ckpt_path);
  InferenceModel m{TrainConfig::parse(s.get_text("config/text")),
                   GanModel{},
                   load_image_encoder(s, "enc_img"),
                   load_text_encoder(s, "enc_txt"),
                   s.get("pool/img_embed"),
                   s.get_scalar_u32("meta/step")};
  configure_model(m.model, m.config);
  load_into(s, m.model.gen.named("gen"));
  load_into(s, m.model.disc.named("disc"));
  load_into(s, m.model.g_enc.named("g_enc"));
  load_into(s, m.model.d_enc.named("d_enc"));
  return m;
}

double heldout_guidance_l1(const InferenceModel& m, const Corpus& corpus,
                           std::size_t max_captions, std::uint64_t seed) {
  const std::size_t n_train = corpus.manifest.n_train;
  const std::size_t first = 2 * n_train;
  const std::size_t count = std::min(max_captions, corpus.manifest.n_captions() - first);
  RETGAN_CHECK(count > 0, "heldout guidance: no held-out captions");
  std::vector<std::vector<std::uint32_t>> tokens;
  for (std::size_t c = first; c < first + count; ++c)
    tokens.push_back(corpus.captions[c].tokens);
  const Tensor caption_feats = encode_texts(m.enc_txt, tokens);
  const Tensor sim = build_similarity_matrix(caption_feats, m.pool_embed);
  const RetrievalMap top1 = topk_map(sim, 1);

  const Rng base(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t({kEmbedDim});
    std::copy(caption_feats.data() + i * kEmbedDim, caption_feats.data() + (i + 1) * kEmbedDim,
              t.data());
    const std::uint32_t ref = top1.row(i)[0];
    Tensor v({kEmbedDim});
    std::copy(m.pool_embed.data() + ref * kEmbedDim, m.pool_embed.data() + (ref + 1) * kEmbedDim,
              v.data());
    const Tensor t_e = encode_text_cond(m.model.g_enc, t);
    const Tensor v_e = m.config.encoder_mode == EncoderMode::kHyper
                           ? encode_visual_hyper(m.model.g_enc, v, t)
                           : encode_visual_direct(m.model.g_enc, v);
    Rng zr = base.fork(kDomainHeldout, i);
    Tensor z({kNoiseDim});
    for (std::size_t j = 0; j < kNoiseDim; ++j) z[j] = zr.normal();
    const auto [image, w] = generator_forward(m.model.gen, z, t_e, v_e);
    const Tensor gen_feat = encode_image(m.enc_img, image);
    double dist = 0.0;
    for (std::size_t j = 0; j < kEmbedDim; ++j) dist += std::abs(gen_feat[j] - v[j]);
    total += dist / double(kEmbedDim);
  }
  return total / double(count);
}

}  // namespace retgan
