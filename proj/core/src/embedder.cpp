#include "retgan/embedder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "retgan/adam.hpp"
#include "retgan/check.hpp"
#include "retgan/checkpoint.hpp"
#include "retgan/math.hpp"
#include "retgan/retrieval.hpp"

namespace retgan {

namespace {
void init_normal(Tensor& t, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
}
}  // namespace

ImageEncoderParams::ImageEncoderParams(std::size_t hidden)
    : w1({num::kPooledDim, hidden}),
      b1({hidden}),
      w2({hidden, hidden}),
      b2({hidden}),
      w3({hidden, kEmbedDim}),
      b3({kEmbedDim}) {}

void ImageEncoderParams::init(Rng& rng, double stddev) {
  init_normal(w1, rng, stddev);
  init_normal(w2, rng, stddev);
  init_normal(w3, rng, stddev);
  b1.fill(0.0);
  b2.fill(0.0);
  b3.fill(0.0);
}

std::map<std::string, Tensor*> ImageEncoderParams::named(const std::string& prefix) {
  return {{prefix + "/w1", &w1}, {prefix + "/b1", &b1}, {prefix + "/w2", &w2},
          {prefix + "/b2", &b2}, {prefix + "/w3", &w3}, {prefix + "/b3", &b3}};
}

std::map<std::string, const Tensor*> ImageEncoderParams::named(const std::string& prefix) const {
  return {{prefix + "/w1", &w1}, {prefix + "/b1", &b1}, {prefix + "/w2", &w2},
          {prefix + "/b2", &b2}, {prefix + "/w3", &w3}, {prefix + "/b3", &b3}};
}

TextEncoderParams::TextEncoderParams(std::size_t hidden)
    : embed({vocabulary().size(), kTokenDim}),
      w1({kTokenDim, hidden}),
      b1({hidden}),
      w2({hidden, kEmbedDim}),
      b2({kEmbedDim}) {}

void TextEncoderParams::init(Rng& rng, double stddev) {
  init_normal(embed, rng, stddev);
  init_normal(w1, rng, stddev);
  init_normal(w2, rng, stddev);
  b1.fill(0.0);
  b2.fill(0.0);
}

std::map<std::string, Tensor*> TextEncoderParams::named(const std::string& prefix) {
  return {{prefix + "/embed", &embed}, {prefix + "/w1", &w1}, {prefix + "/b1", &b1},
          {prefix + "/w2", &w2},       {prefix + "/b2", &b2}};
}

std::map<std::string, const Tensor*> TextEncoderParams::named(const std::string& prefix) const {
  return {{prefix + "/embed", &embed}, {prefix + "/w1", &w1}, {prefix + "/b1", &b1},
          {prefix + "/w2", &w2},       {prefix + "/b2", &b2}};
}

Graph::NodeId image_encoder_graph(Graph& g, const ImageEncoderParams& p, Graph::NodeId images,
                                  const std::string& prefix, bool trainable) {
  auto pooled = g.patch_pool(images);
  auto h1 = g.relu(g.add_rowvec(g.matmul(pooled, g.param(prefix + "/w1", p.w1, trainable)),
                                g.param(prefix + "/b1", p.b1, trainable)));
  auto h2 = g.relu(g.add_rowvec(g.matmul(h1, g.param(prefix + "/w2", p.w2, trainable)),
                                g.param(prefix + "/b2", p.b2, trainable)));
  return g.add_rowvec(g.matmul(h2, g.param(prefix + "/w3", p.w3, trainable)),
                      g.param(prefix + "/b3", p.b3, trainable));
}

Graph::NodeId text_encoder_graph(Graph& g, const TextEncoderParams& p,
                                 const std::vector<std::vector<std::uint32_t>>& token_batch,
                                 const std::string& prefix, bool trainable) {
  for (std::size_t b = 0; b < token_batch.size(); ++b)
    RETGAN_CHECK(!token_batch[b].empty(), "encode_text: empty caption at batch index " << b);
  auto pooled = g.embed_mean(g.param(prefix + "/embed", p.embed, trainable), token_batch);
  auto h1 = g.relu(g.add_rowvec(g.matmul(pooled, g.param(prefix + "/w1", p.w1, trainable)),
                                g.param(prefix + "/b1", p.b1, trainable)));
  return g.add_rowvec(g.matmul(h1, g.param(prefix + "/w2", p.w2, trainable)),
                      g.param(prefix + "/b2", p.b2, trainable));
}

Tensor encode_images(const ImageEncoderParams& p, const Tensor& images) {
  Graph g;
  auto out = image_encoder_graph(g, p, g.constant_view(images), "enc_img", false);
  return g.value(out);
}

Tensor encode_image(const ImageEncoderParams& p, const Tensor& raster) {
  RETGAN_CHECK(raster.size() == num::kImagePixels,
               "encode_image: expected a 32x32x3 raster, got " << raster.shape_str());
  const Tensor batch = raster.reshaped({1, num::kImagePixels});
  return encode_images(p, batch).reshaped({kEmbedDim});
}

Tensor encode_texts(const TextEncoderParams& p,
                    const std::vector<std::vector<std::uint32_t>>& token_batch) {
  Graph g;
  auto out = text_encoder_graph(g, p, token_batch, "enc_txt", false);
  return g.value(out);
}

Tensor encode_text(const TextEncoderParams& p, const std::vector<std::uint32_t>& tokens) {
  return encode_texts(p, {tokens}).reshaped({kEmbedDim});
}

PretrainResult pretrain_contrastive(ImageEncoderParams& img, TextEncoderParams& txt,
                                    const Corpus& corpus, const PretrainConfig& cfg,
                                    const std::function<void(std::size_t, double)>& on_step) {
  RETGAN_CHECK(cfg.batch >= 2, "pretrain: contrastive batch needs at least 2 samples");
  const std::size_t n_train_caps = corpus.manifest.captions_per_image * corpus.manifest.n_train;
  RETGAN_CHECK(n_train_caps >= cfg.batch, "pretrain: corpus smaller than one batch");

  std::map<std::string, Tensor*> params = img.named("enc_img");
  for (auto& [name, t] : txt.named("enc_txt")) params[name] = t;
  Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng(cfg.seed);

  PretrainResult result;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tensor image_batch({cfg.batch, num::kImagePixels});
    std::vector<std::vector<std::uint32_t>> token_batch(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t cap = rng.below(n_train_caps);
      token_batch[b] = corpus.captions[cap].tokens;
      const double* src = corpus.images.data() + corpus.image_of_caption(cap) * num::kImagePixels;
      std::copy(src, src + num::kImagePixels, image_batch.data() + b * num::kImagePixels);
    }
    Graph g;
    auto img_emb = image_encoder_graph(g, img, g.constant(std::move(image_batch)), "enc_img", true);
    auto txt_emb = text_encoder_graph(g, txt, token_batch, "enc_txt", true);
    auto loss = g.info_nce(g.cosine_matrix(txt_emb, img_emb), cfg.temperature);
    const double value = g.value(loss).scalar_value();
    RETGAN_CHECK_RUNTIME(std::isfinite(value),
                         "pretrain: loss diverged (non-finite) at step " << step);
    auto grads = g.backward(loss);
    opt.step(params, grads);
    result.losses.push_back(value);
    if (on_step) on_step(step, value);
  }

  // recall@5 on the held-out split, ground truth = the caption's own image
  const std::size_t n_train = corpus.manifest.n_train;
  const std::size_t n_test = corpus.manifest.n_test;
  Tensor test_images({n_test, num::kImagePixels});
  std::copy(corpus.images.data() + n_train * num::kImagePixels,
            corpus.images.data() + (n_train + n_test) * num::kImagePixels, test_images.data());
  std::vector<std::vector<std::uint32_t>> test_tokens;
  for (std::size_t c = 2 * n_train; c < corpus.manifest.n_captions(); ++c)
    test_tokens.push_back(corpus.captions[c].tokens);
  const Tensor sim = build_similarity_matrix(encode_texts(txt, test_tokens),
                                             encode_images(img, test_images));
  const std::size_t k = std::min<std::size_t>(5, n_test);
  const RetrievalMap map = topk_map(sim, k);
  std::size_t hits = 0;
  for (std::size_t c = 0; c < map.n_captions(); ++c) {
    const std::uint32_t gt = static_cast<std::uint32_t>(c / 2);
    const std::uint32_t* row = map.row(c);
    for (std::size_t j = 0; j < k; ++j)
      if (row[j] == gt) { ++hits; break; }
  }
  result.recall_at_5 = double(hits) / double(map.n_captions());
  return result;
}

namespace {
void write_u32_le(std::ofstream& f, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(buf, 4);
}

std::uint32_t read_u32_le(std::ifstream& f, const std::string& path) {
  char buf[4];
  f.read(buf, 4);
  RETGAN_CHECK_RUNTIME(f.gcount() == 4, "embeddings: truncated file " << path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[i])) << (8 * i);
  return v;
}
}  // namespace

void save_embeddings(const std::string& path, const Tensor& rows) {
  RETGAN_CHECK(rows.rank() == 2, "embeddings: expected [rows x dim], got " << rows.shape_str());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  RETGAN_CHECK_RUNTIME(f.good(), "embeddings: cannot open " << path << " for writing");
  f.write("EMBX", 4);
  write_u32_le(f, 1);
  write_u32_le(f, static_cast<std::uint32_t>(rows.rows()));
  write_u32_le(f, static_cast<std::uint32_t>(rows.cols()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, rows.data() + i, sizeof bits);
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    f.write(buf, 8);
  }
  RETGAN_CHECK_RUNTIME(f.good(), "embeddings: short write to " << path);
}

Tensor load_embeddings(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  RETGAN_CHECK_RUNTIME(f.good(), "embeddings: cannot open " << path);
  char magic[4];
  f.read(magic, 4);
  RETGAN_CHECK_RUNTIME(f.gcount() == 4 && std::string(magic, 4) == "EMBX",
                       "embeddings: " << path << " is not an EMBX file");
  const std::uint32_t version = read_u32_le(f, path);
  RETGAN_CHECK_RUNTIME(version == 1, "embeddings: unsupported version " << version);
  const std::size_t rows = read_u32_le(f, path);
  const std::size_t dim = read_u32_le(f, path);
  Tensor out({rows, dim});
  for (std::size_t i = 0; i < out.size(); ++i) {
    char buf[8];
    f.read(buf, 8);
    RETGAN_CHECK_RUNTIME(f.gcount() == 8, "embeddings: truncated payload in " << path);
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[b])) << (8 * b);
    std::memcpy(out.data() + i, &bits, sizeof bits);
  }
  return out;
}

ImageEncoderParams load_image_encoder(const TensorStore& s, const std::string& prefix) {
  ImageEncoderParams p(s.get(prefix + "/w1").cols());
  load_into(s, p.named(prefix));
  return p;
}

TextEncoderParams load_text_encoder(const TensorStore& s, const std::string& prefix) {
  TextEncoderParams p(s.get(prefix + "/w1").cols());
  load_into(s, p.named(prefix));
  return p;
}

}  // namespace retgan
