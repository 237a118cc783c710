#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>

#include "retgan/adam.hpp"
#include "retgan/corpus.hpp"
#include "retgan/embedder.hpp"
#include "retgan/encoding.hpp"
#include "retgan/graph.hpp"
#include "retgan/math.hpp"
#include "retgan/retrieval.hpp"
#include "retgan/rng.hpp"

namespace retgan {

constexpr std::size_t kNoiseDim = 64;
constexpr std::size_t kWDim = 128;

struct GeneratorParams {
  // mapping: concat(z, t_e, v_e) = 320 -> 256 -> 256 -> w (128)
  Tensor map_w1{{kNoiseDim + 2 * kCondDim, 256}}, map_b1{{256}};
  Tensor map_w2{{256, 256}}, map_b2{{256}};
  Tensor map_w3{{256, kWDim}}, map_b3{{kWDim}};
  // synthesis: w -> 512 -> 1024 -> 3072, tanh rescaled to [0,1]
  Tensor syn_w1{{kWDim, 512}}, syn_b1{{512}};
  Tensor syn_w2{{512, 1024}}, syn_b2{{1024}};
  Tensor syn_w3{{1024, num::kImagePixels}}, syn_b3{{num::kImagePixels}};

  void init(Rng& rng);
  std::map<std::string, Tensor*> named(const std::string& prefix);
  std::map<std::string, const Tensor*> named(const std::string& prefix) const;
};

struct DiscriminatorParams {
  // trunk: flattened image -> 512 (ReLU) -> 256 feature
  Tensor trunk_w1{{num::kImagePixels, 512}}, trunk_b1{{512}};
  Tensor trunk_w2{{512, 256}}, trunk_b2{{256}};
  // head: concat(feature, t_e, v_e) = 512 -> 128 (ReLU) -> 1 logit
  Tensor head_w1{{256 + 2 * kCondDim, 128}}, head_b1{{128}};
  Tensor head_w2{{128, 1}}, head_b2{{1}};

  void init(Rng& rng);
  std::map<std::string, Tensor*> named(const std::string& prefix);
  std::map<std::string, const Tensor*> named(const std::string& prefix) const;
};

enum class Guidance { kNone, kL1, kContrastive };
enum class GanLoss { kNonsaturating, kMinimax };

struct TrainConfig {
  double lambda = 1.0;
  std::size_t k = 5;
  double lr_g = 3e-3;
  double lr_d = 3e-3;
  std::size_t batch = 16;
  std::size_t steps = 2000;
  Guidance guidance = Guidance::kL1;
  EncoderMode encoder_mode = EncoderMode::kHyper;
  bool hyper_additive = false;
  GanLoss gan_loss = GanLoss::kNonsaturating;
  std::uint64_t seed = 7;
  double tau_g = 0.1;

  std::string serialize() const;                    // flat key = value echo
  static TrainConfig parse(const std::string& text);
};

const char* guidance_name(Guidance g);
Guidance guidance_from(const std::string& name);
const char* gan_loss_name(GanLoss l);
GanLoss gan_loss_from(const std::string& name);
const char* encoder_mode_name(EncoderMode m);
EncoderMode encoder_mode_from(const std::string& name);

/// Generator + discriminator, each with its own conditional encoding bundle.
struct GanModel {
  GeneratorParams gen;
  DiscriminatorParams disc;
  EncoderBundle g_enc;
  EncoderBundle d_enc;

  void init(Rng& rng, EncoderMode mode, bool hyper_additive);
  std::map<std::string, Tensor*> g_side();  // gen/* and g_enc/*
  std::map<std::string, Tensor*> d_side();  // disc/* and d_enc/*
};

// ---- forward builders ----
/// Mapping half: concat(z, t_e, v_e) -> w [B x 128].
Graph::NodeId generator_mapping_graph(Graph& g, const GeneratorParams& p, Graph::NodeId z,
                                      Graph::NodeId t_e, Graph::NodeId v_e,
                                      const std::string& prefix, bool trainable);
/// Synthesis half: w -> image [B x 3072] in [0,1].
Graph::NodeId generator_synthesis_graph(Graph& g, const GeneratorParams& p, Graph::NodeId w,
                                        const std::string& prefix, bool trainable);
/// Returns (image [B x 3072] in [0,1], w [B x 128]).
std::pair<Graph::NodeId, Graph::NodeId> generator_graph(Graph& g, const GeneratorParams& p,
                                                        Graph::NodeId z, Graph::NodeId t_e,
                                                        Graph::NodeId v_e,
                                                        const std::string& prefix,
                                                        bool trainable);
/// Logits [B x 1].
Graph::NodeId discriminator_graph(Graph& g, const DiscriminatorParams& p, Graph::NodeId image,
                                  Graph::NodeId t_e, Graph::NodeId v_e,
                                  const std::string& prefix, bool trainable);

/// Single-sample forward: z [64], t_e/v_e [128] -> ([32 x 32 x 3] image, w [128]).
std::pair<Tensor, Tensor> generator_forward(const GeneratorParams& p, const Tensor& z,
                                            const Tensor& t_e, const Tensor& v_e);
double discriminator_forward(const DiscriminatorParams& p, const Tensor& image,
                             const Tensor& t_e, const Tensor& v_e);

// ---- loss builders (log-probabilities via softplus: finite for any logit) ----
Graph::NodeId gen_adv_loss(Graph& g, Graph::NodeId fake_logits, GanLoss kind);
Graph::NodeId disc_bce_loss(Graph& g, Graph::NodeId real_logits, Graph::NodeId fake_logits);
/// Mean absolute difference in the frozen 256-dim feature space.
Graph::NodeId guide_l1_loss(Graph& g, Graph::NodeId gen_feat, Graph::NodeId target_feat);
/// Symmetric InfoNCE over the batch with cosine similarity at tau_g.
Graph::NodeId guide_contrastive_loss(Graph& g, Graph::NodeId gen_feat, Graph::NodeId target_feat,
                                     double tau_g);

struct StepMetrics {
  std::size_t step = 0;
  double loss_d = 0.0;
  double loss_gen = 0.0;
  double loss_guide = 0.0;
};

/// Alternating GAN trainer: one discriminator update then one generator
/// update per step, on the same sampled batch. The frozen encoders and the
/// train-pool feature matrix are copied in at construction; the corpus and
/// retrieval map must outlive the trainer.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const Corpus& corpus, const ImageEncoderParams& enc_img,
          const TextEncoderParams& enc_txt, const RetrievalMap& map);
  /// Resume from a checkpoint written by save(); continues bit-exactly.
  Trainer(const std::string& ckpt_path, const Corpus& corpus, const RetrievalMap& map);

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  StepMetrics step();
  /// Runs until config().steps, invoking on_step after every step.
  void run(const std::function<void(const StepMetrics&)>& on_step = {});
  void save(const std::string& path) const;

  const TrainConfig& config() const { return cfg_; }
  std::size_t current_step() const { return step_; }
  GanModel& model() { return model_; }
  const GanModel& model() const { return model_; }
  const ImageEncoderParams& image_encoder() const { return enc_img_; }
  const TextEncoderParams& text_encoder() const { return enc_txt_; }
  const Tensor& pool_embeddings() const { return pool_embed_; }

 private:
  void bind_params();
  void precompute_features(const Corpus& corpus);

  TrainConfig cfg_;
  const Corpus* corpus_;
  const RetrievalMap* map_;
  GanModel model_;
  ImageEncoderParams enc_img_;
  TextEncoderParams enc_txt_;
  Tensor pool_embed_;     // [n_train x 256] frozen E_I of train images
  Tensor caption_feats_;  // [2 n_train x 256] frozen E_C of train captions
  Adam adam_g_;
  Adam adam_d_;
  Rng rng_;
  std::size_t step_ = 0;
  std::map<std::string, Tensor*> g_params_;
  std::map<std::string, Tensor*> d_params_;
};

/// Trained model plus everything generation needs, loadable without the
/// corpus: frozen encoders and the train-pool image embeddings ride along
/// in the checkpoint.
struct InferenceModel {
  TrainConfig config;
  GanModel model;
  ImageEncoderParams enc_img;
  TextEncoderParams enc_txt;
  Tensor pool_embed;  // [N_pool x 256]
  std::uint64_t step = 0;

  static InferenceModel load(const std::string& ckpt_path);
};

/// Mean guidance L1 on held-out captions: each caption retrieves its top-1
/// training image as both conditioning and target, z fixed per caption by
/// the seed. Tracks how well guidance transfers off the training set.
double heldout_guidance_l1(const InferenceModel& m, const Corpus& corpus,
                           std::size_t max_captions, std::uint64_t seed);

}  // namespace retgan
