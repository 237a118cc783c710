#pragma once

#include <cstdint>
#include <string>

#include "retgan/embedder.hpp"
#include "retgan/gantrain.hpp"
#include "retgan/inference.hpp"

namespace retgan {

/// Flat "key = value" pipeline configuration; every field has a default and
/// unknown keys are rejected so typos fail loudly.
struct PipelineConfig {
  std::uint64_t seed = 7;

  // corpus
  std::size_t n_train = 1000;
  std::size_t n_test = 200;

  // retrieval
  std::size_t k = 5;

  // GAN training
  double lambda = 1.0;
  double lr_g = 3e-3;
  double lr_d = 3e-3;
  std::size_t batch = 16;
  std::size_t steps = 2000;
  Guidance guidance = Guidance::kL1;
  EncoderMode encoder_mode = EncoderMode::kHyper;
  bool hyper_additive = false;
  GanLoss gan_loss = GanLoss::kNonsaturating;
  double tau_g = 0.1;
  std::size_t checkpoint_every = 0;  // 0 = final save only

  // encoder pretraining
  std::size_t pretrain_batch = 32;
  std::size_t pretrain_steps = 2000;
  double pretrain_lr = 1e-3;
  double tau = 0.1;
  std::size_t embed_img_hidden = 128;
  std::size_t embed_txt_hidden = 128;

  // evaluation
  std::size_t eval_captions = 50;
  std::size_t eval_samples = 8;

  // latent statistics and optimization
  double latent_lr = 0.02;
  double latent_beta1 = 0.9;
  double latent_beta2 = 0.999;
  std::size_t latent_iters = 300;

  static PipelineConfig parse(const std::string& text);
  static PipelineConfig parse_file(const std::string& path);
  std::string serialize() const;

  TrainConfig train_config() const;
  PretrainConfig pretrain_config() const;
  OptimConfig optim_config() const;
};

}  // namespace retgan
