#pragma once

#include <cstdint>
#include <vector>

#include "retgan/gantrain.hpp"
#include "retgan/rng.hpp"
#include "retgan/tensor.hpp"

namespace retgan {

constexpr std::size_t kDefaultLatentSamples = 10000;

struct LatentStats {
  Tensor mean{{kWDim}};
  Tensor stddev{{kWDim}};  // per-coordinate population standard deviation
  std::size_t count = 0;
};

struct OptimConfig {
  double lr = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t iterations = 300;
};

/// Caption as token ids, reference drawn from the training pool by index.
/// Returns a [32 x 32 x 3] image in [0, 1].
Tensor generate(const InferenceModel& m, const std::vector<std::uint32_t>& caption,
                std::size_t reference_index, const Tensor& z);

/// Runs the mapping net n times with fresh z for a fixed caption/reference pair.
LatentStats sample_latent_stats(const InferenceModel& m,
                                const std::vector<std::uint32_t>& caption,
                                std::size_t reference_index, std::size_t n, Rng& rng);

struct OptimizeResult {
  Tensor w{{kWDim}};
  Tensor image;                   // [32 x 32 x 3] synthesis of the final w
  std::vector<double> trace;      // iterations + 1 losses, trace[0] at the init
  std::vector<Tensor> snapshots;  // one image per requested snapshot iteration
};

/// Optimizes w toward an external [32 x 32 x 3] reference image; the model is
/// read-only, only w moves. w starts at the latent mean for this pair.
OptimizeResult latent_optimize(const InferenceModel& m,
                               const std::vector<std::uint32_t>& caption,
                               const Tensor& reference_image, const OptimConfig& cfg,
                               const std::vector<std::size_t>& snapshot_iters = {});

}  // namespace retgan
