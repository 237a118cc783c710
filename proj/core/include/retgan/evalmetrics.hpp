#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retgan/corpus.hpp"
#include "retgan/gantrain.hpp"
#include "retgan/retrieval.hpp"
#include "retgan/tensor.hpp"

namespace retgan {

enum class DiversityMode { kVaryNoise, kVaryReference, kVaryBoth };

struct DiversityReport {
  double d_l2 = 0.0;
  double d_feat = 0.0;
  std::size_t captions = 0;
  std::size_t samples = 0;
  DiversityMode mode = DiversityMode::kVaryNoise;
};

struct FrechetProxy {
  double value = 0.0;
  std::size_t dim = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

/// Mean over caption groups of the mean pairwise Euclidean distance between
/// sample rows. Each group is [N_i x D] with N_i >= 2.
double pairwise_diversity(const std::vector<Tensor>& groups);

struct DiversityComparison {
  DiversityReport vary_noise;  // fixed top-1 reference, z varies
  DiversityReport vary_both;   // reference re-drawn from the top-K per sample
  double ratio_l2 = 0.0;
  double ratio_feat = 0.0;
  bool degenerate = false;  // vary-noise diversity below the numerical floor
};

DiversityComparison diversity_ratio(const InferenceModel& m, const Corpus& corpus,
                                    std::size_t captions, std::size_t samples,
                                    std::uint64_t seed);

/// Frechet distance between Gaussians fitted to two feature sets [n x d].
FrechetProxy frechet_proxy(const Tensor& features_a, const Tensor& features_b);

/// Fraction of captions whose ground-truth image index appears in their row.
double recall_at_k(const RetrievalMap& map, const std::vector<std::uint32_t>& ground_truth);

struct EvalSummary {
  DiversityComparison diversity;
  FrechetProxy frechet;
  double recall_at_5 = 0.0;
  std::string report() const;
};

EvalSummary evaluate_model(const InferenceModel& m, const Corpus& corpus, std::size_t captions,
                           std::size_t samples, std::uint64_t seed);

}  // namespace retgan
