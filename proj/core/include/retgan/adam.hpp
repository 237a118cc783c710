#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "retgan/tensor.hpp"

namespace retgan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment tensors are created lazily per
/// parameter name. A parameter whose gradient is exactly all-zero is left
/// untouched for that step, moments included, so a zero gradient is a
/// strict no-op at any optimizer state.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// One update over all named parameters. Gradients may omit names (treated
  /// as zero); a non-finite gradient raises an error naming the parameter.
  void step(std::map<std::string, Tensor*>& params,
            const std::map<std::string, Tensor>& grads);

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }

  /// Checkpoint restore path.
  void restore(std::uint64_t step, std::map<std::string, Tensor> m,
               std::map<std::string, Tensor> v);

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace retgan
