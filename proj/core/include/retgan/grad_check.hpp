#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>

#include "retgan/rng.hpp"
#include "retgan/tensor.hpp"

namespace retgan {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares analytic gradients against central finite differences of
/// loss_fn, which must re-evaluate the loss from the current parameter
/// values on every call. Parameters larger than sample_cap elements are
/// probed on sample_cap random coordinates instead of all of them.
/// Relative error per coordinate: |fd - an| / max(|fd|, |an|, 1e-6).
/// Coordinates that disagree at `eps` are retried at eps/10 and eps/100
/// and the best agreement wins; piecewise-linear activations otherwise
/// produce spurious mismatches when a kink falls inside the probe step.
GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           const std::map<std::string, Tensor*>& params,
                           const std::map<std::string, Tensor>& analytic, double eps,
                           std::size_t sample_cap, Rng& rng);

}  // namespace retgan
