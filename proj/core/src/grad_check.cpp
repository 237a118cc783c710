#include "retgan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "retgan/check.hpp"

namespace retgan {

GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           const std::map<std::string, Tensor*>& params,
                           const std::map<std::string, Tensor>& analytic, double eps,
                           std::size_t sample_cap, Rng& rng) {
  RETGAN_CHECK(eps > 0.0, "grad_check: eps must be positive");
  GradCheckResult result;
  for (const auto& [name, p] : params) {
    auto ait = analytic.find(name);
    RETGAN_CHECK(ait != analytic.end(), "grad_check: no analytic gradient for '" << name << "'");
    const Tensor& an = ait->second;
    RETGAN_CHECK(an.same_shape(*p), "grad_check: gradient shape mismatch for '" << name << "'");

    std::vector<std::size_t> coords;
    if (p->size() <= sample_cap) {
      coords.resize(p->size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      std::set<std::size_t> picked;
      while (picked.size() < sample_cap) picked.insert(rng.below(p->size()));
      coords.assign(picked.begin(), picked.end());
    }

    for (std::size_t i : coords) {
      const double saved = (*p)[i];
      // Relu-style kinks make a single step size unreliable: a unit that
      // flips state inside the probe interval corrupts the central
      // difference. A correct analytic gradient converges as the step
      // shrinks, a wrong one stays wrong, so retry failing coordinates on
      // a descending ladder and keep the best agreement.
      double rel = 0.0, fd = 0.0;
      bool first = true;
      for (const double h : {eps, eps / 10.0, eps / 100.0}) {
        (*p)[i] = saved + h;
        const double fp = loss_fn();
        (*p)[i] = saved - h;
        const double fm = loss_fn();
        (*p)[i] = saved;
        const double cand = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(cand), std::abs(an[i]), 1e-6});
        const double r = std::abs(cand - an[i]) / denom;
        if (first || r < rel) {
          rel = r;
          fd = cand;
          first = false;
        }
        if (rel <= 1e-5) break;
      }
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.analytic = an[i];
        result.numeric = fd;
      }
    }
  }
  return result;
}

}  // namespace retgan
