#include "retgan/adam.hpp"

#include <cmath>

#include "retgan/check.hpp"

namespace retgan {

void Adam::step(std::map<std::string, Tensor*>& params,
                const std::map<std::string, Tensor>& grads) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    RETGAN_CHECK(g.same_shape(*p), "adam: gradient shape " << g.shape_str()
                                       << " does not match parameter '" << name << "' "
                                       << p->shape_str());
    RETGAN_CHECK_RUNTIME(g.all_finite(), "adam: non-finite gradient for parameter '" << name
                                             << "', update rejected");
    bool all_zero = true;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g[i] != 0.0) { all_zero = false; break; }
    if (all_zero) continue;

    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor(p->shape())).first;
      v_.emplace(name, Tensor(p->shape()));
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      (*p)[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::restore(std::uint64_t step, std::map<std::string, Tensor> m,
                   std::map<std::string, Tensor> v) {
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace retgan
