#ifndef CDNET_OPTIMIZER_HPP_
#define CDNET_OPTIMIZER_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "cdnet/errors.hpp"
#include "cdnet/tape.hpp"

namespace cdnet {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

// Adam with bias correction. Every trainable parameter is updated each step
// (an untouched embedding row still moves with its first moment); frozen
// rows are skipped and keep zero moments.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterStore<T>& store, AdamOptions options) : options_(options) {
    for (const auto& p : store) {
      m_.push_back(Tensor<T>::zeros(p.value.shape()));
      v_.push_back(Tensor<T>::zeros(p.value.shape()));
    }
  }

  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return step_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t s) { step_ = s; }

  void step(ParameterStore<T>& store, const Gradients<T>& grads) {
    if (store.size() != m_.size() || grads.size() != m_.size()) {
      throw ContractError("optimizer state does not match the parameter store");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    const T b1 = T(options_.beta1), b2 = T(options_.beta2);
    const T step_size = T(options_.lr / bc1);
    const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
    const T eps = T(options_.eps), wd = T(options_.weight_decay);
    for (std::size_t id = 0; id < store.size(); ++id) {
      Parameter<T>& p = store[id];
      if (!p.trainable) continue;
      const Tensor<T>* g = grads.get(id);
      T* w = p.value.data();
      T* m = m_[id].data();
      T* v = v_[id].data();
      const std::size_t cols = p.value.cols();
      std::vector<std::uint8_t> frozen(p.frozen_rows.empty() ? 0 : p.value.rows(), 0);
      for (std::size_t r : p.frozen_rows) frozen[r] = 1;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        if (!frozen.empty() && frozen[i / cols]) continue;
        T gi = g ? (*g)[i] : T(0);
        if (wd != T(0)) gi += wd * w[i];
        m[i] = b1 * m[i] + (T(1) - b1) * gi;
        v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
        w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
      }
    }
  }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace cdnet

#endif  // CDNET_OPTIMIZER_HPP_
