#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgil/dense.hpp"

namespace sgil {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One named parameter tensor tracked by the optimizer. The caller owns the
// parameter storage; the optimizer owns the moment buffers.
struct AdamSlot {
  std::string name;
  DenseMatrix m;
  DenseMatrix v;
};

// Standard Adam with bias correction. All slots advance together: step()
// takes one gradient per registered slot, in registration order.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  std::size_t add_param(std::string name, std::size_t rows, std::size_t cols);

  // params[i] is updated in place from grads[i]. Throws NumericalError on a
  // non-finite gradient, naming the parameter and the step.
  void step(const std::vector<DenseMatrix*>& params,
            const std::vector<const DenseMatrix*>& grads);

  std::uint64_t step_count() const { return t_; }
  std::size_t slot_count() const { return slots_.size(); }
  const AdamConfig& config() const { return cfg_; }

  AdamSlot& slot(std::size_t i) { return slots_[i]; }
  const AdamSlot& slot(std::size_t i) const { return slots_[i]; }
  void set_step_count(std::uint64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<AdamSlot> slots_;
};

}  // namespace sgil
