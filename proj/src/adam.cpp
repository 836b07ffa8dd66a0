#include "sgil/adam.hpp"

#include <cmath>

#include "sgil/errors.hpp"

namespace sgil {

std::size_t Adam::add_param(std::string name, std::size_t rows,
                            std::size_t cols) {
  AdamSlot s;
  s.name = std::move(name);
  s.m = DenseMatrix(rows, cols);
  s.v = DenseMatrix(rows, cols);
  slots_.push_back(std::move(s));
  return slots_.size() - 1;
}

void Adam::step(const std::vector<DenseMatrix*>& params,
                const std::vector<const DenseMatrix*>& grads) {
  if (params.size() != slots_.size() || grads.size() != slots_.size())
    throw ShapeError("adam step: expected " + std::to_string(slots_.size()) +
                     " parameter tensors");
  // Validate everything first so a throw leaves parameters and moments
  // untouched.
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const AdamSlot& slot = slots_[s];
    if (!params[s]->same_shape(slot.m) || !grads[s]->same_shape(slot.m))
      throw ShapeError("adam step: shape mismatch on " + slot.name);
    if (!grads[s]->all_finite())
      throw NumericalError("non-finite gradient in " + slot.name +
                           " at step " + std::to_string(t_ + 1));
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    AdamSlot& slot = slots_[s];
    DenseMatrix& p = *params[s];
    const DenseMatrix& g = *grads[s];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g.at_flat(i);
      double& m = slot.m.at_flat(i);
      double& v = slot.v.at_flat(i);
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.at_flat(i) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace sgil
