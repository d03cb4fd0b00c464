#include "dquag/adam.hpp"

#include <cmath>

#include "dquag/error.hpp"

namespace dquag::ad {

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ShapeMismatch("adam_step: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        state.first_moment[i].rows() != p.value.rows() || state.first_moment[i].cols() != p.value.cols())
      throw ShapeMismatch("adam_step: parameter " + std::to_string(i) + " shape differs from its state");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= state.learning_rate * (m.array() / correction1) /
                       ((v.array() / correction2).sqrt() + state.eps);
  }
}

}  // namespace dquag::ad
