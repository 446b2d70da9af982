#include "aceseg/train/optim.hpp"

namespace aceseg {

OptimizerState OptimizerState::for_params(const std::vector<Param<float>>& params) {
  OptimizerState s;
  for (const auto& p : params) s.velocity.push_back(Tensor<float>::zeros(p.value.shape()));
  return s;
}

void sgd_step(const std::vector<Param<float>>& params, OptimizerState& state, double lr, double momentum,
              double weight_decay) {
  if (state.velocity.size() != params.size())
    throw ContractViolation("sgd_step: optimizer state tracks " + std::to_string(state.velocity.size()) +
                            " buffers for " + std::to_string(params.size()) + " parameters");
  for (const auto& p : params)
    if (!p.value.has_grad()) throw UnpopulatedGradientError("sgd_step: no gradient for " + p.name);

  const float lr_f = static_cast<float>(lr);
  const float mom = static_cast<float>(momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float> p = params[i].value;
    const float wd = params[i].decay ? static_cast<float>(weight_decay) : 0.0f;
    auto v = state.velocity[i].mutable_data();
    auto w = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float gd = g[j] + wd * w[j];
      v[j] = mom * v[j] + gd;
      w[j] -= lr_f * v[j];
    }
  }
}

}  // namespace aceseg
