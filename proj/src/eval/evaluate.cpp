#include "aceseg/eval/evaluate.hpp"

#include <algorithm>

#include "aceseg/eval/multiscale.hpp"

namespace aceseg {

ConfusionMatrix evaluate(SegModel& model, const Dataset& data, const std::vector<int>& indices,
                         const EvalOptions& opts) {
  ConfusionMatrix cm(model.num_classes());
  const ScoreFn score = [&model](const Tensor<float>& x) { return model.logits(x); };
  const std::size_t step = static_cast<std::size_t>(std::max(1, opts.batch));
  for (std::size_t i = 0; i < indices.size(); i += step) {
    std::vector<int> chunk(indices.begin() + static_cast<std::ptrdiff_t>(i),
                           indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), i + step)));
    SegBatch b = make_batch(data.select(chunk));
    const auto pred = opts.multiscale ? multiscale_predict(score, b.images, opts.scales, opts.flip)
                                      : plain_predict(score, b.images);
    cm.update(pred, b.labels.values);
  }
  return cm;
}

}  // namespace aceseg
