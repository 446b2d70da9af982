#include "aceseg/train/model.hpp"

namespace aceseg {

namespace {

ModelConfig normalised(ModelConfig cfg) {
  cfg.head_cfg.in_channels = cfg.backbone.channels;
  return cfg;
}

}  // namespace

SegModel::SegModel(const ModelConfig& cfg) : cfg_(normalised(cfg)) {
  Rng rng(cfg_.seed);
  backbone_ = Backbone<float>(cfg_.backbone, rng);
  head_ = make_head<float>(cfg_.head, cfg_.head_cfg, rng);
  classifier_ = Classifier<float>(head_->out_channels(), cfg_.head_cfg.num_classes, rng);
  aux_classifier_ = Classifier<float>(cfg_.backbone.aux_channels, cfg_.head_cfg.num_classes, rng);
}

SegModel::Output SegModel::forward(Tape<float>& tape, const Tensor<float>& images, Mode mode) {
  const Shape s = images.shape();
  BackboneOutput<float> feats = backbone_.forward(tape, images, mode);
  Tensor<float> h = head_->forward(tape, feats.main, mode);
  return {classify_and_upsample(tape, h, classifier_, s.h, s.w),
          classify_and_upsample(tape, feats.aux, aux_classifier_, s.h, s.w)};
}

Tensor<float> SegModel::logits(const Tensor<float>& images) {
  Tape<float> off(false);
  const Shape s = images.shape();
  BackboneOutput<float> feats = backbone_.forward(off, images, Mode::kEval);
  return classify_and_upsample(off, head_->forward(off, feats.main, Mode::kEval), classifier_, s.h, s.w);
}

ParamList<float> SegModel::parameters() const {
  ParamList<float> pl;
  backbone_.collect("backbone", pl);
  head_->collect("head", pl);
  classifier_.collect("classifier", pl);
  aux_classifier_.collect("aux_classifier", pl);
  return pl;
}

}  // namespace aceseg
