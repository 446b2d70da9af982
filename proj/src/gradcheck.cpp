#include "aceseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "aceseg/nn/heads.hpp"
#include "aceseg/ops.hpp"

namespace aceseg {

namespace {

using D = double;
using TensorD = Tensor<D>;

struct Case {
  std::vector<std::pair<std::string, TensorD>> inputs;
  std::function<TensorD(Tape<D>&)> fn;
  double epsilon = 1e-5;
};

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  TensorD uniform(Shape s, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<D> v(s.numel());
    for (auto& x : v) x = d(rng_);
    return TensorD::from(s, std::move(v), true);
  }

  /// Values whose fractional part stays inside [0.05, 0.95], so a sample
  /// point never sits near a grid line where bilinear weights have kinks.
  TensorD off_grid(Shape s, int lo, int hi) {
    std::uniform_int_distribution<int> whole(lo, hi);
    std::uniform_real_distribution<double> frac(0.05, 0.95);
    std::vector<D> v(s.numel());
    for (auto& x : v) x = whole(rng_) + frac(rng_);
    return TensorD::from(s, std::move(v), true);
  }

  /// Magnitudes in [0.1, 1] with random sign, away from the ReLU kink.
  TensorD away_from_zero(Shape s) {
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<D> v(s.numel());
    for (auto& x : v) x = sign(rng_) ? mag(rng_) : -mag(rng_);
    return TensorD::from(s, std::move(v), true);
  }

  LabelMap labels(int n, int h, int w, int k, double ignore_fraction) {
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::bernoulli_distribution ign(ignore_fraction);
    LabelMap m(n, h, w);
    for (auto& v : m.values) v = ign(rng_) ? kIgnoreIndex : cls(rng_);
    return m;
  }

  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

TensorD constant(TensorD t) {
  t.set_requires_grad(false);
  return t;
}

Case conv_case(Sampler& s, ConvParams p, Shape xs) {
  auto x = s.uniform(xs, -1, 1);
  auto w = s.uniform({3, xs.c, p.kernel_h, p.kernel_w}, -1, 1);
  auto b = s.uniform({1, 3, 1, 1}, -1, 1);
  return {{{"x", x}, {"w", w}, {"b", b}}, [=](Tape<D>& t) { return conv2d(t, x, w, b, p); }};
}

Case deform_case(Sampler& s, bool modulated) {
  const auto p = ConvParams::square(3, 1, 1);
  auto x = s.uniform({1, 2, 5, 5}, -1, 1);
  auto w = s.uniform({2, 2, 3, 3}, -1, 1);
  auto off = s.off_grid({1, 18, 5, 5}, -2, 1);
  if (!modulated)
    return {{{"x", x}, {"w", w}, {"offsets", off}},
            [=](Tape<D>& t) { return deform_conv_v1(t, x, w, {off, TensorD{}}, p); }};
  auto mod = s.uniform({1, 9, 5, 5}, 0.1, 0.9);
  return {{{"x", x}, {"w", w}, {"offsets", off}, {"modulation", mod}},
          [=](Tape<D>& t) { return deform_conv_v2(t, x, w, {off, mod}, p); }};
}

/// Head plus classifier over a small C=8 feature map, checked with respect
/// to the features and every parameter.
template <typename H>
Case head_case(Sampler& s, int n, int hw, int out) {
  HeadConfig cfg;
  cfg.in_channels = 8;
  cfg.num_classes = 3;
  auto head = std::make_shared<H>(cfg, s.rng());
  auto clf = std::make_shared<Classifier<D>>(head->out_channels(), cfg.num_classes, s.rng());
  if constexpr (std::is_same_v<H, AceHead<D>>) {
    // Small predictor weights and a half-pixel offset bias keep every
    // sampling point well away from grid lines.
    for (auto& b : head->blocks()) {
      auto pw = b.predictor.weight.mutable_data();
      std::uniform_real_distribution<double> d(-0.02, 0.02);
      for (auto& v : pw) v = d(s.rng());
      auto pb = b.predictor.bias.mutable_data();
      for (int k = 0; k < 2 * b.params.taps(); ++k) pb[k] = 0.5;
    }
  }
  Case c;
  auto f = s.uniform({n, cfg.in_channels, hw, hw}, -1, 1);
  c.inputs.push_back({"features", f});
  ParamList<D> pl;
  head->collect("head", pl);
  clf->collect("classifier", pl);
  for (const auto& p : pl.params) c.inputs.push_back({p.name, p.value});
  c.fn = [=](Tape<D>& t) {
    auto h = head->forward(t, f, Mode::kTrain);
    return classify_and_upsample(t, h, *clf, out, out);
  };
  return c;
}

using Builder = std::function<Case(Sampler&)>;

const std::vector<std::pair<std::string, Builder>>& registry() {
  static const std::vector<std::pair<std::string, Builder>> r = {
      {"conv2d", [](Sampler& s) { return conv_case(s, ConvParams::square(3, 1, 1), {1, 2, 5, 5}); }},
      {"conv2d_atrous", [](Sampler& s) { return conv_case(s, ConvParams::square(3, 1, 2, 2), {1, 2, 7, 6}); }},
      {"conv2d_strided", [](Sampler& s) { return conv_case(s, ConvParams::square(3, 2, 1), {2, 2, 7, 7}); }},
      {"bilinear_sample",
       [](Sampler& s) {
         auto x = s.uniform({1, 2, 4, 5}, -1, 1);
         auto coords = s.off_grid({1, 2, 3, 4}, -1, 4);
         return Case{{{"x", x}, {"coords", coords}}, [=](Tape<D>& t) { return sample_bilinear(t, x, coords); }};
       }},
      {"deform_conv_v1", [](Sampler& s) { return deform_case(s, false); }},
      {"deform_conv_v2", [](Sampler& s) { return deform_case(s, true); }},
      {"offset_predictor",
       [](Sampler& s) {
         const auto p = ConvParams::square(3, 1, 1);
         auto x = s.uniform({1, 2, 4, 4}, -1, 1);
         auto w = s.uniform({27, 2, 3, 3}, -0.5, 0.5);
         auto b = s.uniform({1, 27, 1, 1}, -0.5, 0.5);
         return Case{{{"x", x}, {"w_off", w}, {"b_off", b}}, [=](Tape<D>& t) {
                       auto f = offset_predictor(t, x, w, b, p);
                       return concat_channels(t, std::vector<TensorD>{f.offsets, f.modulation});
                     }};
       }},
      {"batch_norm",
       [](Sampler& s) {
         auto x = s.uniform({2, 3, 3, 3}, -2, 2);
         auto g = s.uniform({1, 3, 1, 1}, 0.5, 1.5);
         auto b = s.uniform({1, 3, 1, 1}, -0.5, 0.5);
         return Case{{{"x", x}, {"gamma", g}, {"beta", b}}, [=](Tape<D>& t) {
                       auto st = BatchNormState<D>::create(3);
                       return batch_norm(t, x, g, b, st, Mode::kTrain);
                     }};
       }},
      {"batch_norm_eval",
       [](Sampler& s) {
         auto x = s.uniform({2, 3, 3, 3}, -2, 2);
         auto g = s.uniform({1, 3, 1, 1}, 0.5, 1.5);
         auto b = s.uniform({1, 3, 1, 1}, -0.5, 0.5);
         auto rm = constant(s.uniform({1, 3, 1, 1}, -0.5, 0.5));
         auto rv = constant(s.uniform({1, 3, 1, 1}, 0.5, 2.0));
         return Case{{{"x", x}, {"gamma", g}, {"beta", b}}, [=](Tape<D>& t) {
                       BatchNormState<D> st{rm, rv};
                       return batch_norm(t, x, g, b, st, Mode::kEval);
                     }};
       }},
      {"relu",
       [](Sampler& s) {
         auto x = s.away_from_zero({1, 2, 4, 4});
         return Case{{{"x", x}}, [=](Tape<D>& t) { return relu(t, x); }};
       }},
      {"sigmoid",
       [](Sampler& s) {
         auto x = s.uniform({1, 2, 4, 4}, -4, 4);
         return Case{{{"x", x}}, [=](Tape<D>& t) { return sigmoid(t, x); }};
       }},
      {"adaptive_avg_pool",
       [](Sampler& s) {
         auto x = s.uniform({2, 2, 7, 5}, -1, 1);
         return Case{{{"x", x}}, [=](Tape<D>& t) { return adaptive_avg_pool(t, x, 3, 2); }};
       }},
      {"global_avg_pool",
       [](Sampler& s) {
         auto x = s.uniform({2, 2, 4, 3}, -1, 1);
         return Case{{{"x", x}}, [=](Tape<D>& t) { return adaptive_avg_pool(t, x, 1, 1); }};
       }},
      {"upsample_bilinear",
       [](Sampler& s) {
         auto x = s.uniform({1, 2, 3, 4}, -1, 1);
         return Case{{{"x", x}}, [=](Tape<D>& t) { return upsample_bilinear(t, x, 7, 9); }};
       }},
      {"broadcast_spatial",
       [](Sampler& s) {
         auto x = s.uniform({2, 3, 1, 1}, -1, 1);
         return Case{{{"x", x}}, [=](Tape<D>& t) { return broadcast_spatial(t, x, 3, 2); }};
       }},
      {"concat_split",
       [](Sampler& s) {
         auto a = s.uniform({2, 2, 3, 3}, -1, 1);
         auto b = s.uniform({2, 3, 3, 3}, -1, 1);
         return Case{{{"a", a}, {"b", b}}, [=](Tape<D>& t) {
                       auto parts = split_channels(t, concat_channels(t, std::vector<TensorD>{a, b}), {1, 3, 1});
                       return concat_channels(t, std::vector<TensorD>{parts[2], mul(t, parts[0], parts[0]), parts[1]});
                     }};
       }},
      {"arithmetic",
       [](Sampler& s) {
         auto a = s.uniform({1, 2, 3, 3}, -1, 1);
         auto b = s.uniform({1, 2, 3, 3}, -1, 1);
         return Case{{{"a", a}, {"b", b}}, [=](Tape<D>& t) { return scale(t, add(t, mul(t, a, b), a), D(1.5)); }};
       }},
      {"softmax_cross_entropy",
       [](Sampler& s) {
         auto z = s.uniform({2, 4, 3, 3}, -3, 3);
         const LabelMap lab = s.labels(2, 3, 3, 4, 0.2);
         return Case{{{"logits", z}}, [=](Tape<D>& t) { return softmax_cross_entropy(t, z, lab); }};
       }},
      {"ppm_head", [](Sampler& s) { return head_case<PpmHead<D>>(s, 3, 6, 6); }},
      {"aspp_head", [](Sampler& s) { return head_case<AsppHead<D>>(s, 3, 6, 6); }},
      {"ace_head", [](Sampler& s) { return head_case<AceHead<D>>(s, 2, 5, 10); }},
  };
  return r;
}

double dot(const TensorD& a, const TensorD& r) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i] * r.data()[i];
  return s;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

GradCheckReport grad_check(const std::string& op, std::uint64_t seed, std::optional<double> epsilon_override,
                           double tolerance) {
  const auto& reg = registry();
  auto it = std::find_if(reg.begin(), reg.end(), [&](const auto& e) { return e.first == op; });
  if (it == reg.end()) throw ConfigError("unknown gradcheck op '" + op + "'");
  if (epsilon_override && !(*epsilon_override > 0)) throw ConfigError("gradcheck epsilon must be positive");

  Sampler sampler(seed);
  Case c = it->second(sampler);
  const double epsilon = epsilon_override.value_or(c.epsilon);

  // Projection weights turn any output into a scalar with a generic gradient.
  TensorD r;
  {
    Tape<D> probe(false);
    r = constant(sampler.uniform(c.fn(probe).shape(), -1, 1));
  }

  for (auto& [_, t] : c.inputs) t.release_grad();
  {
    Tape<D> tape;
    tape.backward(sum(tape, mul(tape, c.fn(tape), r)));
  }

  GradCheckReport report{op, 0.0, tolerance, epsilon, false, {}};
  auto eval = [&] {
    Tape<D> off(false);
    return dot(c.fn(off), r);
  };
  for (auto& [name, t] : c.inputs) {
    GradCheckInput in{name, t.numel()};
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const D keep = values[i];
      values[i] = keep + epsilon;
      const double fp = eval();
      values[i] = keep - epsilon;
      const double fm = eval();
      values[i] = keep;
      const double numeric = (fp - fm) / (2 * epsilon);
      const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
      const double err =
          std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      if (err > in.max_rel_error || i == 0) {
        in.max_rel_error = err;
        in.worst_index = i;
        in.worst_analytic = analytic;
        in.worst_numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, in.max_rel_error);
    report.inputs.push_back(in);
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace aceseg
