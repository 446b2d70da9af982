#include <cmath>
#include <string>

#include "aceseg/ops.hpp"

namespace aceseg {

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<T> y = tape.make(a.shape(), {&a, &b});
  T* yd = y.mutable_data().data();
  for (std::size_t i = 0; i < a.numel(); ++i) yd[i] = a.data()[i] + b.data()[i];
  tape.record(y, [a, b, y]() mutable {
    const T* gy = y.grad().data();
    if (a.requires_grad()) {
      T* d = a.mutable_grad().data();
      for (std::size_t i = 0; i < a.numel(); ++i) d[i] += gy[i];
    }
    if (b.requires_grad()) {
      T* d = b.mutable_grad().data();
      for (std::size_t i = 0; i < b.numel(); ++i) d[i] += gy[i];
    }
  });
  return y;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<T> y = tape.make(a.shape(), {&a, &b});
  T* yd = y.mutable_data().data();
  for (std::size_t i = 0; i < a.numel(); ++i) yd[i] = a.data()[i] * b.data()[i];
  tape.record(y, [a, b, y]() mutable {
    const T* gy = y.grad().data();
    // Read both operands before writing: a and b may alias (x ⊙ x).
    const T* ad = a.data().data();
    const T* bd = b.data().data();
    if (a.requires_grad()) {
      T* d = a.mutable_grad().data();
      for (std::size_t i = 0; i < a.numel(); ++i) d[i] += gy[i] * bd[i];
    }
    if (b.requires_grad()) {
      T* d = b.mutable_grad().data();
      for (std::size_t i = 0; i < b.numel(); ++i) d[i] += gy[i] * ad[i];
    }
  });
  return y;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  Tensor<T> y = tape.make(a.shape(), {&a});
  T* yd = y.mutable_data().data();
  for (std::size_t i = 0; i < a.numel(); ++i) yd[i] = a.data()[i] * factor;
  tape.record(y, [a, y, factor]() mutable {
    const T* gy = y.grad().data();
    T* d = a.mutable_grad().data();
    for (std::size_t i = 0; i < a.numel(); ++i) d[i] += gy[i] * factor;
  });
  return y;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> y = tape.make(Shape{}, {&x});
  T s = 0;
  for (T v : x.data()) s += v;
  y.mutable_data()[0] = s;
  tape.record(y, [x, y]() mutable {
    const T g = y.grad()[0];
    T* d = x.mutable_grad().data();
    for (std::size_t i = 0; i < x.numel(); ++i) d[i] += g;
  });
  return y;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, const LabelMap& labels,
                                std::int32_t ignore_index) {
  const Shape s = logits.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w)
    throw ShapeError("softmax_cross_entropy: labels " + std::to_string(labels.n) + "x" + std::to_string(labels.h) +
                     "x" + std::to_string(labels.w) + " do not match logits " + to_string(s));
  const int K = s.c;
  const std::size_t plane = s.plane();
  const T* z = logits.data().data();
  std::size_t count = 0;
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::int32_t lab = labels.values[static_cast<std::size_t>(n) * plane + i];
      if (lab == ignore_index) continue;
      if (lab < 0 || lab >= K)
        throw LabelRangeError("softmax_cross_entropy: label " + std::to_string(lab) + " outside [0, " +
                              std::to_string(K - 1) + "] and not the ignore index");
      const T* zp = z + static_cast<std::size_t>(n) * K * plane + i;
      T mx = zp[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, zp[k * plane]);
      T se = 0;
      for (int k = 0; k < K; ++k) se += std::exp(zp[k * plane] - mx);
      total += static_cast<double>(mx + std::log(se) - zp[static_cast<std::size_t>(lab) * plane]);
      ++count;
    }
  }
  if (count == 0) throw EmptyLossError("softmax_cross_entropy: every pixel is ignored");

  Tensor<T> y = tape.make(Shape{}, {&logits});
  y.mutable_data()[0] = static_cast<T>(total / static_cast<double>(count));
  tape.record(y, [logits, y, labels, ignore_index, count]() mutable {
    const Shape s = logits.shape();
    const int K = s.c;
    const std::size_t plane = s.plane();
    const T scale_g = y.grad()[0] / T(count);
    const T* z = logits.data().data();
    T* d = logits.mutable_grad().data();
    std::vector<T> p(K);
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::int32_t lab = labels.values[static_cast<std::size_t>(n) * plane + i];
        if (lab == ignore_index) continue;
        const std::size_t base = static_cast<std::size_t>(n) * K * plane + i;
        T mx = z[base];
        for (int k = 1; k < K; ++k) mx = std::max(mx, z[base + k * plane]);
        T se = 0;
        for (int k = 0; k < K; ++k) se += (p[k] = std::exp(z[base + k * plane] - mx));
        for (int k = 0; k < K; ++k) {
          const T target = k == lab ? T(1) : T(0);
          d[base + k * plane] += scale_g * (p[k] / se - target);
        }
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out = Tensor<T>::zeros(s);
  const T* z = logits.data().data();
  T* o = out.mutable_data().data();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = static_cast<std::size_t>(n) * s.c * plane + i;
      T mx = z[base];
      for (int k = 1; k < s.c; ++k) mx = std::max(mx, z[base + k * plane]);
      T se = 0;
      for (int k = 0; k < s.c; ++k) se += (o[base + k * plane] = std::exp(z[base + k * plane] - mx));
      for (int k = 0; k < s.c; ++k) o[base + k * plane] /= se;
    }
  }
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out = Tensor<T>::zeros(s);
  const T* src = x.data().data();
  T* dst = out.mutable_data().data();
  for (std::size_t row = 0; row < static_cast<std::size_t>(s.n) * s.c * s.h; ++row)
    for (int c = 0; c < s.w; ++c) dst[row * s.w + c] = src[row * s.w + (s.w - 1 - c)];
  return out;
}

#define ACESEG_INSTANTIATE(T)                                                                        \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                           \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                \
  template Tensor<T> softmax_cross_entropy(Tape<T>&, const Tensor<T>&, const LabelMap&, std::int32_t); \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                             \
  template Tensor<T> flip_horizontal(const Tensor<T>&);

ACESEG_INSTANTIATE(float)
ACESEG_INSTANTIATE(double)
#undef ACESEG_INSTANTIATE

}  // namespace aceseg
