#include <cmath>
#include <memory>
#include <string>

#include "aceseg/ops.hpp"

namespace aceseg {

template <typename T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode) {
  const Shape xs = x.shape();
  const int C = xs.c;
  if (static_cast<int>(gamma.numel()) != C || static_cast<int>(beta.numel()) != C)
    throw ShapeError("batch_norm: affine parameters must have " + std::to_string(C) + " entries");
  if (static_cast<int>(state.running_mean.numel()) != C || static_cast<int>(state.running_var.numel()) != C)
    throw ShapeError("batch_norm: running statistics must have " + std::to_string(C) + " entries");
  const std::size_t plane = xs.plane();
  const std::size_t m = static_cast<std::size_t>(xs.n) * plane;
  if (mode == Mode::kTrain && m == 1)
    throw DegenerateVarianceError("batch_norm: a single value per channel has no variance in train mode");

  const T eps = static_cast<T>(state.eps);
  Tensor<T> y = tape.make(xs, {&x, &gamma, &beta});
  auto xhat = std::make_shared<std::vector<T>>(xs.numel());
  auto inv_std = std::make_shared<std::vector<T>>(C);
  const T* xd = x.data().data();
  T* yd = y.mutable_data().data();

  for (int c = 0; c < C; ++c) {
    T mean;
    T var;
    if (mode == Mode::kTrain) {
      double s = 0;
      for (int n = 0; n < xs.n; ++n) {
        const T* p = xd + (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0;
      for (int n = 0; n < xs.n; ++n) {
        const T* p = xd + (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double biased = ss / static_cast<double>(m);
      const double unbiased = ss / static_cast<double>(m - 1);
      mean = static_cast<T>(mu);
      var = static_cast<T>(biased);
      T& rm = state.running_mean.mutable_data()[c];
      T& rv = state.running_var.mutable_data()[c];
      rm = static_cast<T>((1.0 - state.momentum) * rm + state.momentum * mu);
      rv = static_cast<T>((1.0 - state.momentum) * rv + state.momentum * unbiased);
    } else {
      mean = state.running_mean.data()[c];
      var = state.running_var.data()[c];
    }
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    const T g = gamma.data()[c];
    const T b = beta.data()[c];
    for (int n = 0; n < xs.n; ++n) {
      const std::size_t o = (static_cast<std::size_t>(n) * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (xd[o + i] - mean) * is;
        (*xhat)[o + i] = h;
        yd[o + i] = g * h + b;
      }
    }
  }

  tape.record(y, [x, gamma, beta, y, xhat, inv_std, mode]() mutable {
    const Shape xs = x.shape();
    const int C = xs.c;
    const std::size_t plane = xs.plane();
    const T m = static_cast<T>(static_cast<std::size_t>(xs.n) * plane);
    const T* gy = y.grad().data();
    for (int c = 0; c < C; ++c) {
      T sum_g = 0;
      T sum_gh = 0;
      for (int n = 0; n < xs.n; ++n) {
        const std::size_t o = (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_g += gy[o + i];
          sum_gh += gy[o + i] * (*xhat)[o + i];
        }
      }
      if (gamma.requires_grad()) gamma.mutable_grad()[c] += sum_gh;
      if (beta.requires_grad()) beta.mutable_grad()[c] += sum_g;
      if (!x.requires_grad()) continue;
      T* dx = x.mutable_grad().data();
      const T k = gamma.data()[c] * (*inv_std)[c];
      for (int n = 0; n < xs.n; ++n) {
        const std::size_t o = (static_cast<std::size_t>(n) * C + c) * plane;
        if (mode == Mode::kTrain) {
          for (std::size_t i = 0; i < plane; ++i)
            dx[o + i] += k * (gy[o + i] - sum_g / m - (*xhat)[o + i] * sum_gh / m);
        } else {
          for (std::size_t i = 0; i < plane; ++i) dx[o + i] += k * gy[o + i];
        }
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> y = tape.make(x.shape(), {&x});
  const T* xd = x.data().data();
  T* yd = y.mutable_data().data();
  for (std::size_t i = 0; i < x.numel(); ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);
  tape.record(y, [x, y]() mutable {
    const T* xd = x.data().data();
    const T* gy = y.grad().data();
    T* dx = x.mutable_grad().data();
    for (std::size_t i = 0; i < x.numel(); ++i)
      if (xd[i] > T(0)) dx[i] += gy[i];
  });
  return y;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> y = tape.make(x.shape(), {&x});
  const T* xd = x.data().data();
  T* yd = y.mutable_data().data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    // Split by sign so exp never overflows.
    if (xd[i] >= T(0)) {
      yd[i] = T(1) / (T(1) + std::exp(-xd[i]));
    } else {
      const T e = std::exp(xd[i]);
      yd[i] = e / (T(1) + e);
    }
  }
  tape.record(y, [x, y]() mutable {
    const T* yd = y.data().data();
    const T* gy = y.grad().data();
    T* dx = x.mutable_grad().data();
    for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += gy[i] * yd[i] * (T(1) - yd[i]);
  });
  return y;
}

#define ACESEG_INSTANTIATE(T)                                                                                     \
  template Tensor<T> batch_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&, \
                                Mode);                                                                            \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                                            \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);

ACESEG_INSTANTIATE(float)
ACESEG_INSTANTIATE(double)
#undef ACESEG_INSTANTIATE

}  // namespace aceseg
