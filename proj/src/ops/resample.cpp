#include <cmath>
#include <numeric>
#include <string>

#include "aceseg/ops.hpp"

namespace aceseg {

namespace {

std::vector<int> bin_edges(int size, int bins) {
  std::vector<int> e(static_cast<std::size_t>(bins) + 1);
  for (int j = 0; j <= bins; ++j) e[j] = static_cast<int>((static_cast<long long>(j) * size) / bins);
  return e;
}

// Source coordinate for each output index under align_corners.
template <typename T>
struct AxisMap {
  std::vector<int> i0;
  std::vector<int> i1;
  std::vector<T> frac;

  AxisMap(int in, int out) : i0(out), i1(out), frac(out) {
    for (int o = 0; o < out; ++o) {
      const T src = out == 1 ? T(0) : T(o) * T(in - 1) / T(out - 1);
      int a = static_cast<int>(std::floor(src));
      if (a > in - 1) a = in - 1;
      i0[o] = a;
      i1[o] = a + 1 < in ? a + 1 : in - 1;
      frac[o] = src - T(a);
    }
  }
};

}  // namespace

template <typename T>
Tensor<T> adaptive_avg_pool(Tape<T>& tape, const Tensor<T>& x, int bins_h, int bins_w) {
  const Shape xs = x.shape();
  if (bins_h < 1 || bins_w < 1 || bins_h > xs.h || bins_w > xs.w)
    throw GeometryError("adaptive_avg_pool: " + std::to_string(bins_h) + "x" + std::to_string(bins_w) +
                        " bins do not fit a " + std::to_string(xs.h) + "x" + std::to_string(xs.w) + " plane");
  const auto eh = bin_edges(xs.h, bins_h);
  const auto ew = bin_edges(xs.w, bins_w);
  Tensor<T> y = tape.make({xs.n, xs.c, bins_h, bins_w}, {&x});
  T* yd = y.mutable_data().data();
  const T* xd = x.data().data();
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* plane = xd + static_cast<std::size_t>(nc) * xs.plane();
    for (int i = 0; i < bins_h; ++i) {
      for (int j = 0; j < bins_w; ++j) {
        T s = 0;
        for (int r = eh[i]; r < eh[i + 1]; ++r)
          for (int c = ew[j]; c < ew[j + 1]; ++c) s += plane[static_cast<std::size_t>(r) * xs.w + c];
        const int count = (eh[i + 1] - eh[i]) * (ew[j + 1] - ew[j]);
        yd[(static_cast<std::size_t>(nc) * bins_h + i) * bins_w + j] = s / T(count);
      }
    }
  }
  tape.record(y, [x, y, eh, ew, bins_h, bins_w]() mutable {
    const Shape xs = x.shape();
    const T* gy = y.grad().data();
    T* dx = x.mutable_grad().data();
    for (int nc = 0; nc < xs.n * xs.c; ++nc) {
      T* plane = dx + static_cast<std::size_t>(nc) * xs.plane();
      for (int i = 0; i < bins_h; ++i) {
        for (int j = 0; j < bins_w; ++j) {
          const int count = (eh[i + 1] - eh[i]) * (ew[j + 1] - ew[j]);
          const T g = gy[(static_cast<std::size_t>(nc) * bins_h + i) * bins_w + j] / T(count);
          for (int r = eh[i]; r < eh[i + 1]; ++r)
            for (int c = ew[j]; c < ew[j + 1]; ++c) plane[static_cast<std::size_t>(r) * xs.w + c] += g;
        }
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> upsample_bilinear(Tape<T>& tape, const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw GeometryError("upsample_bilinear: empty target size");
  const Shape xs = x.shape();
  const AxisMap<T> my(xs.h, out_h);
  const AxisMap<T> mx(xs.w, out_w);
  Tensor<T> y = tape.make({xs.n, xs.c, out_h, out_w}, {&x});
  T* yd = y.mutable_data().data();
  const T* xd = x.data().data();
  const std::size_t oplane = static_cast<std::size_t>(out_h) * out_w;
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* src = xd + static_cast<std::size_t>(nc) * xs.plane();
    T* dst = yd + static_cast<std::size_t>(nc) * oplane;
    for (int oy = 0; oy < out_h; ++oy) {
      const T fy = my.frac[oy];
      const T* r0 = src + static_cast<std::size_t>(my.i0[oy]) * xs.w;
      const T* r1 = src + static_cast<std::size_t>(my.i1[oy]) * xs.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const T fx = mx.frac[ox];
        const int a = mx.i0[ox];
        const int b = mx.i1[ox];
        const T top = (T(1) - fx) * r0[a] + fx * r0[b];
        const T bot = (T(1) - fx) * r1[a] + fx * r1[b];
        dst[static_cast<std::size_t>(oy) * out_w + ox] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  tape.record(y, [x, y, my, mx, out_h, out_w]() mutable {
    const Shape xs = x.shape();
    const std::size_t oplane = static_cast<std::size_t>(out_h) * out_w;
    const T* gy = y.grad().data();
    T* dx = x.mutable_grad().data();
    for (int nc = 0; nc < xs.n * xs.c; ++nc) {
      T* plane = dx + static_cast<std::size_t>(nc) * xs.plane();
      const T* g = gy + static_cast<std::size_t>(nc) * oplane;
      for (int oy = 0; oy < out_h; ++oy) {
        const T fy = my.frac[oy];
        T* r0 = plane + static_cast<std::size_t>(my.i0[oy]) * xs.w;
        T* r1 = plane + static_cast<std::size_t>(my.i1[oy]) * xs.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const T v = g[static_cast<std::size_t>(oy) * out_w + ox];
          const T fx = mx.frac[ox];
          const int a = mx.i0[ox];
          const int b = mx.i1[ox];
          r0[a] += v * (T(1) - fy) * (T(1) - fx);
          r0[b] += v * (T(1) - fy) * fx;
          r1[a] += v * fy * (T(1) - fx);
          r1[b] += v * fy * fx;
        }
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> broadcast_spatial(Tape<T>& tape, const Tensor<T>& x, int h, int w) {
  const Shape xs = x.shape();
  if (xs.h != 1 || xs.w != 1) throw ShapeError("broadcast_spatial: expected N x C x 1 x 1, got " + to_string(xs));
  if (h < 1 || w < 1) throw GeometryError("broadcast_spatial: empty target size");
  Tensor<T> y = tape.make({xs.n, xs.c, h, w}, {&x});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  T* yd = y.mutable_data().data();
  for (std::size_t i = 0; i < x.numel(); ++i) std::fill(yd + i * plane, yd + (i + 1) * plane, x.data()[i]);
  tape.record(y, [x, y, plane]() mutable {
    const T* gy = y.grad().data();
    T* dx = x.mutable_grad().data();
    for (std::size_t i = 0; i < x.numel(); ++i) {
      T s = 0;
      for (std::size_t j = 0; j < plane; ++j) s += gy[i * plane + j];
      dx[i] += s;
    }
  });
  return y;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape s0 = xs.front().shape();
  int channels = 0;
  for (const auto& t : xs) {
    const Shape s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ShapeError("concat_channels: " + to_string(s) + " does not agree with " + to_string(s0) + " on N, H, W");
    channels += s.c;
  }
  Tensor<T> y = tape.make({s0.n, channels, s0.h, s0.w}, xs);
  const std::size_t plane = s0.plane();
  T* yd = y.mutable_data().data();
  for (int n = 0; n < s0.n; ++n) {
    std::size_t at = static_cast<std::size_t>(n) * channels * plane;
    for (const auto& t : xs) {
      const std::size_t len = static_cast<std::size_t>(t.shape().c) * plane;
      std::copy_n(t.data().data() + n * len, len, yd + at);
      at += len;
    }
  }
  tape.record(y, [xs, y, channels, plane]() mutable {
    const T* gy = y.grad().data();
    const int N = y.shape().n;
    for (int n = 0; n < N; ++n) {
      std::size_t at = static_cast<std::size_t>(n) * channels * plane;
      for (auto& t : xs) {
        const std::size_t len = static_cast<std::size_t>(t.shape().c) * plane;
        if (t.requires_grad()) {
          T* dx = t.mutable_grad().data() + n * len;
          for (std::size_t i = 0; i < len; ++i) dx[i] += gy[at + i];
        }
        at += len;
      }
    }
  });
  return y;
}

template <typename T>
std::vector<Tensor<T>> split_channels(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& sizes) {
  const Shape xs = x.shape();
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  if (total != xs.c) throw ShapeError("split_channels: sizes sum to " + std::to_string(total) + ", tensor has " + std::to_string(xs.c));
  std::vector<Tensor<T>> outs;
  const std::size_t plane = xs.plane();
  int first = 0;
  for (int sz : sizes) {
    if (sz < 1) throw ShapeError("split_channels: empty part");
    Tensor<T> y = tape.make({xs.n, sz, xs.h, xs.w}, {&x});
    T* yd = y.mutable_data().data();
    for (int n = 0; n < xs.n; ++n)
      std::copy_n(x.data().data() + (static_cast<std::size_t>(n) * xs.c + first) * plane, sz * plane,
                  yd + static_cast<std::size_t>(n) * sz * plane);
    tape.record(y, [x, y, first, sz, plane]() mutable {
      const Shape xs = x.shape();
      const T* gy = y.grad().data();
      T* dx = x.mutable_grad().data();
      for (int n = 0; n < xs.n; ++n) {
        T* d = dx + (static_cast<std::size_t>(n) * xs.c + first) * plane;
        const T* g = gy + static_cast<std::size_t>(n) * sz * plane;
        for (std::size_t i = 0; i < sz * plane; ++i) d[i] += g[i];
      }
    });
    outs.push_back(y);
    first += sz;
  }
  return outs;
}

#define ACESEG_INSTANTIATE(T)                                                                       \
  template Tensor<T> adaptive_avg_pool(Tape<T>&, const Tensor<T>&, int, int);                       \
  template Tensor<T> upsample_bilinear(Tape<T>&, const Tensor<T>&, int, int);                       \
  template Tensor<T> broadcast_spatial(Tape<T>&, const Tensor<T>&, int, int);                       \
  template Tensor<T> concat_channels(Tape<T>&, const std::vector<Tensor<T>>&);                      \
  template std::vector<Tensor<T>> split_channels(Tape<T>&, const Tensor<T>&, const std::vector<int>&);

ACESEG_INSTANTIATE(float)
ACESEG_INSTANTIATE(double)
#undef ACESEG_INSTANTIATE

}  // namespace aceseg
