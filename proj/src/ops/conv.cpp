#include <cmath>
#include <memory>
#include <string>

#include "aceseg/kernels/simd.hpp"
#include "aceseg/ops.hpp"

namespace aceseg {

std::string to_string(const Shape& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << to_string(s); }

int conv_output_size(int in, int kernel, int stride, int padding, int dilation) {
  if (kernel < 1 || stride < 1 || padding < 0 || dilation < 1)
    throw GeometryError("invalid convolution geometry (kernel " + std::to_string(kernel) + ", stride " +
                        std::to_string(stride) + ", padding " + std::to_string(padding) + ", dilation " +
                        std::to_string(dilation) + ")");
  const int span = in + 2 * padding - dilation * (kernel - 1) - 1;
  const int out = span < 0 ? 0 : span / stride + 1;
  if (out < 1)
    throw GeometryError("convolution output would be empty for input extent " + std::to_string(in));
  return out;
}

int ConvParams::out_h(int in_h) const { return conv_output_size(in_h, kernel_h, stride, padding, dilation); }
int ConvParams::out_w(int in_w) const { return conv_output_size(in_w, kernel_w, stride, padding, dilation); }
void ConvParams::validate() const {
  if (kernel_h < 1 || kernel_w < 1 || stride < 1 || padding < 0 || dilation < 1)
    throw GeometryError("invalid convolution parameters");
}

namespace {

template <typename T>
void check_conv_operands(const Tensor<T>& x, const Tensor<T>& w, const ConvParams& p, const char* op) {
  p.validate();
  if (!x.defined() || !w.defined()) throw ShapeError(std::string(op) + ": undefined operand");
  if (w.shape().c != x.shape().c)
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.shape().c) +
                     " channels but weight expects " + std::to_string(w.shape().c));
  if (w.shape().h != p.kernel_h || w.shape().w != p.kernel_w)
    throw ShapeError(std::string(op) + ": weight " + to_string(w.shape()) + " does not match kernel " +
                     std::to_string(p.kernel_h) + "x" + std::to_string(p.kernel_w));
}

// Column matrix layout: row (c * K + ki * kw + kj), column (oh * Wo + ow).
template <typename T>
void im2col(const T* x, int channels, int h, int w, const ConvParams& p, int ho, int wo, T* cols) {
  const int hw = ho * wo;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < p.kernel_h; ++ki) {
      for (int kj = 0; kj < p.kernel_w; ++kj) {
        T* row = cols + (static_cast<std::size_t>(c) * p.taps() + ki * p.kernel_w + kj) * hw;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * p.stride - p.padding + ki * p.dilation;
          T* dst = row + static_cast<std::size_t>(oh) * wo;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * p.stride - p.padding + kj * p.dilation;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int channels, int h, int w, const ConvParams& p, int ho, int wo, T* dx) {
  const int hw = ho * wo;
  for (int c = 0; c < channels; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < p.kernel_h; ++ki) {
      for (int kj = 0; kj < p.kernel_w; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(c) * p.taps() + ki * p.kernel_w + kj) * hw;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * p.stride - p.padding + ki * p.dilation;
          if (ih < 0 || ih >= h) continue;
          const T* src = row + static_cast<std::size_t>(oh) * wo;
          T* dst = plane + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * p.stride - p.padding + kj * p.dilation;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Shared tail of both convolution flavours once the column matrices exist:
// y_n = W * cols_n (+ b).
template <typename T>
void gemm_forward(const Tensor<T>& w, const Tensor<T>& b, const T* cols, int cout, int ckk, int hw, T* y) {
  if (b.defined()) {
    for (int co = 0; co < cout; ++co) std::fill(y + static_cast<std::size_t>(co) * hw, y + static_cast<std::size_t>(co + 1) * hw, b.data()[co]);
  }
  kernels::gemm(cout, hw, ckk, w.data().data(), ckk, cols, hw, y, hw);
}

// dW += gy_n * cols_n^T, computed as a plain gemm against an explicit
// transpose so only one SIMD micro-kernel is needed.
template <typename T>
void accumulate_weight_grad(const T* gy, const T* cols, int cout, int ckk, int hw, std::vector<T>& scratch, T* dw) {
  scratch.resize(static_cast<std::size_t>(hw) * ckk);
  kernels::transpose(ckk, hw, cols, scratch.data());
  kernels::gemm(cout, ckk, hw, gy, hw, scratch.data(), ckk, dw, ckk);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvParams& p) {
  check_conv_operands(x, w, p, "conv2d");
  const Shape xs = x.shape();
  const int cout = w.shape().n;
  if (b.defined() && static_cast<int>(b.numel()) != cout)
    throw ShapeError("conv2d: bias has " + std::to_string(b.numel()) + " entries, expected " + std::to_string(cout));
  const int ho = p.out_h(xs.h);
  const int wo = p.out_w(xs.w);
  const int hw = ho * wo;
  const int ckk = xs.c * p.taps();
  const bool direct = p.kernel_h == 1 && p.kernel_w == 1 && p.stride == 1 && p.padding == 0;

  Tensor<T> y = tape.make({xs.n, cout, ho, wo}, {&x, &w, &b});
  const bool keep = y.requires_grad();
  auto cols = std::make_shared<std::vector<T>>();
  if (!direct) cols->resize(static_cast<std::size_t>(keep ? xs.n : 1) * ckk * hw);

  const std::size_t x_stride = static_cast<std::size_t>(xs.c) * xs.plane();
  const std::size_t y_stride = static_cast<std::size_t>(cout) * hw;
  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.data().data() + n * x_stride;
    const T* cn = xn;
    if (!direct) {
      T* dst = cols->data() + (keep ? static_cast<std::size_t>(n) * ckk * hw : 0);
      im2col(xn, xs.c, xs.h, xs.w, p, ho, wo, dst);
      cn = dst;
    }
    gemm_forward(w, b, cn, cout, ckk, hw, y.mutable_data().data() + n * y_stride);
  }

  tape.record(y, [x, w, b, y, p, cols, direct, ho, wo, hw, ckk, cout]() mutable {
    const Shape xs = x.shape();
    const T* gy = y.grad().data();
    const std::size_t x_stride = static_cast<std::size_t>(xs.c) * xs.plane();
    const std::size_t y_stride = static_cast<std::size_t>(cout) * hw;
    std::vector<T> scratch;
    std::vector<T> wt;
    std::vector<T> dcols;
    if (x.requires_grad()) {
      wt.resize(static_cast<std::size_t>(ckk) * cout);
      kernels::transpose(cout, ckk, w.data().data(), wt.data());
      if (!direct) dcols.resize(static_cast<std::size_t>(ckk) * hw);
    }
    for (int n = 0; n < xs.n; ++n) {
      const T* gyn = gy + n * y_stride;
      const T* cn = direct ? x.data().data() + n * x_stride : cols->data() + static_cast<std::size_t>(n) * ckk * hw;
      if (w.requires_grad()) accumulate_weight_grad(gyn, cn, cout, ckk, hw, scratch, w.mutable_grad().data());
      if (b.defined() && b.requires_grad()) {
        T* db = b.mutable_grad().data();
        for (int co = 0; co < cout; ++co) {
          const T* g = gyn + static_cast<std::size_t>(co) * hw;
          T s = 0;
          for (int i = 0; i < hw; ++i) s += g[i];
          db[co] += s;
        }
      }
      if (x.requires_grad()) {
        T* dxn = x.mutable_grad().data() + n * x_stride;
        if (direct) {
          kernels::gemm(ckk, hw, cout, wt.data(), cout, gyn, hw, dxn, hw);
        } else {
          std::fill(dcols.begin(), dcols.end(), T(0));
          kernels::gemm(ckk, hw, cout, wt.data(), cout, gyn, hw, dcols.data(), hw);
          col2im_add(dcols.data(), xs.c, xs.h, xs.w, p, ho, wo, dxn);
        }
      }
    }
  });
  return y;
}

template <typename T>
BilinearSample<T> bilinear_sample_grad(const T* plane, int h, int w, T row, T col) {
  if (!(row > T(-1)) || !(row < T(h)) || !(col > T(-1)) || !(col < T(w))) return {T(0), T(0), T(0)};
  const T r0f = std::floor(row);
  const T c0f = std::floor(col);
  const int r0 = static_cast<int>(r0f);
  const int c0 = static_cast<int>(c0f);
  const T fr = row - r0f;
  const T fc = col - c0f;
  auto at = [&](int r, int c) -> T {
    return (r >= 0 && r < h && c >= 0 && c < w) ? plane[static_cast<std::size_t>(r) * w + c] : T(0);
  };
  const T v00 = at(r0, c0), v01 = at(r0, c0 + 1), v10 = at(r0 + 1, c0), v11 = at(r0 + 1, c0 + 1);
  BilinearSample<T> s;
  s.value = (T(1) - fr) * (T(1) - fc) * v00 + (T(1) - fr) * fc * v01 + fr * (T(1) - fc) * v10 + fr * fc * v11;
  s.d_row = (T(1) - fc) * (v10 - v00) + fc * (v11 - v01);
  s.d_col = (T(1) - fr) * (v01 - v00) + fr * (v11 - v10);
  return s;
}

template <typename T>
T bilinear_sample(std::span<const T> plane, int h, int w, T row, T col) {
  if (plane.size() != static_cast<std::size_t>(h) * w) throw ShapeError("bilinear_sample: plane size mismatch");
  return bilinear_sample_grad(plane.data(), h, w, row, col).value;
}

namespace {

// Adds g into the four neighbours of (row, col) with bilinear weights.
template <typename T>
void bilinear_scatter(T* plane, int h, int w, T row, T col, T g) {
  if (!(row > T(-1)) || !(row < T(h)) || !(col > T(-1)) || !(col < T(w))) return;
  const T r0f = std::floor(row);
  const T c0f = std::floor(col);
  const int r0 = static_cast<int>(r0f);
  const int c0 = static_cast<int>(c0f);
  const T fr = row - r0f;
  const T fc = col - c0f;
  auto put = [&](int r, int c, T v) {
    if (r >= 0 && r < h && c >= 0 && c < w) plane[static_cast<std::size_t>(r) * w + c] += v;
  };
  put(r0, c0, g * (T(1) - fr) * (T(1) - fc));
  put(r0, c0 + 1, g * (T(1) - fr) * fc);
  put(r0 + 1, c0, g * fr * (T(1) - fc));
  put(r0 + 1, c0 + 1, g * fr * fc);
}

}  // namespace

template <typename T>
Tensor<T> sample_bilinear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& coords) {
  const Shape xs = x.shape();
  const Shape cs = coords.shape();
  if (cs.n != xs.n || cs.c != 2) throw ShapeError("sample_bilinear: coords must be N x 2 x P x Q, got " + to_string(cs));
  Tensor<T> y = tape.make({xs.n, xs.c, cs.h, cs.w}, {&x, &coords});
  const std::size_t pq = cs.plane();
  T* out = y.mutable_data().data();
  for (int n = 0; n < xs.n; ++n) {
    const T* rows = coords.data().data() + (static_cast<std::size_t>(n) * 2) * pq;
    const T* colv = rows + pq;
    for (int c = 0; c < xs.c; ++c) {
      const T* plane = x.data().data() + (static_cast<std::size_t>(n) * xs.c + c) * xs.plane();
      T* dst = out + (static_cast<std::size_t>(n) * xs.c + c) * pq;
      for (std::size_t i = 0; i < pq; ++i) dst[i] = bilinear_sample_grad(plane, xs.h, xs.w, rows[i], colv[i]).value;
    }
  }
  tape.record(y, [x, coords, y]() mutable {
    const Shape xs = x.shape();
    const std::size_t pq = coords.shape().plane();
    const T* gy = y.grad().data();
    for (int n = 0; n < xs.n; ++n) {
      const T* rows = coords.data().data() + (static_cast<std::size_t>(n) * 2) * pq;
      const T* colv = rows + pq;
      for (int c = 0; c < xs.c; ++c) {
        const std::size_t po = (static_cast<std::size_t>(n) * xs.c + c) * xs.plane();
        const T* plane = x.data().data() + po;
        const T* g = gy + (static_cast<std::size_t>(n) * xs.c + c) * pq;
        for (std::size_t i = 0; i < pq; ++i) {
          if (x.requires_grad()) bilinear_scatter(x.mutable_grad().data() + po, xs.h, xs.w, rows[i], colv[i], g[i]);
          if (coords.requires_grad()) {
            const auto s = bilinear_sample_grad(plane, xs.h, xs.w, rows[i], colv[i]);
            T* dc = coords.mutable_grad().data() + (static_cast<std::size_t>(n) * 2) * pq;
            dc[i] += g[i] * s.d_row;
            dc[pq + i] += g[i] * s.d_col;
          }
        }
      }
    }
  });
  return y;
}

namespace {

template <typename T>
Tensor<T> deform_conv_impl(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& offsets,
                           const Tensor<T>& modulation, const ConvParams& p, const char* op) {
  check_conv_operands(x, w, p, op);
  const Shape xs = x.shape();
  const int K = p.taps();
  const int ho = p.out_h(xs.h);
  const int wo = p.out_w(xs.w);
  const int hw = ho * wo;
  const int cout = w.shape().n;
  const int ckk = xs.c * K;
  if (!offsets.defined()) throw ShapeError(std::string(op) + ": offsets missing");
  const Shape os = offsets.shape();
  if (os.c != 2 * K)
    throw ShapeError(std::string(op) + ": offset field has " + std::to_string(os.c) + " channels, expected 2K = " +
                     std::to_string(2 * K));
  if (os.n != xs.n || os.h != ho || os.w != wo)
    throw ShapeError(std::string(op) + ": offset field " + to_string(os) + " does not cover output " +
                     std::to_string(ho) + "x" + std::to_string(wo));
  const bool modulated = modulation.defined();
  if (modulated) {
    const Shape ms = modulation.shape();
    if (ms.c != K)
      throw ShapeError(std::string(op) + ": modulation has " + std::to_string(ms.c) + " channels, expected K = " +
                       std::to_string(K));
    if (ms.n != xs.n || ms.h != ho || ms.w != wo)
      throw ShapeError(std::string(op) + ": modulation " + to_string(ms) + " does not cover output");
  }

  Tensor<T> y = modulated ? tape.make({xs.n, cout, ho, wo}, {&x, &w, &offsets, &modulation})
                          : tape.make({xs.n, cout, ho, wo}, {&x, &w, &offsets});
  const bool keep = y.requires_grad();
  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(keep ? xs.n : 1) * ckk * hw);

  // Sampling position of tap (ki, kj) at output (oh, ow) is the dilated
  // grid point plus the learned (Δrow, Δcol).
  auto fill_cols = [&](int n, T* dst) {
    const T* xn = x.data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* off = offsets.data().data() + static_cast<std::size_t>(n) * 2 * K * hw;
    const T* mod = modulated ? modulation.data().data() + static_cast<std::size_t>(n) * K * hw : nullptr;
    for (int c = 0; c < xs.c; ++c) {
      const T* plane = xn + static_cast<std::size_t>(c) * xs.plane();
      for (int k = 0; k < K; ++k) {
        const int ki = k / p.kernel_w;
        const int kj = k % p.kernel_w;
        const T* dr = off + static_cast<std::size_t>(2 * k) * hw;
        const T* dc = off + static_cast<std::size_t>(2 * k + 1) * hw;
        T* row = dst + (static_cast<std::size_t>(c) * K + k) * hw;
        for (int oh = 0; oh < ho; ++oh) {
          for (int ow = 0; ow < wo; ++ow) {
            const int i = oh * wo + ow;
            const T pr = T(oh * p.stride - p.padding + ki * p.dilation) + dr[i];
            const T pc = T(ow * p.stride - p.padding + kj * p.dilation) + dc[i];
            T v = bilinear_sample_grad(plane, xs.h, xs.w, pr, pc).value;
            if (mod) v *= mod[static_cast<std::size_t>(k) * hw + i];
            row[i] = v;
          }
        }
      }
    }
  };

  const std::size_t y_stride = static_cast<std::size_t>(cout) * hw;
  for (int n = 0; n < xs.n; ++n) {
    T* dst = cols->data() + (keep ? static_cast<std::size_t>(n) * ckk * hw : 0);
    fill_cols(n, dst);
    gemm_forward(w, Tensor<T>{}, dst, cout, ckk, hw, y.mutable_data().data() + n * y_stride);
  }

  tape.record(y, [x, w, offsets, modulation, y, p, cols, modulated, K, ho, wo, hw, ckk, cout]() mutable {
    const Shape xs = x.shape();
    const T* gy = y.grad().data();
    const std::size_t y_stride = static_cast<std::size_t>(cout) * hw;
    const bool need_sample_grads =
        x.requires_grad() || offsets.requires_grad() || (modulated && modulation.requires_grad());
    std::vector<T> scratch;
    std::vector<T> wt;
    std::vector<T> dcols;
    if (need_sample_grads) {
      wt.resize(static_cast<std::size_t>(ckk) * cout);
      kernels::transpose(cout, ckk, w.data().data(), wt.data());
      dcols.resize(static_cast<std::size_t>(ckk) * hw);
    }
    for (int n = 0; n < xs.n; ++n) {
      const T* gyn = gy + n * y_stride;
      if (w.requires_grad())
        accumulate_weight_grad(gyn, cols->data() + static_cast<std::size_t>(n) * ckk * hw, cout, ckk, hw, scratch,
                               w.mutable_grad().data());
      if (!need_sample_grads) continue;
      std::fill(dcols.begin(), dcols.end(), T(0));
      kernels::gemm(ckk, hw, cout, wt.data(), cout, gyn, hw, dcols.data(), hw);

      const std::size_t xo = static_cast<std::size_t>(n) * xs.c * xs.plane();
      const T* xn = x.data().data() + xo;
      T* dxn = x.requires_grad() ? x.mutable_grad().data() + xo : nullptr;
      const T* off = offsets.data().data() + static_cast<std::size_t>(n) * 2 * K * hw;
      T* doff = offsets.requires_grad() ? offsets.mutable_grad().data() + static_cast<std::size_t>(n) * 2 * K * hw
                                        : nullptr;
      const T* mod = modulated ? modulation.data().data() + static_cast<std::size_t>(n) * K * hw : nullptr;
      T* dmod = (modulated && modulation.requires_grad())
                    ? modulation.mutable_grad().data() + static_cast<std::size_t>(n) * K * hw
                    : nullptr;
      for (int c = 0; c < xs.c; ++c) {
        const T* plane = xn + static_cast<std::size_t>(c) * xs.plane();
        for (int k = 0; k < K; ++k) {
          const int ki = k / p.kernel_w;
          const int kj = k % p.kernel_w;
          const T* dr = off + static_cast<std::size_t>(2 * k) * hw;
          const T* dc = off + static_cast<std::size_t>(2 * k + 1) * hw;
          const T* g = dcols.data() + (static_cast<std::size_t>(c) * K + k) * hw;
          for (int oh = 0; oh < ho; ++oh) {
            for (int ow = 0; ow < wo; ++ow) {
              const int i = oh * wo + ow;
              if (g[i] == T(0)) continue;
              const T pr = T(oh * p.stride - p.padding + ki * p.dilation) + dr[i];
              const T pc = T(ow * p.stride - p.padding + kj * p.dilation) + dc[i];
              const T m = mod ? mod[static_cast<std::size_t>(k) * hw + i] : T(1);
              if (dxn) bilinear_scatter(dxn + static_cast<std::size_t>(c) * xs.plane(), xs.h, xs.w, pr, pc, g[i] * m);
              if (doff || dmod) {
                const auto s = bilinear_sample_grad(plane, xs.h, xs.w, pr, pc);
                if (doff) {
                  doff[static_cast<std::size_t>(2 * k) * hw + i] += g[i] * m * s.d_row;
                  doff[static_cast<std::size_t>(2 * k + 1) * hw + i] += g[i] * m * s.d_col;
                }
                if (dmod) dmod[static_cast<std::size_t>(k) * hw + i] += g[i] * s.value;
              }
            }
          }
        }
      }
    }
  });
  return y;
}

}  // namespace

template <typename T>
Tensor<T> deform_conv_v1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const OffsetField<T>& off,
                         const ConvParams& p) {
  return deform_conv_impl(tape, x, w, off.offsets, Tensor<T>{}, p, "deform_conv_v1");
}

template <typename T>
Tensor<T> deform_conv_v2(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const OffsetField<T>& off,
                         const ConvParams& p) {
  if (!off.modulation.defined()) throw ShapeError("deform_conv_v2: modulation missing");
  return deform_conv_impl(tape, x, w, off.offsets, off.modulation, p, "deform_conv_v2");
}

template <typename T>
OffsetField<T> offset_predictor(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w_off, const Tensor<T>& b_off,
                                const ConvParams& p) {
  const int K = p.taps();
  if (w_off.shape().n != 3 * K)
    throw ShapeError("offset_predictor: predictor emits " + std::to_string(w_off.shape().n) +
                     " channels, expected 3K = " + std::to_string(3 * K));
  ConvParams pp = p;
  pp.kernel_h = w_off.shape().h;
  pp.kernel_w = w_off.shape().w;
  Tensor<T> raw = conv2d(tape, x, w_off, b_off, pp);
  if (raw.shape().h != p.out_h(x.shape().h) || raw.shape().w != p.out_w(x.shape().w))
    throw ShapeError("offset_predictor: predictor output does not match the deformable output size");
  auto parts = split_channels(tape, raw, {2 * K, K});
  return OffsetField<T>{parts[0], sigmoid(tape, parts[1])};
}

#define ACESEG_INSTANTIATE(T)                                                                                        \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvParams&);    \
  template T bilinear_sample(std::span<const T>, int, int, T, T);                                                   \
  template BilinearSample<T> bilinear_sample_grad(const T*, int, int, T, T);                                        \
  template Tensor<T> sample_bilinear(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> deform_conv_v1(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const OffsetField<T>&,           \
                                    const ConvParams&);                                                             \
  template Tensor<T> deform_conv_v2(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const OffsetField<T>&,           \
                                    const ConvParams&);                                                             \
  template OffsetField<T> offset_predictor(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                           const ConvParams&);

ACESEG_INSTANTIATE(float)
ACESEG_INSTANTIATE(double)
#undef ACESEG_INSTANTIATE

}  // namespace aceseg
