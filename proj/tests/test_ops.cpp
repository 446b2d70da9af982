#include "doctest.h"

#include <cmath>
#include <numeric>

#include "aceseg/kernels/simd.hpp"
#include "aceseg/ops.hpp"
#include "test_util.hpp"

using namespace aceseg;

namespace {

// Direct-summation oracle for zero-padded atrous convolution.
std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const ConvParams& p) {
  const Shape xs = x.shape();
  const int co = w.shape().n;
  const int ho = (xs.h + 2 * p.padding - p.dilation * (p.kernel_h - 1) - 1) / p.stride + 1;
  const int wo = (xs.w + 2 * p.padding - p.dilation * (p.kernel_w - 1) - 1) / p.stride + 1;
  std::vector<double> y(static_cast<std::size_t>(xs.n) * co * ho * wo, 0.0);
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double s = 0;
          for (int c = 0; c < xs.c; ++c)
            for (int a = 0; a < p.kernel_h; ++a)
              for (int b = 0; b < p.kernel_w; ++b) {
                const int r = i * p.stride - p.padding + a * p.dilation;
                const int q = j * p.stride - p.padding + b * p.dilation;
                if (r < 0 || r >= xs.h || q < 0 || q >= xs.w) continue;
                s += x.at(n, c, r, q) * w.at(o, c, a, b);
              }
          y[((static_cast<std::size_t>(n) * co + o) * ho + i) * wo + j] = s;
        }
  return y;
}

Tensor<double> inflate_kernel(const Tensor<double>& w, int rate) {
  const Shape s = w.shape();
  const int kh = rate * (s.h - 1) + 1, kw = rate * (s.w - 1) + 1;
  auto out = Tensor<double>::zeros({s.n, s.c, kh, kw});
  for (int o = 0; o < s.n; ++o)
    for (int c = 0; c < s.c; ++c)
      for (int a = 0; a < s.h; ++a)
        for (int b = 0; b < s.w; ++b) out.mutable_data()[out.offset(o, c, a * rate, b * rate)] = w.at(o, c, a, b);
  return out;
}

}  // namespace

TEST_CASE("conv2d 3x3 ones over 1..9 gives 45") {
  Tape<float> tape(false);
  auto x = Tensor<float>::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  auto y = conv2d(tape, x, w, Tensor<float>{}, ConvParams::square(3));
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(45.0).epsilon(1e-6));
}

TEST_CASE("conv2d with unit 1x1 kernel is the identity") {
  Tape<float> tape(false);
  auto x = testutil::random_tensor<float>({2, 1, 5, 7}, 3);
  auto y = conv2d(tape, x, Tensor<float>::full({1, 1, 1, 1}, 1.0f), Tensor<float>{}, ConvParams::square(1));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dilated 3x3 over 5x5 ones gives 9") {
  Tape<float> tape(false);
  auto y = conv2d(tape, Tensor<float>::full({1, 1, 5, 5}, 1.0f), Tensor<float>::full({1, 1, 3, 3}, 1.0f),
                  Tensor<float>{}, ConvParams::square(3, 1, 0, 2));
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(9.0).epsilon(1e-6));
}

TEST_CASE("conv2d matches the direct-summation oracle across geometries") {
  Tape<double> tape(false);
  const ConvParams geoms[] = {ConvParams::square(3, 1, 1), ConvParams::square(3, 2, 1), ConvParams::square(3, 1, 2, 2),
                              ConvParams::square(1), ConvParams{1, 3, 1, 1, 1}, ConvParams::square(3, 1, 6, 6)};
  std::uint64_t seed = 100;
  for (const auto& p : geoms) {
    auto x = testutil::random_tensor<double>({2, 3, 9, 8}, seed++);
    auto w = testutil::random_tensor<double>({4, 3, p.kernel_h, p.kernel_w}, seed++);
    auto y = conv2d(tape, x, w, Tensor<double>{}, p);
    auto ref = naive_conv(x, w, p);
    REQUIRE(y.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("dilated conv equals conv with the zero-inflated kernel") {
  Tape<double> tape(false);
  for (int rate : {1, 2, 3, 6}) {
    auto x = testutil::random_tensor<double>({1, 2, 13, 11}, 40 + rate);
    auto w = testutil::random_tensor<double>({3, 2, 3, 3}, 50 + rate);
    auto y1 = conv2d(tape, x, w, Tensor<double>{}, ConvParams::square(3, 1, rate, rate));
    auto wi = inflate_kernel(w, rate);
    auto y2 = conv2d(tape, x, wi, Tensor<double>{}, ConvParams::square(wi.shape().h, 1, rate, 1));
    CHECK(testutil::max_rel_diff(y1, y2) <= 1e-6);
  }
}

TEST_CASE("conv2d errors") {
  Tape<float> tape(false);
  auto x = Tensor<float>::zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(tape, x, Tensor<float>::zeros({1, 3, 3, 3}), Tensor<float>{}, ConvParams::square(3)),
                  ShapeError);
  CHECK_THROWS_AS(conv2d(tape, x, Tensor<float>::zeros({1, 2, 5, 5}), Tensor<float>{}, ConvParams::square(5)),
                  GeometryError);
  CHECK_THROWS_AS(conv2d(tape, x, Tensor<float>::zeros({1, 2, 3, 3}), Tensor<float>{}, ConvParams::square(3, 1, 0, 0)),
                  GeometryError);
  CHECK_THROWS_AS(conv2d(tape, x, Tensor<float>::zeros({2, 2, 3, 3}), Tensor<float>::zeros({1, 3, 1, 1}),
                         ConvParams::square(3)),
                  ShapeError);
}

TEST_CASE("conv2d output size formula") {
  CHECK(conv_output_size(64, 3, 2, 1, 1) == 32);
  CHECK(conv_output_size(8, 3, 1, 18, 18) == 8);
  CHECK(conv_output_size(5, 3, 1, 0, 2) == 1);
  CHECK_THROWS_AS(conv_output_size(4, 3, 1, 0, 2), GeometryError);
}

TEST_CASE("conv2d agrees between scalar and SIMD kernels") {
  namespace k = aceseg::kernels;
  if (!k::isa_supported(k::Isa::kAvx2)) return;
  const auto before = k::active_isa();
  auto run = [](k::Isa isa) {
    k::set_active_isa(isa);
    Tape<float> tape;
    auto x = testutil::random_tensor<float>({2, 5, 12, 10}, 71, -1, 1, true);
    auto w = testutil::random_tensor<float>({7, 5, 3, 3}, 72, -1, 1, true);
    auto b = testutil::random_tensor<float>({1, 7, 1, 1}, 73, -1, 1, true);
    auto y = conv2d(tape, x, w, b, ConvParams::square(3, 1, 2, 2));
    tape.backward(sum(tape, mul(tape, y, y)));
    return std::make_tuple(y.clone(), Tensor<float>::from(x.shape(), {x.grad().begin(), x.grad().end()}),
                           Tensor<float>::from(w.shape(), {w.grad().begin(), w.grad().end()}));
  };
  auto [ys, dxs, dws] = run(k::Isa::kScalar);
  auto [yv, dxv, dwv] = run(k::Isa::kAvx2);
  k::set_active_isa(before);
  CHECK(testutil::max_abs_diff(ys, yv) < 1e-4);
  CHECK(testutil::max_abs_diff(dxs, dxv) < 1e-3);
  CHECK(testutil::max_abs_diff(dws, dwv) < 1e-2);
  CHECK(testutil::max_rel_diff(dws, dwv) < 1e-4);
}

TEST_CASE("bilinear_sample values") {
  const std::vector<float> plane = {1, 2, 3, 4};
  CHECK(bilinear_sample<float>(plane, 2, 2, 0.5f, 0.5f) == doctest::Approx(2.5));
  CHECK(bilinear_sample<float>(plane, 2, 2, 1.0f, 0.0f) == 3.0f);
  CHECK(bilinear_sample<float>(plane, 2, 2, -1.0f, -1.0f) == 0.0f);
  CHECK(bilinear_sample<float>(plane, 2, 2, 0.0f, 1.5f) == doctest::Approx(1.0));  // half of 2, border zero
  CHECK_THROWS_AS(bilinear_sample<float>(plane, 3, 2, 0.0f, 0.0f), ShapeError);
}

TEST_CASE("adaptive_avg_pool block means") {
  Tape<float> tape(false);
  std::vector<float> v(16);
  std::iota(v.begin(), v.end(), 1.0f);
  auto x = Tensor<float>::from({1, 1, 4, 4}, v);
  auto y = adaptive_avg_pool(tape, x, 2, 2);
  CHECK(y.data()[0] == doctest::Approx(3.5));
  CHECK(y.data()[1] == doctest::Approx(5.5));
  CHECK(y.data()[2] == doctest::Approx(11.5));
  CHECK(y.data()[3] == doctest::Approx(13.5));
  auto g = adaptive_avg_pool(tape, x, 1, 1);
  CHECK(g.item() == doctest::Approx(8.5));
  CHECK_THROWS_AS(adaptive_avg_pool(tape, x, 5, 1), GeometryError);
}

TEST_CASE("adaptive_avg_pool partitions uneven extents with floor edges") {
  Tape<double> tape(false);
  // 8 columns into 3 bins: edges 0, 2, 5, 8.
  std::vector<double> v(8);
  std::iota(v.begin(), v.end(), 0.0);
  auto y = adaptive_avg_pool(tape, Tensor<double>::from({1, 1, 1, 8}, v), 1, 3);
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[1] == doctest::Approx(3.0));
  CHECK(y.data()[2] == doctest::Approx(6.0));
}

TEST_CASE("upsample_bilinear align_corners") {
  Tape<float> tape(false);
  auto y = upsample_bilinear(tape, Tensor<float>::from({1, 1, 1, 2}, {1, 3}), 1, 4);
  CHECK(y.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(y.data()[1] == doctest::Approx(1.6667).epsilon(1e-4));
  CHECK(y.data()[2] == doctest::Approx(2.3333).epsilon(1e-4));
  CHECK(y.data()[3] == doctest::Approx(3.0).epsilon(1e-6));
  auto x = testutil::random_tensor<float>({2, 3, 5, 6}, 9);
  auto same = upsample_bilinear(tape, x, 5, 6);
  CHECK(testutil::max_abs_diff(x, same) <= 1e-6);
}

TEST_CASE("batch_norm train and eval") {
  Tape<float> tape(false);
  auto state = BatchNormState<float>::create(1);
  auto x = Tensor<float>::from({2, 1, 1, 1}, {1, 3});
  auto y = batch_norm(tape, x, Tensor<float>::full({1, 1, 1, 1}, 1), Tensor<float>::zeros({1, 1, 1, 1}), state,
                      Mode::kTrain);
  CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-3));
  // Running stats moved 10% towards (mean 2, unbiased var 2).
  CHECK(state.running_mean.data()[0] == doctest::Approx(0.2));
  CHECK(state.running_var.data()[0] == doctest::Approx(0.9 + 0.2));

  auto state2 = BatchNormState<float>::create(1);
  auto z = batch_norm(tape, x, Tensor<float>::full({1, 1, 1, 1}, 2), Tensor<float>::full({1, 1, 1, 1}, 5), state2,
                      Mode::kTrain);
  CHECK(z.data()[0] == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(z.data()[1] == doctest::Approx(7.0).epsilon(1e-3));

  auto e = batch_norm(tape, x, Tensor<float>::full({1, 1, 1, 1}, 1), Tensor<float>::zeros({1, 1, 1, 1}), state2,
                      Mode::kEval);
  const float rm = state2.running_mean.data()[0], rv = state2.running_var.data()[0];
  CHECK(e.data()[1] == doctest::Approx((3 - rm) / std::sqrt(rv + 1e-5)));

  CHECK_THROWS_AS(batch_norm(tape, Tensor<float>::zeros({1, 1, 1, 1}), Tensor<float>::full({1, 1, 1, 1}, 1),
                             Tensor<float>::zeros({1, 1, 1, 1}), state2, Mode::kTrain),
                  DegenerateVarianceError);
}

TEST_CASE("batch_norm output is standardised per channel") {
  Tape<double> tape(false);
  auto state = BatchNormState<double>::create(3);
  auto x = testutil::random_tensor<double>({4, 3, 5, 5}, 17, -3, 7);
  auto y = batch_norm(tape, x, Tensor<double>::full({1, 3, 1, 1}, 1), Tensor<double>::zeros({1, 3, 1, 1}), state,
                      Mode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    int m = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
          s += y.at(n, c, i, j);
          ss += y.at(n, c, i, j) * y.at(n, c, i, j);
          ++m;
        }
    CHECK(std::fabs(s / m) < 1e-9);
    CHECK(ss / m == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("softmax cross entropy") {
  Tape<double> tape(false);
  LabelMap lab(1, 1, 1, 2);
  auto uniform = Tensor<double>::zeros({1, 4, 1, 1});
  CHECK(softmax_cross_entropy(tape, uniform, lab).item() == doctest::Approx(std::log(4.0)));

  auto sat = Tensor<double>::from({1, 4, 1, 1}, {0, 0, 1000, 0});
  CHECK(softmax_cross_entropy(tape, sat, lab).item() == doctest::Approx(0.0));

  LabelMap two(1, 1, 2, 0);
  two.at(0, 0, 0) = kIgnoreIndex;
  two.at(0, 0, 1) = 3;
  auto z = Tensor<double>::from({1, 4, 1, 2}, {5, 0, -2, 0, 7, 0, 1, 0});
  CHECK(softmax_cross_entropy(tape, z, two).item() == doctest::Approx(std::log(4.0)));

  LabelMap ignored(1, 1, 2, kIgnoreIndex);
  CHECK_THROWS_AS(softmax_cross_entropy(tape, z, ignored), EmptyLossError);
  LabelMap bad(1, 1, 2, 4);
  CHECK_THROWS_AS(softmax_cross_entropy(tape, z, bad), LabelRangeError);
}

TEST_CASE("ignored pixels receive zero gradient") {
  Tape<double> tape;
  LabelMap lab(1, 1, 2, 1);
  lab.at(0, 0, 0) = kIgnoreIndex;
  auto z = testutil::random_tensor<double>({1, 3, 1, 2}, 5, -2, 2, true);
  tape.backward(softmax_cross_entropy(tape, z, lab));
  for (int k = 0; k < 3; ++k) CHECK(z.grad()[z.offset(0, k, 0, 0)] == 0.0);
  double s = 0;
  for (int k = 0; k < 3; ++k) s += z.grad()[z.offset(0, k, 0, 1)];
  CHECK(std::fabs(s) < 1e-12);
}

TEST_CASE("concat and split are exact inverses") {
  Tape<float> tape(false);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int a = 1 + seed % 3, b = 1 + seed % 5, c = 2;
    auto x = testutil::random_tensor<float>({2, a + b + c, 3, 4}, seed);
    auto parts = split_channels(tape, x, {a, b, c});
    auto back = concat_channels(tape, parts);
    CHECK(back.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) REQUIRE(back.data()[i] == x.data()[i]);
  }
  CHECK_THROWS_AS(concat_channels(tape, std::vector<Tensor<float>>{Tensor<float>::zeros({1, 1, 2, 2}),
                                                                    Tensor<float>::zeros({1, 1, 3, 2})}),
                  ShapeError);
}

TEST_CASE("offset predictor") {
  Tape<float> tape(false);
  const auto p = ConvParams::square(3, 1, 1);
  auto x = testutil::random_tensor<float>({2, 4, 6, 6}, 3);
  auto field = offset_predictor(tape, x, Tensor<float>::zeros({27, 4, 3, 3}), Tensor<float>::zeros({1, 27, 1, 1}), p);
  CHECK(field.offsets.shape() == Shape{2, 18, 6, 6});
  CHECK(field.modulation.shape() == Shape{2, 9, 6, 6});
  for (float v : field.offsets.data()) CHECK(v == 0.0f);
  for (float v : field.modulation.data()) CHECK(v == 0.5f);

  std::vector<float> bias(27, 0.0f);
  for (int k = 18; k < 27; ++k) bias[k] = 100.0f;
  auto sat = offset_predictor(tape, x, Tensor<float>::zeros({27, 4, 3, 3}), Tensor<float>::from({1, 27, 1, 1}, bias), p);
  for (float v : sat.modulation.data()) CHECK(v == 1.0f);

  auto wild = offset_predictor(tape, x, testutil::random_tensor<float>({27, 4, 3, 3}, 8, -50, 50),
                               testutil::random_tensor<float>({1, 27, 1, 1}, 9, -50, 50), p);
  for (float v : wild.modulation.data()) CHECK((v >= 0.0f && v <= 1.0f));

  CHECK_THROWS_AS(offset_predictor(tape, x, Tensor<float>::zeros({18, 4, 3, 3}), Tensor<float>::zeros({1, 18, 1, 1}), p),
                  ShapeError);
}

TEST_CASE("broadcast_spatial repeats the vector") {
  Tape<float> tape(false);
  auto y = broadcast_spatial(tape, Tensor<float>::from({1, 2, 1, 1}, {3, -1}), 2, 3);
  for (int i = 0; i < 6; ++i) {
    CHECK(y.data()[i] == 3.0f);
    CHECK(y.data()[6 + i] == -1.0f);
  }
}
