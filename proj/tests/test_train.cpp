#include "doctest.h"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "aceseg/train/checkpoint.hpp"
#include "aceseg/train/schedule.hpp"
#include "aceseg/train/trainer.hpp"
#include "test_util.hpp"

using namespace aceseg;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model(HeadKind k = HeadKind::kAce, std::uint64_t seed = 1) {
  ModelConfig mc;
  mc.head = k;
  mc.backbone.channels = 16;
  mc.backbone.aux_channels = 8;
  mc.seed = seed;
  return mc;
}

Dataset small_dataset(int count, int size, std::uint64_t seed) {
  Dataset d;
  d.manifest = {count, 4, size, seed};
  SceneSpec spec;
  spec.size = size;
  spec.min_px = 4;
  spec.max_px = 16;
  for (int i = 0; i < count; ++i) {
    spec.seed = scene_seed(seed, static_cast<std::uint64_t>(i));
    d.samples.push_back(to_sample(generate_scene(spec)));
  }
  return d;
}

std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("aceseg_test_" + name)).string();
}

std::string hex(const std::string& bytes) {
  static const char* d = "0123456789ABCDEF";
  std::string s;
  for (unsigned char c : bytes) {
    s += d[c >> 4];
    s += d[c & 15];
  }
  return s;
}

Param<float> scalar_param(float p, float g, bool decay = true) {
  Param<float> prm{"p", Tensor<float>::scalar(p, true), decay};
  prm.value.mutable_grad()[0] = g;
  return prm;
}

}  // namespace

TEST_CASE("base rate scales with batch size") {
  CHECK(adjusted_base_lr(0.001, 16) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(adjusted_base_lr(0.001, 4) == doctest::Approx(0.00025).epsilon(1e-12));
  CHECK(adjusted_base_lr(0.01, 16) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_THROWS_AS(adjusted_base_lr(0.01, 0), ConfigError);
}

TEST_CASE("poly schedule values and limits") {
  CHECK(poly_lr(0.01, 0, 100) == 0.01);
  CHECK(poly_lr(0.01, 100, 100) == 0.0);
  CHECK(std::fabs(poly_lr(0.01, 50, 100) - 0.005359) < 1e-6);
  CHECK(poly_lr(0.01, 50, 100) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-14));
  CHECK_THROWS_AS(poly_lr(0.01, 101, 100), ScheduleOverrunError);
  CHECK_THROWS_AS(poly_lr(0.01, 0, 0), ConfigError);
  CHECK_THROWS_AS(poly_lr(0.01, -1, 10), ConfigError);
  for (double power : {0.5, 0.9, 2.0})
    for (int i = 0; i < 200; ++i) CHECK(poly_lr(0.1, i + 1, 200, power) < poly_lr(0.1, i, 200, power));
}

TEST_CASE("iterations per run") {
  CHECK(total_iterations(1, 20, 2) == 10);
  CHECK(total_iterations(15, 200, 4) == 750);
  CHECK(total_iterations(2, 21, 4) == 12);
}

TEST_CASE("sgd hand values") {
  {
    std::vector<Param<float>> ps{scalar_param(1.0f, 1.0f)};
    OptimizerState st = OptimizerState::for_params(ps);
    sgd_step(ps, st, 0.1, 0.0, 0.0001);
    CHECK(ps[0].value.item() == doctest::Approx(0.89999).epsilon(1e-6));
  }
  {
    std::vector<Param<float>> ps{scalar_param(0.0f, 1.0f)};
    OptimizerState st = OptimizerState::for_params(ps);
    sgd_step(ps, st, 1.0, 0.9, 0.0);
    CHECK(ps[0].value.item() == doctest::Approx(-1.0));
    sgd_step(ps, st, 1.0, 0.9, 0.0);
    CHECK(std::fabs(ps[0].value.item() - (-2.9)) < 1e-6);
  }
  {
    std::vector<Param<float>> ps{scalar_param(2.0f, 0.5f)};
    OptimizerState st = OptimizerState::for_params(ps);
    sgd_step(ps, st, 0.2, 0.0, 0.0);
    CHECK(ps[0].value.item() == doctest::Approx(1.9));
  }
}

TEST_CASE("sgd needs every gradient") {
  std::vector<Param<float>> ps{scalar_param(1.0f, 1.0f), {"q", Tensor<float>::scalar(1.0f, true), true}};
  OptimizerState st = OptimizerState::for_params(ps);
  CHECK_THROWS_AS(sgd_step(ps, st, 0.1, 0.9, 0.0), UnpopulatedGradientError);
  CHECK(ps[0].value.item() == 1.0f);  // nothing moved
}

TEST_CASE("normalisation parameters are not decayed") {
  std::vector<Param<float>> ps{scalar_param(1.0f, 0.0f, true), scalar_param(1.0f, 0.0f, false)};
  OptimizerState st = OptimizerState::for_params(ps);
  sgd_step(ps, st, 0.1, 0.9, 0.01);
  CHECK(ps[0].value.item() == doctest::Approx(1.0 - 0.1 * 0.01).epsilon(1e-7));
  CHECK(ps[1].value.item() == 1.0f);
  sgd_step(ps, st, 0.1, 0.9, 0.01);
  // second step carries momentum: v = 0.9 * 0.01 + 0.01 * p1
  const double p1 = 1.0 - 0.001;
  CHECK(ps[0].value.item() == doctest::Approx(p1 - 0.1 * (0.9 * 0.01 + 0.01 * p1)).epsilon(1e-6));
  CHECK(ps[1].value.item() == 1.0f);
}

TEST_CASE("checkpoint bytes for a single scalar") {
  const std::string bytes = encode_tensors({{"w", Tensor<float>::scalar(1.0f)}});
  const std::string want = std::string("ACESEG01") + std::string("\x01\x00\x00\x00", 4) +
                           std::string("\x01\x00\x00\x00", 4) + "w" + std::string("\x04\x00\x00\x00", 4) +
                           std::string("\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00", 16) +
                           std::string("\x00\x00\x80\x3F", 4);
  CHECK(hex(bytes) == hex(want));
  CHECK(hex(bytes.substr(bytes.size() - 4)) == "0000803F");
}

TEST_CASE("tensor images round trip every finite value bit-exactly") {
  std::vector<float> v{0.0f, -0.0f, 1.0f, -1.5f, std::numeric_limits<float>::denorm_min(),
                       std::numeric_limits<float>::max(), std::numeric_limits<float>::lowest(), 3.14159f};
  const auto t = Tensor<float>::from({1, 2, 2, 2}, v);
  const auto back = decode_tensors(encode_tensors({{"a", t}, {"bee", Tensor<float>::zeros({2, 1, 1, 3})}}));
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[1].name == "bee");
  CHECK(back[0].value.shape() == t.shape());
  CHECK(back[1].value.shape() == Shape{2, 1, 1, 3});
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(std::bit_cast<std::uint32_t>(back[0].value.data()[i]) == std::bit_cast<std::uint32_t>(v[i]));
}

TEST_CASE("damaged tensor images are rejected") {
  const std::string good = encode_tensors({{"w", Tensor<float>::full({1, 1, 2, 2}, 0.5f)}});
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_tensors(bad), FormatError);
  CHECK_THROWS_AS(decode_tensors(""), FormatError);
  for (std::size_t n = 8; n < good.size(); ++n) CHECK_THROWS_AS(decode_tensors(good.substr(0, n)), CorruptCheckpointError);
  CHECK_THROWS_AS(decode_tensors(good + "x"), CorruptCheckpointError);
  // a rank of 7 is a format problem, not truncation
  std::string ranked = good;
  ranked[8 + 4 + 4 + 1] = 7;
  CHECK_THROWS_AS(decode_tensors(ranked), FormatError);
}

TEST_CASE("lower ranks decode with leading ones") {
  std::string b = std::string("ACESEG01") + std::string("\x01\x00\x00\x00", 4) + std::string("\x01\x00\x00\x00", 4) +
                  "v" + std::string("\x01\x00\x00\x00", 4) + std::string("\x02\x00\x00\x00", 4) +
                  std::string("\x00\x00\x80\x3F\x00\x00\x00\x40", 8);
  const auto t = decode_tensors(b);
  CHECK(t[0].value.shape() == Shape{1, 1, 1, 2});
  CHECK(t[0].value.data()[1] == 2.0f);
}

TEST_CASE("model description round trips") {
  ModelConfig mc = small_model(HeadKind::kPpm);
  mc.head_cfg.ppm_bins = {1, 3};
  mc.head_cfg.aspp_rates = {2, 4, 8, 16};
  mc.head_cfg.ace_fuse = AceFuse::kConcat;
  mc.head_cfg.ace_version = DeformVersion::kV1;
  const ModelConfig back = decode_model_meta(encode_model_meta(mc));
  CHECK(back.head == HeadKind::kPpm);
  CHECK(back.backbone.channels == 16);
  CHECK(back.backbone.aux_channels == 8);
  CHECK(back.head_cfg.ppm_bins == mc.head_cfg.ppm_bins);
  CHECK(back.head_cfg.aspp_rates == mc.head_cfg.aspp_rates);
  CHECK(back.head_cfg.ace_fuse == AceFuse::kConcat);
  CHECK(back.head_cfg.ace_version == DeformVersion::kV1);
}

TEST_CASE("checkpoint save and load reproduce the model") {
  for (HeadKind k : {HeadKind::kPpm, HeadKind::kAspp, HeadKind::kAce}) {
    const Dataset d = small_dataset(6, 16, 3);
    SegModel m(small_model(k));
    TrainConfig tc;
    tc.batch_size = 3;
    tc.epochs = 1;
    tc.augment.crop = 16;
    const TrainResult res = train(m, d, iota(6), tc);
    const std::string path = temp_path("ckpt_" + head_name(k));
    save_checkpoint(path, m, res.state);

    LoadedCheckpoint ck = load_checkpoint(path);
    const auto a = m.parameters(), b = ck.model->parameters();
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      CHECK(a.params[i].name == b.params[i].name);
      CHECK(testutil::max_abs_diff(a.params[i].value, b.params[i].value) == 0.0);
      CHECK(testutil::max_abs_diff(res.state.velocity[i], ck.state.velocity[i]) == 0.0);
    }
    for (std::size_t i = 0; i < a.buffers.size(); ++i)
      CHECK(testutil::max_abs_diff(a.buffers[i].value, b.buffers[i].value) == 0.0);
    const SegBatch batch = make_batch(d.select({0, 1}));
    CHECK(testutil::max_abs_diff(m.logits(batch.images), ck.model->logits(batch.images)) == 0.0);
    fs::remove(path);
  }
}

TEST_CASE("checkpoints refuse other architectures") {
  SegModel m(small_model(HeadKind::kAce));
  const OptimizerState st = OptimizerState::for_params(m.parameters().params);
  const std::string path = temp_path("ckpt_arch");
  save_checkpoint(path, m, st);

  SegModel other(small_model(HeadKind::kAspp));
  CHECK_THROWS_AS(load_weights(path, other), IncompatibleModelError);
  SegModel same(small_model(HeadKind::kAce, 5));
  CHECK_NOTHROW(load_weights(path, same));

  // strip the description, add a stray tensor, reshape one
  auto tensors = decode_tensors(std::string(std::istreambuf_iterator<char>(std::ifstream(path, std::ios::binary).rdbuf()), {}));
  auto write = [&](const std::vector<NamedTensor>& ts) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << encode_tensors(ts);
  };
  auto no_meta = tensors;
  no_meta.erase(no_meta.begin());
  write(no_meta);
  CHECK_THROWS_AS(load_checkpoint(path), IncompatibleModelError);

  auto stray = tensors;
  stray.push_back({"head.block9.weight", Tensor<float>::zeros({1, 1, 1, 1})});
  write(stray);
  CHECK_THROWS_AS(load_checkpoint(path), IncompatibleModelError);

  auto reshaped = tensors;
  reshaped[1].value = Tensor<float>::zeros({1, 1, 1, 1});
  write(reshaped);
  CHECK_THROWS_AS(load_checkpoint(path), IncompatibleModelError);

  auto missing = tensors;
  missing.pop_back();  // last velocity: optional
  missing.erase(missing.begin() + 1);  // first parameter: required
  write(missing);
  CHECK_THROWS_AS(load_checkpoint(path), IncompatibleModelError);

  std::string bytes = encode_tensors(tensors);
  bytes[3] ^= 1;
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist")), FormatError);
  fs::remove(path);
}

TEST_CASE("failed loads leave the target model untouched") {
  SegModel m(small_model(HeadKind::kAce, 1));
  const std::string path = temp_path("ckpt_partial");
  save_checkpoint(path, m, OptimizerState::for_params(m.parameters().params));
  auto tensors = decode_tensors(std::string(std::istreambuf_iterator<char>(std::ifstream(path, std::ios::binary).rdbuf()), {}));
  tensors.back().value = Tensor<float>::zeros({1, 1, 1, 1});  // bad shape at the very end
  std::ofstream(path, std::ios::binary | std::ios::trunc) << encode_tensors(tensors);

  SegModel target(small_model(HeadKind::kAce, 9));
  const auto before = target.parameters().params[0].value.clone();
  CHECK_THROWS_AS(load_weights(path, target), IncompatibleModelError);
  CHECK(testutil::max_abs_diff(before, target.parameters().params[0].value) == 0.0);
  fs::remove(path);
}

TEST_CASE("train step combines main and auxiliary losses") {
  const Dataset d = small_dataset(2, 16, 4);
  const SegBatch batch = make_batch(d.select({0, 1}));
  TrainConfig tc;
  tc.batch_size = 2;
  tc.aux_weight = 0.0;
  SegModel m(small_model());
  OptimizerState st = OptimizerState::for_params(m.parameters().params);
  const StepRecord r0 = train_step(m, st, batch, tc, 0, 10);
  CHECK(r0.total == r0.main);
  CHECK(r0.lr == doctest::Approx(0.1 / 16 * 2));

  tc.aux_weight = 0.2;
  SegModel m2(small_model());
  OptimizerState st2 = OptimizerState::for_params(m2.parameters().params);
  const StepRecord r1 = train_step(m2, st2, batch, tc, 3, 10);
  CHECK(r1.total == doctest::Approx(r1.main + 0.2 * r1.aux).epsilon(1e-6));
  CHECK(r1.lr == doctest::Approx(0.0125 * std::pow(0.7, 0.9)).epsilon(1e-12));
  for (const auto& p : m2.parameters().params) CHECK(p.value.has_grad());
}

TEST_CASE("a frozen batch loses loss under a tiny step") {
  const Dataset d = small_dataset(4, 16, 5);
  const SegBatch batch = make_batch(d.select({0, 1, 2, 3}));
  TrainConfig tc;
  tc.batch_size = 16;  // adjusted base equals base_lr
  tc.base_lr = 1e-5;
  tc.momentum = 0.0;
  tc.weight_decay = 0.0;
  for (HeadKind k : {HeadKind::kPpm, HeadKind::kAspp, HeadKind::kAce}) {
    SegModel m(small_model(k));
    OptimizerState st = OptimizerState::for_params(m.parameters().params);
    const StepRecord before = train_step(m, st, batch, tc, 0, 1000);
    const StepRecord after = train_step(m, st, batch, tc, 1, 1000);
    CHECK(after.total <= before.total);
  }
}

TEST_CASE("non-finite loss raises divergence with the iteration") {
  const Dataset d = small_dataset(2, 16, 6);
  const SegBatch batch = make_batch(d.select({0, 1}));
  SegModel m(small_model());
  auto pl = m.parameters();
  const auto before = pl.params[0].value.clone();
  for (auto& p : pl.params)
    if (p.name.starts_with("classifier")) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), NAN);
  OptimizerState st = OptimizerState::for_params(pl.params);
  try {
    train_step(m, st, batch, TrainConfig{}, 7, 10);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() == 7);
  }
  CHECK(testutil::max_abs_diff(before, m.parameters().params[0].value) == 0.0);
}

TEST_CASE("training is bit-reproducible and pads the last batch") {
  const Dataset d = small_dataset(5, 16, 7);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.epochs = 2;
  tc.augment.crop = 16;
  tc.seed = 3;
  std::vector<std::vector<StepRecord>> runs;
  for (int r = 0; r < 2; ++r) {
    SegModel m(small_model(HeadKind::kAce, 3));
    int seen = 0;
    runs.push_back(train(m, d, iota(5), tc, [&](const StepRecord&) { ++seen; }).history);
    CHECK(seen == 6);
  }
  REQUIRE(runs[0].size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(runs[0][i].iter == static_cast<std::int64_t>(i));
    CHECK(format_csv_row(runs[0][i]) == format_csv_row(runs[1][i]));
    CHECK(std::bit_cast<std::uint64_t>(runs[0][i].total) == std::bit_cast<std::uint64_t>(runs[1][i].total));
  }
  CHECK(runs[0].back().lr == doctest::Approx(0.0125 * std::pow(1.0 / 6.0, 0.9)).epsilon(1e-12));
}

TEST_CASE("log and csv formats") {
  const StepRecord r{12, 0.00025, 1.5, 0.25, 1.55};
  CHECK(format_log_line(r) == "iter=12 lr=0.00025 main=1.500000 aux=0.250000 total=1.550000");
  CHECK(format_csv_row(r).starts_with("12,0.00025000000000000001,1.5,0.25,1.55"));
  CHECK(std::string(kTrainCsvHeader) == "iter,lr,main,aux,total");
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.base_lr = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.aux_weight = -1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.augment.crop = 20;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}
