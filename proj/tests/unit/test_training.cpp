#include <cmath>
#include <random>
#include <sstream>
#include <cstring>
#include <filesystem>

#include <unistd.h>

#include "doctest.h"
#include "gcnet/checkpoint.hpp"
#include "gcnet/training.hpp"
#include "helpers.hpp"

using namespace gcnet;

namespace {

TrainConfig small_config() {
  TrainConfig tc;
  tc.model.features = 4;
  tc.model.max_disparity = 16;
  tc.model.height = 32;
  tc.model.width = 32;
  tc.model.channels = 1;
  tc.model.variant = Variant::SingleScale;
  tc.iterations = 3;
  tc.val_every = 2;
  tc.log_every = 1;
  return tc;
}

StereoSample small_sample(std::uint64_t seed = 1) {
  SynthSpec s;
  s.height = 32;
  s.width = 48;
  s.disparity = 3;
  s.seed = seed;
  return gen_synthetic_pair(s);
}

}  // namespace

TEST_CASE("rmsprop hand example") {
  Tensor<double> p(Shape{1}, 1.0), g(Shape{1}, 2.0), acc(Shape{1});
  rmsprop_update(p, g, acc, RmsPropOptions{});
  CHECK(acc[0] == doctest::Approx(0.4).epsilon(1e-15));
  const double expect = 1.0 - 1e-3 * 2.0 / (std::sqrt(0.4) + 1e-8);
  CHECK(std::abs(p[0] - expect) <= 1e-15);
  CHECK(p[0] == doctest::Approx(0.996838).epsilon(1e-6));
  CHECK(RmsPropOptions{}.learning_rate == 1e-3);
}

TEST_CASE("rmsprop leaves parameters alone for zero gradient or zero rate") {
  std::mt19937_64 rng(61);
  auto p = testing::random_tensor(Shape{9}, rng);
  const auto p0 = p;
  Tensor<double> acc(Shape{9});
  rmsprop_update(p, Tensor<double>(Shape{9}), acc, RmsPropOptions{});
  CHECK(p == p0);
  RmsPropOptions frozen;
  frozen.learning_rate = 0.0;
  rmsprop_update(p, testing::random_tensor(Shape{9}, rng), acc, frozen);
  CHECK(p == p0);
  for (double a : acc.values()) CHECK(a >= 0.0);
}

TEST_CASE("rmsprop_step aborts on a non-finite gradient and names the layer") {
  auto params = ModelParams<float>::initialize(small_config().model, 2);
  auto learnable = params.learnable();
  const auto before = params.named_tensors();
  for (auto& [name, var] : learnable) var.node()->grad = Tensor<float>(var.shape(), 0.1f);
  params.layer(20).bias.node()->grad[0] = NAN;
  OptimState st;
  try {
    rmsprop_step(params, st);
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& e) {
    CHECK(e.tensor() == "layer20.bias");
  }
  CHECK(params.named_tensors() == before);
  CHECK(st.steps == 0);
}

TEST_CASE("image normalisation") {
  Tensor<double> raw(Shape{3}, std::vector<double>{0.0, 127.5, 255.0});
  const auto n = normalize_image(raw, PixelRange::Byte);
  CHECK(n[0] == -1.0);
  CHECK(n[1] == 0.0);
  CHECK(n[2] == 1.0);
  std::mt19937_64 rng(62);
  const auto unit = testing::random_tensor(Shape{50}, rng, 0, 1);
  CHECK(testing::max_abs_diff(denormalize_image(normalize_image(unit, PixelRange::Unit), PixelRange::Unit), unit) <= 1e-6);
  CHECK_THROWS(normalize_image(raw, PixelRange::Undeclared));
}

TEST_CASE("random crops") {
  const auto s = small_sample();
  std::mt19937_64 rng(1);
  const auto same = sample_crop(s, 32, 48, rng);
  CHECK(same.left == s.left);
  CHECK(same.gt == s.gt);
  CHECK(same.mask == s.mask);

  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 10; ++i) {
    const auto ca = sample_crop(s, 16, 16, a), cb = sample_crop(s, 16, 16, b);
    CHECK(ca.left == cb.left);
  }
  // the window is shared by all four maps and gt values are not re-offset
  const auto c = crop_at(s, 4, 10, 16, 20);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      CHECK(c.left.at(y, x, 0) == s.left.at(y + 4, x + 10, 0));
      CHECK(c.right.at(y, x, 0) == s.right.at(y + 4, x + 10, 0));
      CHECK(c.gt.at(y, x) == s.gt.at(y + 4, x + 10));
      CHECK(c.mask.at(y, x) == s.mask.at(y + 4, x + 10));
    }
  CHECK_THROWS(sample_crop(s, 64, 16, a));
}

TEST_CASE("train config text") {
  const auto tc = parse_train_config("# comment\nfeatures = 8\nvariant=single-scale\nlearning_rate=0.002\n");
  CHECK(tc.model.features == 8);
  CHECK(tc.model.variant == Variant::SingleScale);
  CHECK(tc.rmsprop.learning_rate == 0.002);
  CHECK(tc.rmsprop.decay == 0.9);
  CHECK(tc.rmsprop.epsilon == 1e-8);
  CHECK(tc.val_every == 250);
  CHECK(parse_train_config(tc.format()).format() == tc.format());
  CHECK_THROWS_WITH(parse_train_config("bogus=1\n"), doctest::Contains("line 1"));
  CHECK_THROWS(parse_train_config("features=-3\n"));
  CHECK_THROWS(parse_train_config("features\n"));
}

TEST_CASE("zero iterations change nothing and log nothing") {
  auto tc = small_config();
  tc.iterations = 0;
  auto params = ModelParams<float>::initialize(tc.model, 3);
  const auto before = params.named_tensors();
  OptimState st;
  const auto r = fit(params, {small_sample()}, {small_sample(2)}, tc, st);
  CHECK(r.log.empty());
  CHECK(params.named_tensors() == before);
}

TEST_CASE("a short run logs finite losses and validation records") {
  auto tc = small_config();
  auto params = ModelParams<float>::initialize(tc.model, 3);
  OptimState st;
  std::ostringstream log;
  FitOptions opt;
  opt.log = &log;
  const auto r = fit(params, {small_sample()}, {small_sample(2)}, tc, st, opt);
  CHECK_FALSE(r.halted);
  CHECK(r.steps == 3);
  REQUIRE(r.log.size() == 3);
  for (const auto& rec : r.log) CHECK(std::isfinite(rec.loss));
  CHECK(r.log[1].val_mae.has_value());
  CHECK_FALSE(r.log[0].val_mae.has_value());
  CHECK(r.log[2].val_bad1.has_value());
  CHECK(log.str().find("\"val_mae\":null") != std::string::npos);
  CHECK(st.steps == 3);
}

TEST_CASE("identical seeds give bit-identical checkpoints") {
  auto tc = small_config();
  tc.iterations = 4;
  std::vector<std::vector<std::uint8_t>> blobs;
  for (int run = 0; run < 2; ++run) {
    auto params = ModelParams<float>::initialize(tc.model, 4);
    OptimState st;
    fit(params, {small_sample(), small_sample(3)}, {}, tc, st);
    blobs.push_back(encode_checkpoint(params));
  }
  CHECK(blobs[0] == blobs[1]);
}

TEST_CASE("a non-finite loss halts training with the last good parameters") {
  auto tc = small_config();
  auto params = ModelParams<float>::initialize(tc.model, 5);
  params.layer(37).bias.mutable_value()[0] = INFINITY;
  const auto before = params.named_tensors();
  OptimState st;
  const auto dir = std::filesystem::temp_directory_path() / ("gcnet_halt_" + std::to_string(::getpid()));
  FitOptions opt;
  opt.out_dir = dir;
  const auto r = fit(params, {small_sample()}, {}, tc, st, opt);
  CHECK(r.halted);
  CHECK(r.halt_reason.find("non-finite") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "last_good.gcn"));
  CHECK_FALSE(std::filesystem::exists(dir / "final.gcn"));
  const auto after = params.named_tensors();
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i)
    CHECK(std::memcmp(after[i].second.data(), before[i].second.data(), after[i].second.size() * 4) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (auto v : {Variant::Hierarchical, Variant::UnaryOnly}) {
    ModelConfig c;
    c.features = 4;
    c.max_disparity = 32;
    c.height = 32;
    c.width = 64;
    c.variant = v;
    c.loss = LossKind::SoftClassification;
    auto p = ModelParams<float>::initialize(c, 8);
    p.layer(2).stats.mean[1] = 0.125f;
    const auto bytes = encode_checkpoint(p);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GCN1");
    const auto q = decode_checkpoint(bytes);
    CHECK(q.config() == c);
    CHECK(encode_checkpoint(q) == bytes);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto p = ModelParams<float>::initialize(small_config().model, 1);
  auto bytes = encode_checkpoint(p);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
}
