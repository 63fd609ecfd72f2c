#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <algorithm>

#include <unistd.h>
#include <random>

#include "doctest.h"
#include "gcnet/data_io.hpp"
#include "helpers.hpp"

using namespace gcnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gcnet_test_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

void append_f32(std::vector<std::uint8_t>& out, float v, bool little) {
  auto u = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(u >> (8 * (little ? i : 3 - i))));
}

}  // namespace

TEST_CASE("synthetic constant integer disparity") {
  SynthSpec s;
  s.height = 16;
  s.width = 40;
  s.disparity = 5;
  const auto pair = gen_synthetic_pair(s);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 40; ++x) {
      CHECK(pair.gt.at(y, x) == 5.0f);
      CHECK(pair.mask.at(y, x) == (x >= 5 ? 1 : 0));
      if (x + 5 < 40) CHECK(pair.right.at(y, x, 0) == pair.left.at(y, x + 5, 0));
    }
}

TEST_CASE("synthetic zero disparity is the identity pair") {
  SynthSpec s;
  s.disparity = 0;
  s.texture = Texture::SmoothNoise;
  const auto pair = gen_synthetic_pair(s);
  CHECK(pair.left == pair.right);
  for (float g : pair.gt.values()) CHECK(g == 0.0f);
  for (auto m : pair.mask.values()) CHECK(m == 1);
}

TEST_CASE("fractional disparity resamples by linear interpolation") {
  SynthSpec s;
  s.texture = Texture::SmoothNoise;
  s.disparity = 2.5;
  const auto pair = gen_synthetic_pair(s);
  double worst = 0.0;
  for (std::size_t y = 0; y < s.height; ++y)
    for (std::size_t x = 0; x + 3 < s.width; ++x) {
      const double oracle = float(0.5 * double(pair.left.at(y, x + 2, 0)) + 0.5 * double(pair.left.at(y, x + 3, 0)));
      worst = std::max(worst, std::abs(oracle - double(pair.right.at(y, x, 0))));
    }
  CHECK(worst <= 1e-12);
  for (std::size_t y = 0; y < s.height; ++y) {
    CHECK(pair.mask.at(y, 2) == 0);
    CHECK(pair.mask.at(y, 3) == 1);
  }
}

TEST_CASE("images lie in [0, 1] and spec validation rejects bad scenes") {
  for (auto tex : {Texture::RandomDot, Texture::SmoothNoise}) {
    SynthSpec s;
    s.texture = tex;
    s.field = DisparityField::SlantedRamp;
    s.disparity = 1.5;
    s.disparity_far = 9.0;
    const auto pair = gen_synthetic_pair(s);
    for (float v : pair.left.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  SynthSpec bad;
  bad.disparity = 200;
  CHECK_THROWS_WITH(gen_synthetic_pair(bad), doctest::Contains("width"));
  bad = SynthSpec{};
  bad.field = DisparityField::TwoPlane;
  bad.fg_x0 = 0.8;
  bad.fg_x1 = 0.2;
  CHECK_THROWS(gen_synthetic_pair(bad));
}

TEST_CASE("brute-force SAD matching recovers integer ground truth") {
  for (auto field : {DisparityField::TwoPlane, DisparityField::Constant}) {
    SynthSpec s;
    s.height = 32;
    s.width = 64;
    s.field = field;
    s.disparity = 3;
    s.disparity_far = 9;
    s.seed = 77;
    const auto p = gen_synthetic_pair(s);
    const int R = 2, maxd = 12;
    std::size_t checked = 0, recovered = 0;
    for (int y = R; y < int(s.height) - R; ++y)
      for (int x = R; x < int(s.width) - R; ++x) {
        // window must lie on one labelled surface
        bool clean = true;
        for (int dy = -R; dy <= R && clean; ++dy)
          for (int dx = -R; dx <= R && clean; ++dx)
            clean = p.mask.at(y + dy, x + dx) && p.gt.at(y + dy, x + dx) == p.gt.at(y, x) &&
                    x + dx - int(p.gt.at(y, x)) >= 0;
        if (!clean) continue;
        std::vector<double> sad(maxd + 1, 1e30);
        for (int d = 0; d <= maxd; ++d) {
          if (x - R - d < 0) continue;
          double acc = 0.0;
          for (int dy = -R; dy <= R; ++dy)
            for (int dx = -R; dx <= R; ++dx)
              acc += std::abs(p.left.at(y + dy, x + dx, 0) - p.right.at(y + dy, x + dx - d, 0));
          sad[d] = acc;
        }
        const int best = int(std::min_element(sad.begin(), sad.end()) - sad.begin());
        std::vector<double> sorted = sad;
        std::sort(sorted.begin(), sorted.end());
        if (sorted[1] - sorted[0] < 1e-3) continue;  // ambiguous (untextured) window
        ++checked;
        recovered += best == int(p.gt.at(y, x));
      }
    CHECK(checked > 500);
    CHECK(recovered == checked);
  }
}

TEST_CASE("two-plane scenes mask the half-occluded background") {
  SynthSpec s;
  s.field = DisparityField::TwoPlane;
  s.disparity = 2;
  s.disparity_far = 10;
  const auto p = gen_synthetic_pair(s);
  const std::size_t y = s.height / 2;
  const std::size_t fg_left = std::size_t(s.fg_x0 * s.width);
  const std::size_t fg_end = std::size_t(s.fg_x1 * s.width);
  // the nearer object shifts further left in the right view and hides the
  // eight background columns on its left
  CHECK(p.gt.at(y, fg_left - 1) == 2.0f);
  CHECK(p.mask.at(y, fg_left - 1) == 0);
  CHECK(p.mask.at(y, fg_left - 8) == 0);
  CHECK(p.mask.at(y, fg_left - 9) == 1);
  CHECK(p.gt.at(y, fg_left) == 10.0f);
  CHECK(p.mask.at(y, fg_left) == 1);
  CHECK(p.mask.at(y, fg_end) == 1);
}

TEST_CASE("PFM round trip is bit exact for both byte orders") {
  std::mt19937_64 rng(41);
  for (bool little : {true, false}) {
    Tensor<float> t(Shape{8, 8});
    for (auto& v : t.values()) v = std::bit_cast<float>(std::uint32_t(rng()));
    const auto back = decode_pfm(encode_pfm(t, little)).data;
    CHECK(std::memcmp(back.data(), t.data(), t.size() * 4) == 0);
  }
  Tensor<float> rgb(Shape{3, 2, 3});
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = float(i) * 0.5f;
  CHECK(decode_pfm(encode_pfm(rgb)).data == rgb);

  const auto path = scratch("map.pfm");
  write_pfm(rgb, path, false, 2.0f);
  const auto img = read_pfm(path);
  CHECK(img.data == rgb);
  CHECK_FALSE(img.little_endian);
  CHECK(img.scale == 2.0f);
}

TEST_CASE("hand-built PFM fixtures") {
  for (bool little : {true, false}) {
    auto bytes = bytes_of(little ? "Pf\n2 2\n-1.0\n" : "Pf\n2 2\n1.0\n");
    // file rows run bottom to top
    for (float v : {3.0f, 4.0f, 1.0f, 2.0f}) append_f32(bytes, v, little);
    const auto img = decode_pfm(bytes);
    CHECK(img.little_endian == little);
    CHECK(img.data == Tensor<float>(Shape{2, 2}, std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f}));
  }
}

TEST_CASE("malformed PFM input reports a byte offset") {
  auto truncated = bytes_of("Pf\n2 2\n-1.0\n");
  append_f32(truncated, 1.0f, true);
  try {
    decode_pfm(truncated);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == truncated.size());
  }
  try {
    decode_pfm(bytes_of("Pf\n2 x\n-1.0\n"));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == 4);
  }
  CHECK_THROWS_AS(decode_pfm(bytes_of("P6\n")), FormatError);
  CHECK_THROWS_AS(decode_pfm(bytes_of("Pf\n1 1\n0\n0000")), FormatError);
}

TEST_CASE("portable anymap reading") {
  auto p5 = bytes_of("P5\n1 1\n255\n");
  p5.push_back(255);
  CHECK(decode_pnm(p5).at(0, 0, 0) == 1.0f);
  p5.back() = 0;
  CHECK(decode_pnm(p5).at(0, 0, 0) == 0.0f);

  auto p5_16 = bytes_of("P5\n1 1\n65535\n");
  p5_16.push_back(0x80);
  p5_16.push_back(0x00);
  CHECK(decode_pnm(p5_16).at(0, 0, 0) == float(32768.0 / 65535.0));
  CHECK(decode_pnm(p5_16).at(0, 0, 0) == doctest::Approx(0.50000763));

  const auto p3 = decode_pnm(bytes_of("P3\n# comment\n2 1\n4\n0 1 2 3 4 4\n"));
  CHECK(p3.shape() == Shape{1, 2, 3});
  CHECK(p3.at(0, 1, 0) == 0.75f);

  CHECK_THROWS_WITH_AS(decode_pnm(bytes_of("P5\n1 1\n70000\n\x01\x02\x03")),
                       doctest::Contains("depth"), FormatError);
  CHECK_THROWS_AS(decode_pnm(bytes_of("P4\n1 1\n\x01")), FormatError);
  CHECK_THROWS_AS(decode_pnm(bytes_of("P5\n2 2\n255\n\x01")), FormatError);

  Tensor<float> img(Shape{2, 3, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(i) / 17.0f;
  const auto path = scratch("img.ppm");
  write_pnm(img, path);
  const auto back = read_image(path);
  CHECK(testing::max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-7);
}

TEST_CASE("sparse masks from ground truth") {
  Tensor<float> gt(Shape{2, 2}, std::vector<float>{1.0f, NAN, 0.0f, INFINITY});
  const auto finite = sparse_mask_from_gt(gt, InvalidPolicy::NonFinite);
  CHECK(finite.mask == Mask(Shape{2, 2}, std::vector<std::uint8_t>{1, 0, 1, 0}));
  CHECK(finite.valid == 2);
  const auto lidar = sparse_mask_from_gt(gt, InvalidPolicy::NonPositive);
  CHECK(lidar.mask == Mask(Shape{2, 2}, std::vector<std::uint8_t>{1, 0, 0, 0}));
  CHECK(sparse_mask_from_gt(Tensor<float>(Shape{2, 2}, 3.0f), InvalidPolicy::NonPositive).valid == 4);
  CHECK_FALSE(sparse_mask_from_gt(Tensor<float>(Shape{1, 1}, NAN), InvalidPolicy::NonFinite).usable());
}

TEST_CASE("manifests resolve relative paths and load datasets") {
  const auto dir = scratch("set/x").parent_path();
  SynthSpec s;
  s.height = 8;
  s.width = 16;
  s.disparity = 2;
  const auto pair = gen_synthetic_pair(s);
  write_pfm(pair.left, dir / "l.pfm");
  write_pfm(pair.right, dir / "r.pfm");
  Tensor<float> gt = pair.gt;
  gt[0] = NAN;
  write_pfm(gt, dir / "gt.pfm");
  write_manifest({{"l.pfm", "r.pfm", "gt.pfm"}}, dir / "manifest.jsonl");
  const auto entries = read_manifest(dir / "manifest.jsonl");
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].left == dir / "l.pfm");
  const auto data = load_dataset(dir / "manifest.jsonl");
  REQUIRE(data.size() == 1);
  CHECK(data[0].left.shape() == Shape{8, 16, 1});
  CHECK(data[0].mask[0] == 0);
  CHECK(data[0].mask[1] == 1);

  std::ofstream(dir / "alt.jsonl") << "{\"leftPath\": \"l.pfm\", \"rightPath\": \"r.pfm\", \"gtPath\": \"gt.pfm\"}\n";
  CHECK(read_manifest(dir / "alt.jsonl")[0].gt == entries[0].gt);

  std::ofstream(dir / "bad.jsonl") << "{\"left\": \"l.pfm\"}\n";
  CHECK_THROWS_WITH(read_manifest(dir / "bad.jsonl"), doctest::Contains("line 1"));
}

TEST_CASE("atomic writes leave nothing behind on failure") {
  const auto dir = scratch("atomic/x").parent_path();
  std::ofstream(dir / "blocker") << "file";
  CHECK_THROWS(write_file_atomic(dir / "blocker" / "out.bin", {1, 2, 3}));
  CHECK_FALSE(fs::exists(dir / "blocker" / "out.bin"));
  write_file_atomic(dir / "ok.bin", {1, 2, 3});
  CHECK(read_file_bytes(dir / "ok.bin") == std::vector<std::uint8_t>{1, 2, 3});
  for (const auto& e : fs::directory_iterator(dir))
    CHECK(e.path().filename().string().find(".partial") == std::string::npos);
}

TEST_CASE("synth spec text round trip") {
  SynthSpec s;
  s.field = DisparityField::SlantedRamp;
  s.disparity = 1.25;
  s.seed = 99;
  const auto back = parse_synth_spec(format_synth_spec(s));
  CHECK(back.field == s.field);
  CHECK(back.disparity == s.disparity);
  CHECK(back.seed == 99);
  CHECK_THROWS(parse_synth_spec("colour=red\n"));
}
