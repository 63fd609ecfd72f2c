#pragma once

// Stereo samples, the synthetic scene generator and file formats (PFM,
// binary/ASCII PNM, dataset manifests).

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcnet/tensor.hpp"

namespace gcnet {

using Mask = Tensor<std::uint8_t>;

struct StereoSample {
  Tensor<float> left;   // [H, W, C]
  Tensor<float> right;  // [H, W, C]
  Tensor<float> gt;     // [H, W] disparity of the left view in pixels
  Mask mask;            // [H, W], nonzero = labelled pixel

  std::size_t height() const { return left.dim(0); }
  std::size_t width() const { return left.dim(1); }

  /// Throws when views, gt and mask disagree in extent or gt is non-finite under the mask.
  void validate() const;
};

// ---- synthetic scenes ----

enum class Texture { RandomDot, SmoothNoise };
enum class DisparityField { Constant, TwoPlane, SlantedRamp };

struct SynthSpec {
  std::size_t height = 64;
  std::size_t width = 128;
  Texture texture = Texture::RandomDot;
  DisparityField field = DisparityField::Constant;
  double disparity = 4.0;       // constant value, background plane, or ramp start
  double disparity_far = 12.0;  // foreground plane, or ramp end
  /// Foreground rectangle as fractions of the image (two-plane only).
  double fg_x0 = 0.3, fg_x1 = 0.7, fg_y0 = 0.25, fg_y1 = 0.75;
  bool mask_occlusions = true;
  std::uint64_t seed = 1;

  double max_disparity() const;
  void validate() const;
};

/// Left view is a texture canvas; the right view satisfies
/// right(x - d(x, y), y) = left(x, y) at every visible left pixel, with linear
/// interpolation for fractional disparities. Left pixels whose match falls
/// outside the right image (x - d < 0), or which the foreground hides in the
/// right view, are masked out. Images lie in [0, 1].
StereoSample gen_synthetic_pair(const SynthSpec& spec);

/// Randomised spec: two-plane or slanted scenes with disparities below max_disparity.
SynthSpec random_synth_spec(std::size_t height, std::size_t width, double max_disparity,
                            std::uint64_t seed);

std::string to_string(Texture t);
std::string to_string(DisparityField f);
Texture parse_texture(const std::string& s);
DisparityField parse_disparity_field(const std::string& s);

/// key=value text (same keys as the struct fields); unknown keys are rejected.
SynthSpec parse_synth_spec(const std::string& text);
std::string format_synth_spec(const SynthSpec& spec);

// ---- PFM ----

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t byte_offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct PfmImage {
  Tensor<float> data;  // [H, W] for "Pf", [H, W, 3] for "PF"; top row first
  float scale = 1.0f;  // magnitude of the header scale
  bool little_endian = true;
};

PfmImage decode_pfm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pfm(const Tensor<float>& image, bool little_endian = true,
                                     float scale = 1.0f);
PfmImage read_pfm(const std::filesystem::path& path);
void write_pfm(const Tensor<float>& image, const std::filesystem::path& path,
               bool little_endian = true, float scale = 1.0f);

// ---- portable anymap ----

/// P2/P3/P5/P6 with maxval up to 65535 -> [H, W, C] in [0, 1].
Tensor<float> decode_pnm(const std::vector<std::uint8_t>& bytes);
Tensor<float> read_image(const std::filesystem::path& path);

/// Writes an 8-bit P5 (C == 1) or P6 (C == 3) file from [0, 1] values.
void write_pnm(const Tensor<float>& image, const std::filesystem::path& path);

/// Loads .pfm (assumed already in [0, 1] for images) or any PNM file as [H, W, C].
Tensor<float> load_image_any(const std::filesystem::path& path);

// ---- masks ----

enum class InvalidPolicy {
  NonFinite,    // NaN/inf marks a missing label
  NonPositive,  // LIDAR-style: value <= 0 (or non-finite) marks a missing label
};

struct MaskResult {
  Mask mask;
  std::size_t valid = 0;
  bool usable() const { return valid > 0; }
};

MaskResult sparse_mask_from_gt(const Tensor<float>& gt, InvalidPolicy policy);

// ---- manifests ----

struct ManifestEntry {
  std::filesystem::path left;
  std::filesystem::path right;
  std::filesystem::path gt;
};

/// One JSON object per line: {"left": ..., "right": ..., "gt": ...}; the keys
/// leftPath, rightPath and gtPath are accepted as well. Relative
/// paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Loads every manifest entry; gt masks use the non-finite policy.
std::vector<StereoSample> load_dataset(const std::filesystem::path& manifest);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so failures leave no partial file.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace gcnet
