#include "gcnet/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "json.hpp"

namespace gcnet {

void StereoSample::validate() const {
  if (left.rank() != 3 || right.shape() != left.shape())
    throw ShapeError("stereo sample: left " + shape_str(left.shape()) + " and right " +
                     shape_str(right.shape()) + " must be matching [H, W, C] images");
  const Shape hw{left.dim(0), left.dim(1)};
  if (gt.shape() != hw || mask.shape() != hw)
    throw ShapeError("stereo sample: gt " + shape_str(gt.shape()) + " and mask " +
                     shape_str(mask.shape()) + " must be " + shape_str(hw));
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (mask[i] && !std::isfinite(gt[i]))
      throw std::invalid_argument("stereo sample: non-finite gt under mask at pixel " +
                                  std::to_string(i));
}

// ---- synthetic scenes ----

std::string to_string(Texture t) { return t == Texture::RandomDot ? "random-dot" : "smooth-noise"; }

std::string to_string(DisparityField f) {
  switch (f) {
    case DisparityField::Constant: return "constant";
    case DisparityField::TwoPlane: return "two-plane";
    case DisparityField::SlantedRamp: return "slanted-ramp";
  }
  return "?";
}

Texture parse_texture(const std::string& s) {
  if (s == "random-dot") return Texture::RandomDot;
  if (s == "smooth-noise") return Texture::SmoothNoise;
  throw std::invalid_argument("unknown texture '" + s + "'");
}

DisparityField parse_disparity_field(const std::string& s) {
  if (s == "constant") return DisparityField::Constant;
  if (s == "two-plane") return DisparityField::TwoPlane;
  if (s == "slanted-ramp" || s == "ramp") return DisparityField::SlantedRamp;
  throw std::invalid_argument("unknown disparity field '" + s + "'");
}

double SynthSpec::max_disparity() const {
  return field == DisparityField::Constant ? disparity : std::max(disparity, disparity_far);
}

void SynthSpec::validate() const {
  if (height < 2 || width < 2) throw std::invalid_argument("synth: extents must be at least 2x2");
  if (disparity < 0 || (field != DisparityField::Constant && disparity_far < 0))
    throw std::invalid_argument("synth: disparities must be non-negative");
  if (max_disparity() >= double(width))
    throw std::invalid_argument("synth: disparity " + std::to_string(max_disparity()) +
                                " exceeds image width " + std::to_string(width));
  if (field == DisparityField::SlantedRamp &&
      std::abs(disparity_far - disparity) >= double(width - 1))
    throw std::invalid_argument("synth: ramp slope must stay below one pixel per pixel");
  if (field == DisparityField::TwoPlane &&
      !(0.0 <= fg_x0 && fg_x0 < fg_x1 && fg_x1 <= 1.0 && 0.0 <= fg_y0 && fg_y0 < fg_y1 &&
        fg_y1 <= 1.0))
    throw std::invalid_argument("synth: foreground rectangle must satisfy 0 <= x0 < x1 <= 1");
}

namespace {

// Canvas values are rounded to float so that the float images reproduce them exactly.
using Canvas = std::vector<double>;

Canvas make_texture(Texture kind, std::size_t H, std::size_t W, std::mt19937_64& rng) {
  Canvas out(H * W);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (kind == Texture::RandomDot) {
    Canvas dots(H * W);
    for (auto& v : dots) v = uni(rng) < 0.5 ? 1.0 : 0.0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const auto yy = std::clamp<long>(long(y) + dy, 0, long(H) - 1);
            const auto xx = std::clamp<long>(long(x) + dx, 0, long(W) - 1);
            s += dots[yy * W + xx];
          }
        out[y * W + x] = s / 9.0;
      }
  } else {
    // Two octaves of bilinear value noise.
    const std::pair<std::size_t, double> octaves[] = {{8, 0.6}, {2, 0.4}};
    for (const auto& [cell, weight] : octaves) {
      const std::size_t gh = H / cell + 2, gw = W / cell + 2;
      Canvas lattice(gh * gw);
      for (auto& v : lattice) v = uni(rng);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double fy = double(y) / double(cell), fx = double(x) / double(cell);
          const auto y0 = std::size_t(fy), x0 = std::size_t(fx);
          const double ty = fy - double(y0), tx = fx - double(x0);
          const double v = (1 - ty) * ((1 - tx) * lattice[y0 * gw + x0] + tx * lattice[y0 * gw + x0 + 1]) +
                           ty * ((1 - tx) * lattice[(y0 + 1) * gw + x0] +
                                 tx * lattice[(y0 + 1) * gw + x0 + 1]);
          out[y * W + x] += weight * v;
        }
    }
  }
  for (auto& v : out) v = double(float(v));
  return out;
}

double sample_row(const Canvas& c, std::size_t W, std::size_t y, double u) {
  u = std::clamp(u, 0.0, double(W - 1));
  const auto i = std::min(std::size_t(std::floor(u)), W - 1);
  const double f = u - double(i);
  if (f == 0.0 || i + 1 >= W) return c[y * W + i];
  return (1.0 - f) * c[y * W + i] + f * c[y * W + i + 1];
}

}  // namespace

StereoSample gen_synthetic_pair(const SynthSpec& spec) {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width;
  const std::size_t margin = std::size_t(std::ceil(spec.max_disparity())) + 2;
  const std::size_t WC = W + margin;

  std::mt19937_64 rng(spec.seed);
  const Canvas bg = make_texture(spec.texture, H, WC, rng);
  const Canvas fg = spec.field == DisparityField::TwoPlane ? make_texture(spec.texture, H, WC, rng)
                                                           : Canvas{};

  const bool two_plane = spec.field == DisparityField::TwoPlane;
  const double X0 = std::floor(spec.fg_x0 * double(W)), X1 = std::floor(spec.fg_x1 * double(W));
  const double Y0 = std::floor(spec.fg_y0 * double(H)), Y1 = std::floor(spec.fg_y1 * double(H));
  auto in_fg_rows = [&](std::size_t y) { return two_plane && double(y) >= Y0 && double(y) < Y1; };
  // foreground occupies left columns [X0, X1 - 1]
  auto in_fg_cols = [&](double u) { return u >= X0 && u <= X1 - 1.0; };

  // Background disparity as a function of the left column u.
  const double slope = spec.field == DisparityField::SlantedRamp
                           ? (spec.disparity_far - spec.disparity) / double(W - 1)
                           : 0.0;
  auto bg_disp = [&](double u) { return spec.disparity + slope * u; };
  // Left column u seen at right column x' solves u - d(u) = x'.
  auto bg_source = [&](double xr) { return (xr + spec.disparity) / (1.0 - slope); };

  StereoSample s;
  s.left = Tensor<float>(Shape{H, W, 1});
  s.right = Tensor<float>(Shape{H, W, 1});
  s.gt = Tensor<float>(Shape{H, W});
  s.mask = Mask(Shape{H, W}, 1);

  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const bool fg_here = in_fg_rows(y) && in_fg_cols(double(x));
      s.left[y * W + x] = float(fg_here ? fg[y * WC + x] : bg[y * WC + x]);

      const double xr = double(x);
      double value;
      const double u_fg = xr + spec.disparity_far;
      if (in_fg_rows(y) && in_fg_cols(u_fg))
        value = sample_row(fg, WC, y, u_fg);
      else
        value = sample_row(bg, WC, y, bg_source(xr));
      s.right[y * W + x] = float(value);

      const double d = fg_here ? spec.disparity_far : bg_disp(double(x));
      s.gt[y * W + x] = float(d);
      const double match = double(x) - d;
      bool valid = match >= 0.0;
      if (valid && !fg_here && spec.mask_occlusions && in_fg_rows(y) &&
          in_fg_cols(match + spec.disparity_far))
        valid = false;
      s.mask[y * W + x] = valid ? 1 : 0;
    }
  }
  return s;
}

SynthSpec random_synth_spec(std::size_t height, std::size_t width, double max_disparity,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  SynthSpec s;
  s.height = height;
  s.width = width;
  s.seed = seed * 7919 + 13;
  s.texture = uni(rng) < 0.75 ? Texture::RandomDot : Texture::SmoothNoise;
  const double top = max_disparity - 2.0;
  if (uni(rng) < 0.6) {
    s.field = DisparityField::TwoPlane;
    s.disparity = 1.0 + uni(rng) * 0.5 * top;
    s.disparity_far = s.disparity + 2.0 + uni(rng) * (top - s.disparity - 2.0);
    const double w = 0.25 + 0.3 * uni(rng), h = 0.3 + 0.4 * uni(rng);
    s.fg_x0 = 0.1 + uni(rng) * (0.85 - w);
    s.fg_x1 = s.fg_x0 + w;
    s.fg_y0 = uni(rng) * (1.0 - h);
    s.fg_y1 = s.fg_y0 + h;
  } else {
    s.field = DisparityField::SlantedRamp;
    s.disparity = 1.0 + uni(rng) * (top - 1.0);
    s.disparity_far = 1.0 + uni(rng) * (top - 1.0);
  }
  return s;
}

SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos)
      throw std::invalid_argument("synth spec line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key == "height") s.height = std::stoul(val);
    else if (key == "width") s.width = std::stoul(val);
    else if (key == "texture") s.texture = parse_texture(val);
    else if (key == "field") s.field = parse_disparity_field(val);
    else if (key == "disparity") s.disparity = std::stod(val);
    else if (key == "disparity_far") s.disparity_far = std::stod(val);
    else if (key == "fg_x0") s.fg_x0 = std::stod(val);
    else if (key == "fg_x1") s.fg_x1 = std::stod(val);
    else if (key == "fg_y0") s.fg_y0 = std::stod(val);
    else if (key == "fg_y1") s.fg_y1 = std::stod(val);
    else if (key == "mask_occlusions") s.mask_occlusions = val == "1" || val == "true";
    else if (key == "seed") s.seed = std::stoull(val);
    else throw std::invalid_argument("synth spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return s;
}

std::string format_synth_spec(const SynthSpec& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "height=" << s.height << "\nwidth=" << s.width << "\ntexture=" << to_string(s.texture)
     << "\nfield=" << to_string(s.field) << "\ndisparity=" << s.disparity
     << "\ndisparity_far=" << s.disparity_far << "\nfg_x0=" << s.fg_x0 << "\nfg_x1=" << s.fg_x1
     << "\nfg_y0=" << s.fg_y0 << "\nfg_y1=" << s.fg_y1
     << "\nmask_occlusions=" << (s.mask_occlusions ? "true" : "false") << "\nseed=" << s.seed
     << "\n";
  return os.str();
}

// ---- files ----

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("short write to '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::size_t pos() const { return pos_; }
  void set_pos(std::size_t p) { pos_ = p; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = char(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string token(bool comments) {
    if (comments)
      skip_space_and_comments();
    else
      while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) ++pos_;
    if (start == pos_) throw FormatError("unexpected end of header", start);
    return std::string(bytes_.begin() + long(start), bytes_.begin() + long(pos_));
  }

  long integer(bool comments) {
    const std::size_t at = pos_;
    const std::string t = token(comments);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0) throw FormatError("malformed header integer '" + t + "'", at);
    return v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw FormatError("missing whitespace before payload", pos_);
    ++pos_;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

PfmImage decode_pfm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader r(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != 'f' && bytes[1] != 'F'))
    throw FormatError("not a PFM file: expected 'Pf' or 'PF'", 0);
  const std::size_t channels = bytes[1] == 'F' ? 3 : 1;
  r.set_pos(2);
  const long width = r.integer(false);
  const long height = r.integer(false);
  const std::size_t scale_at = r.pos();
  const std::string scale_tok = r.token(false);
  char* end = nullptr;
  const double scale = std::strtod(scale_tok.c_str(), &end);
  if (*end != '\0' || scale == 0.0 || !std::isfinite(scale))
    throw FormatError("malformed PFM scale '" + scale_tok + "'", scale_at);
  r.single_space();

  PfmImage img;
  img.little_endian = scale < 0;
  img.scale = float(std::abs(scale));
  const std::size_t W = std::size_t(width), H = std::size_t(height);
  const std::size_t count = W * H * channels;
  const std::size_t need = count * 4;
  if (bytes.size() - r.pos() < need)
    throw FormatError("truncated PFM payload: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - r.pos()),
                      bytes.size());
  img.data = channels == 1 ? Tensor<float>(Shape{H, W}) : Tensor<float>(Shape{H, W, channels});
  const bool swap = img.little_endian != (std::endian::native == std::endian::little);
  const std::uint8_t* src = bytes.data() + r.pos();
  for (std::size_t row = 0; row < H; ++row) {
    // file rows run bottom to top
    const std::size_t y = H - 1 - row;
    for (std::size_t i = 0; i < W * channels; ++i) {
      std::uint8_t b[4];
      std::memcpy(b, src + (row * W * channels + i) * 4, 4);
      if (swap) std::reverse(b, b + 4);
      float v;
      std::memcpy(&v, b, 4);
      img.data[y * W * channels + i] = v;
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_pfm(const Tensor<float>& image, bool little_endian, float scale) {
  std::size_t channels;
  if (image.rank() == 2)
    channels = 1;
  else if (image.rank() == 3 && (image.dim(2) == 1 || image.dim(2) == 3))
    channels = image.dim(2);
  else
    throw ShapeError("PFM holds [H, W], [H, W, 1] or [H, W, 3] data, got " +
                     shape_str(image.shape()));
  if (!(scale > 0.0f) || !std::isfinite(scale))
    throw std::invalid_argument("PFM scale magnitude must be positive");
  const std::size_t H = image.dim(0), W = image.dim(1);
  std::ostringstream header;
  header << (channels == 3 ? "PF" : "Pf") << "\n" << W << " " << H << "\n"
         << std::setprecision(9) << (little_endian ? -scale : scale) << "\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(h.size() + image.size() * 4);
  const bool swap = little_endian != (std::endian::native == std::endian::little);
  for (std::size_t row = 0; row < H; ++row) {
    const std::size_t y = H - 1 - row;
    for (std::size_t i = 0; i < W * channels; ++i) {
      std::uint8_t b[4];
      const float v = image[y * W * channels + i];
      std::memcpy(b, &v, 4);
      if (swap) std::reverse(b, b + 4);
      out.insert(out.end(), b, b + 4);
    }
  }
  return out;
}

PfmImage read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file_bytes(path)); }

void write_pfm(const Tensor<float>& image, const std::filesystem::path& path, bool little_endian,
               float scale) {
  write_file_atomic(path, encode_pfm(image, little_endian, scale));
}

Tensor<float> decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw FormatError("not a portable anymap: missing 'P' magic", 0);
  const char kind = char(bytes[1]);
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6')
    throw FormatError(std::string("unsupported anymap type P") + kind, 1);
  const std::size_t C = (kind == '3' || kind == '6') ? 3 : 1;
  const bool ascii = kind == '2' || kind == '3';
  HeaderReader r(bytes);
  r.set_pos(2);
  const std::size_t W = std::size_t(r.integer(true));
  const std::size_t H = std::size_t(r.integer(true));
  const std::size_t maxval_at = r.pos();
  const long maxval = r.integer(true);
  if (maxval > 65535)
    throw FormatError("unsupported bit depth: maxval " + std::to_string(maxval), maxval_at);
  Tensor<float> out(Shape{H, W, C});
  const std::size_t n = H * W * C;
  if (ascii) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t at = r.pos();
      std::string t;
      try {
        t = r.token(true);
      } catch (const FormatError&) {
        throw FormatError("truncated ASCII payload", at);
      }
      const long v = std::strtol(t.c_str(), nullptr, 10);
      if (v < 0 || v > maxval) throw FormatError("sample out of range", at);
      out[i] = float(double(v) / double(maxval));
    }
    return out;
  }
  r.single_space();
  const std::size_t bps = maxval > 255 ? 2 : 1;
  if (bytes.size() - r.pos() < n * bps)
    throw FormatError("truncated anymap payload", bytes.size());
  const std::uint8_t* p = bytes.data() + r.pos();
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bps == 2 ? (unsigned(p[2 * i]) << 8) | p[2 * i + 1] : p[i];
    out[i] = float(double(v) / double(maxval));
  }
  return out;
}

Tensor<float> read_image(const std::filesystem::path& path) {
  return decode_pnm(read_file_bytes(path));
}

void write_pnm(const Tensor<float>& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3))
    throw ShapeError("write_pnm: expected [H, W, 1] or [H, W, 3], got " + shape_str(image.shape()));
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  const std::string header =
      std::string(C == 3 ? "P6" : "P5") + "\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (float v : image.values()) {
    const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    out.push_back(std::uint8_t(std::lround(c * 255.0f)));
  }
  write_file_atomic(path, out);
}

Tensor<float> load_image_any(const std::filesystem::path& path) {
  if (path.extension() == ".pfm") {
    Tensor<float> t = read_pfm(path).data;
    if (t.rank() == 2) t = t.reshaped(Shape{t.dim(0), t.dim(1), 1});
    return t;
  }
  return read_image(path);
}

MaskResult sparse_mask_from_gt(const Tensor<float>& gt, InvalidPolicy policy) {
  MaskResult r{Mask(gt.shape()), 0};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const float v = gt[i];
    bool ok = std::isfinite(v);
    if (policy == InvalidPolicy::NonPositive) ok = ok && v > 0.0f;
    r.mask[i] = ok ? 1 : 0;
    r.valid += ok;
  }
  return r;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto field = [&j](const char* key) {
        const std::string alt = std::string(key) + "Path";
        return j.contains(alt) ? j.at(alt).get<std::string>() : j.at(key).get<std::string>();
      };
      entries.push_back({resolve(field("left")), resolve(field("right")), resolve(field("gt"))});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("manifest " + path.string() + " line " + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::string text;
  for (const auto& e : entries) {
    nlohmann::json j;
    j["left"] = e.left.string();
    j["right"] = e.right.string();
    j["gt"] = e.gt.string();
    text += j.dump() + "\n";
  }
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<StereoSample> load_dataset(const std::filesystem::path& manifest) {
  std::vector<StereoSample> out;
  for (const auto& e : read_manifest(manifest)) {
    StereoSample s;
    s.left = load_image_any(e.left);
    s.right = load_image_any(e.right);
    Tensor<float> gt = read_pfm(e.gt).data;
    if (gt.rank() != 2) throw ShapeError("ground truth '" + e.gt.string() + "' must be single channel");
    auto m = sparse_mask_from_gt(gt, InvalidPolicy::NonFinite);
    s.gt = std::move(gt);
    s.mask = std::move(m.mask);
    s.validate();
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::runtime_error("manifest '" + manifest.string() + "' lists no samples");
  return out;
}

}  // namespace gcnet
