#include "gcnet/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace gcnet {

ConvGeometry make_conv_geometry(std::array<std::size_t, 3> in, std::array<std::size_t, 3> kernel,
                                std::array<std::size_t, 3> stride, std::size_t in_channels,
                                std::size_t out_channels) {
  ConvGeometry g;
  g.in = in;
  g.kernel = kernel;
  g.stride = stride;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  for (int a = 0; a < 3; ++a) {
    if (kernel[a] == 0 || kernel[a] % 2 == 0)
      throw std::invalid_argument("kernel extents must be odd, axis " + std::to_string(a));
    if (stride[a] == 0) throw std::invalid_argument("stride must be >= 1, axis " + std::to_string(a));
    g.pad[a] = (kernel[a] - 1) / 2;
    g.out[a] = (in[a] + stride[a] - 1) / stride[a];
  }
  return g;
}

namespace kernels {

namespace {

using i64 = std::int64_t;

}  // namespace

// Convolutions run as im2col + GEMM over fixed-size chunks of rows. Chunk
// boundaries depend only on the geometry, never on the thread count, and each
// GEMM is single-threaded, so every output has one fixed reduction order.

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr i64 kChunkElements = i64(1) << 16;

inline i64 chunk_rows(i64 rows, i64 cols) {
  return std::max<i64>(1, std::min(rows, kChunkElements / std::max<i64>(cols, 1)));
}

// Patch row for output voxel r: [tap, ci] gathered from x, zero outside.
template <typename T>
void im2col_rows(const ConvGeometry& g, const T* x, i64 r0, i64 r1, T* cols) {
  const i64 H = g.in[1], W = g.in[2], D = g.in[0];
  const i64 OH = g.out[1], OW = g.out[2];
  const i64 KD = g.kernel[0], KH = g.kernel[1], KW = g.kernel[2];
  const i64 Cin = g.in_channels;
  const i64 K = KD * KH * KW * Cin;
  for (i64 r = r0; r < r1; ++r) {
    const i64 od = r / (OH * OW), oh = (r / OW) % OH, ow = r % OW;
    T* row = cols + (r - r0) * K;
    for (i64 kd = 0; kd < KD; ++kd) {
      const i64 id = od * i64(g.stride[0]) - i64(g.pad[0]) + kd;
      for (i64 kh = 0; kh < KH; ++kh) {
        const i64 ih = oh * i64(g.stride[1]) - i64(g.pad[1]) + kh;
        for (i64 kw = 0; kw < KW; ++kw) {
          const i64 iw = ow * i64(g.stride[2]) - i64(g.pad[2]) + kw;
          T* dst = row + ((kd * KH + kh) * KW + kw) * Cin;
          if (id < 0 || id >= D || ih < 0 || ih >= H || iw < 0 || iw >= W) {
            std::fill(dst, dst + Cin, T(0));
          } else {
            const T* src = x + ((id * H + ih) * W + iw) * Cin;
            std::copy(src, src + Cin, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const i64 rows = g.out_voxels();
  const i64 Cout = g.out_channels;
  const i64 K = g.taps() * g.in_channels;
  const i64 step = chunk_rows(rows, K);
  const i64 chunks = (rows + step - 1) / step;
  const Eigen::Map<const RowMat<T>> wm(w, K, Cout);

#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(step * K));
#pragma omp for schedule(static)
    for (i64 c = 0; c < chunks; ++c) {
      const i64 r0 = c * step, r1 = std::min(rows, r0 + step);
      im2col_rows(g, x, r0, r1, cols.data());
      const Eigen::Map<const RowMat<T>> pm(cols.data(), r1 - r0, K);
      Eigen::Map<RowMat<T>> ym(y + r0 * Cout, r1 - r0, Cout);
      ym.noalias() = pm * wm;
      if (bias)
        for (i64 r = 0; r < r1 - r0; ++r)
          for (i64 co = 0; co < Cout; ++co) ym(r, co) += bias[co];
    }
  }
}

// With stride s, only taps k with (i + pad - k) divisible by s reach input
// index i, so input voxels split into s^3 residue classes that each see a fixed
// subset of taps. Each class gathers just those taps.
struct ResidueClass {
  std::array<i64, 3> residue{};
  std::array<i64, 3> count{};  // voxels of the class along each axis
  std::vector<std::array<i64, 3>> taps;
  i64 rows() const { return count[0] * count[1] * count[2]; }
};

inline std::vector<ResidueClass> residue_classes(const ConvGeometry& g) {
  std::vector<ResidueClass> out;
  const auto S = g.stride;
  for (i64 rd = 0; rd < i64(S[0]); ++rd)
    for (i64 rh = 0; rh < i64(S[1]); ++rh)
      for (i64 rw = 0; rw < i64(S[2]); ++rw) {
        ResidueClass c;
        c.residue = {rd, rh, rw};
        for (int a = 0; a < 3; ++a) {
          const i64 n = i64(g.in[a]), s = i64(S[a]);
          c.count[a] = c.residue[a] < n ? (n - c.residue[a] + s - 1) / s : 0;
        }
        if (c.rows() == 0) continue;
        for (i64 kd = 0; kd < i64(g.kernel[0]); ++kd)
          for (i64 kh = 0; kh < i64(g.kernel[1]); ++kh)
            for (i64 kw = 0; kw < i64(g.kernel[2]); ++kw) {
              const std::array<i64, 3> k{kd, kh, kw};
              bool hit = true;
              for (int a = 0; a < 3; ++a)
                hit = hit && (c.residue[a] + i64(g.pad[a]) - k[a]) % i64(S[a]) == 0;
              if (hit) c.taps.push_back(k);
            }
        out.push_back(std::move(c));
      }
  return out;
}

template <typename T>
void conv_transpose(const ConvGeometry& g, const T* y, const T* w, T* x) {
  const i64 H = g.in[1], W = g.in[2];
  const i64 OD = g.out[0], OH = g.out[1], OW = g.out[2];
  const i64 SD = g.stride[0], SH = g.stride[1], SW = g.stride[2];
  const i64 PD = g.pad[0], PH = g.pad[1], PW = g.pad[2];
  const i64 KH = g.kernel[1], KW = g.kernel[2];
  const i64 Cin = g.in_channels, Cout = g.out_channels;
  const auto classes = residue_classes(g);

  struct Item {
    std::size_t cls;
    i64 r0, r1;
  };
  std::vector<Item> items;
  std::vector<RowMat<T>> wts;
  i64 max_cols = 1, max_rows = 1;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const auto& c = classes[ci];
    const i64 K = i64(c.taps.size()) * Cout;
    // [tap, co, ci] rows for this class's taps
    RowMat<T> wt(std::max<i64>(K, 1), Cin);
    wt.setZero();
    for (std::size_t t = 0; t < c.taps.size(); ++t) {
      const i64 tap = (c.taps[t][0] * KH + c.taps[t][1]) * KW + c.taps[t][2];
      for (i64 i = 0; i < Cin; ++i)
        for (i64 o = 0; o < Cout; ++o) wt(i64(t) * Cout + o, i) = w[(tap * Cin + i) * Cout + o];
    }
    wts.push_back(std::move(wt));
    const i64 step = chunk_rows(c.rows(), K);
    for (i64 r0 = 0; r0 < c.rows(); r0 += step)
      items.push_back({ci, r0, std::min(c.rows(), r0 + step)});
    max_cols = std::max(max_cols, step * std::max<i64>(K, 1));
    max_rows = std::max(max_rows, step);
  }

#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(max_cols));
    RowMat<T> out(max_rows, Cin);
#pragma omp for schedule(static)
    for (std::size_t it = 0; it < items.size(); ++it) {
      const Item& item = items[it];
      const ResidueClass& c = classes[item.cls];
      const i64 n = item.r1 - item.r0;
      const i64 K = i64(c.taps.size()) * Cout;
      auto voxel = [&](i64 j, i64& id, i64& ih, i64& iw) {
        id = c.residue[0] + (j / (c.count[1] * c.count[2])) * SD;
        ih = c.residue[1] + ((j / c.count[2]) % c.count[1]) * SH;
        iw = c.residue[2] + (j % c.count[2]) * SW;
      };
      if (K == 0) {
        for (i64 j = item.r0; j < item.r1; ++j) {
          i64 id, ih, iw;
          voxel(j, id, ih, iw);
          std::fill_n(x + ((id * H + ih) * W + iw) * Cin, Cin, T(0));
        }
        continue;
      }
      for (i64 j = item.r0; j < item.r1; ++j) {
        i64 id, ih, iw;
        voxel(j, id, ih, iw);
        T* row = cols.data() + (j - item.r0) * K;
        for (std::size_t t = 0; t < c.taps.size(); ++t) {
          const i64 od = (id + PD - c.taps[t][0]) / SD;
          const i64 oh = (ih + PH - c.taps[t][1]) / SH;
          const i64 ow = (iw + PW - c.taps[t][2]) / SW;
          const bool inside = id + PD - c.taps[t][0] >= 0 && ih + PH - c.taps[t][1] >= 0 &&
                              iw + PW - c.taps[t][2] >= 0 && od < OD && oh < OH && ow < OW;
          T* dst = row + i64(t) * Cout;
          if (inside) {
            const T* src = y + ((od * OH + oh) * OW + ow) * Cout;
            std::copy(src, src + Cout, dst);
          } else {
            std::fill(dst, dst + Cout, T(0));
          }
        }
      }
      const Eigen::Map<const RowMat<T>> pm(cols.data(), n, K);
      out.topRows(n).noalias() = pm * wts[item.cls];
      for (i64 j = item.r0; j < item.r1; ++j) {
        i64 id, ih, iw;
        voxel(j, id, ih, iw);
        const T* src = out.data() + (j - item.r0) * Cin;
        std::copy(src, src + Cin, x + ((id * H + ih) * W + iw) * Cin);
      }
    }
  }
}

template <typename T>
void conv_weight_grad(const ConvGeometry& g, const T* x, const T* dy, T* dw) {
  const i64 rows = g.out_voxels();
  const i64 Cout = g.out_channels;
  const i64 K = g.taps() * g.in_channels;
  const i64 step = chunk_rows(rows, K);
  Eigen::Map<RowMat<T>> dwm(dw, K, Cout);
  dwm.setZero();
  std::vector<T> cols(static_cast<std::size_t>(step * K));
  // Chunks are reduced one after another, in order.
  for (i64 r0 = 0; r0 < rows; r0 += step) {
    const i64 r1 = std::min(rows, r0 + step);
    const i64 n = r1 - r0;
    const i64 sub = (n + 15) / 16;
#pragma omp parallel for schedule(static)
    for (i64 s = 0; s < 16; ++s) {
      const i64 a = r0 + std::min(n, s * sub), b = r0 + std::min(n, (s + 1) * sub);
      if (a < b) im2col_rows(g, x, a, b, cols.data() + (a - r0) * K);
    }
    const Eigen::Map<const RowMat<T>> pm(cols.data(), n, K);
    const Eigen::Map<const RowMat<T>> gm(dy + r0 * Cout, n, Cout);
    dwm.noalias() += pm.transpose() * gm;
  }
}

template <typename T>
void channel_sum(std::size_t voxels, std::size_t channels, const T* dy, T* db) {
  std::fill(db, db + channels, T(0));
  for (std::size_t v = 0; v < voxels; ++v) {
    const T* row = dy + v * channels;
    for (std::size_t c = 0; c < channels; ++c) db[c] += row[c];
  }
}

template <typename T>
void cost_volume_forward(std::size_t disparities, std::size_t height, std::size_t width,
                         std::size_t features, const T* left, const T* right, T* vol) {
  const i64 ND = static_cast<i64>(disparities), H = static_cast<i64>(height),
            W = static_cast<i64>(width), F = static_cast<i64>(features);
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 d = 0; d < ND; ++d) {
    for (i64 y = 0; y < H; ++y) {
      for (i64 x = 0; x < W; ++x) {
        T* cell = vol + ((d * H + y) * W + x) * 2 * F;
        const T* l = left + (y * W + x) * F;
        std::copy(l, l + F, cell);
        if (x - d >= 0) {
          const T* r = right + (y * W + x - d) * F;
          std::copy(r, r + F, cell + F);
        } else {
          std::fill(cell + F, cell + 2 * F, T(0));
        }
      }
    }
  }
}

template <typename T>
void cost_volume_backward(std::size_t disparities, std::size_t height, std::size_t width,
                          std::size_t features, const T* dvol, T* dleft, T* dright) {
  const i64 ND = static_cast<i64>(disparities), H = static_cast<i64>(height),
            W = static_cast<i64>(width), F = static_cast<i64>(features);
#pragma omp parallel for schedule(static)
  for (i64 y = 0; y < H; ++y) {
    for (i64 x = 0; x < W; ++x) {
      T* gl = dleft + (y * W + x) * F;
      T* gr = dright + (y * W + x) * F;
      std::fill(gl, gl + F, T(0));
      std::fill(gr, gr + F, T(0));
      for (i64 d = 0; d < ND; ++d) {
        const T* cl = dvol + ((d * H + y) * W + x) * 2 * F;
        for (i64 f = 0; f < F; ++f) gl[f] += cl[f];
        // right[x] feeds volume cell x + d
        if (x + d < W) {
          const T* cr = dvol + ((d * H + y) * W + x + d) * 2 * F + F;
          for (i64 f = 0; f < F; ++f) gr[f] += cr[f];
        }
      }
    }
  }
}

#define GCNET_INSTANTIATE(T)                                                                   \
  template void conv_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);        \
  template void conv_transpose<T>(const ConvGeometry&, const T*, const T*, T*);                \
  template void conv_weight_grad<T>(const ConvGeometry&, const T*, const T*, T*);              \
  template void channel_sum<T>(std::size_t, std::size_t, const T*, T*);                        \
  template void cost_volume_forward<T>(std::size_t, std::size_t, std::size_t, std::size_t,     \
                                       const T*, const T*, T*);                                \
  template void cost_volume_backward<T>(std::size_t, std::size_t, std::size_t, std::size_t,    \
                                        const T*, T*, T*);
GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)
#undef GCNET_INSTANTIATE

}  // namespace kernels

namespace reference {

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  for (std::size_t od = 0; od < g.out[0]; ++od)
    for (std::size_t oh = 0; oh < g.out[1]; ++oh)
      for (std::size_t ow = 0; ow < g.out[2]; ++ow)
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          T sum = bias ? bias[co] : T(0);
          for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
            for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
              for (std::size_t kw = 0; kw < g.kernel[2]; ++kw)
                for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                  const long id = long(od * g.stride[0] + kd) - long(g.pad[0]);
                  const long ih = long(oh * g.stride[1] + kh) - long(g.pad[1]);
                  const long iw = long(ow * g.stride[2] + kw) - long(g.pad[2]);
                  if (id < 0 || ih < 0 || iw < 0 || id >= long(g.in[0]) || ih >= long(g.in[1]) ||
                      iw >= long(g.in[2]))
                    continue;
                  const std::size_t xi =
                      ((std::size_t(id) * g.in[1] + ih) * g.in[2] + iw) * g.in_channels + ci;
                  const std::size_t wi =
                      (((kd * g.kernel[1] + kh) * g.kernel[2] + kw) * g.in_channels + ci) *
                          g.out_channels +
                      co;
                  sum += x[xi] * w[wi];
                }
          y[((od * g.out[1] + oh) * g.out[2] + ow) * g.out_channels + co] = sum;
        }
}

template <typename T>
void conv_transpose(const ConvGeometry& g, const T* y, const T* w, T* x) {
  std::fill(x, x + g.in_voxels() * g.in_channels, T(0));
  for (std::size_t od = 0; od < g.out[0]; ++od)
    for (std::size_t oh = 0; oh < g.out[1]; ++oh)
      for (std::size_t ow = 0; ow < g.out[2]; ++ow)
        for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
          for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
            for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
              const long id = long(od * g.stride[0] + kd) - long(g.pad[0]);
              const long ih = long(oh * g.stride[1] + kh) - long(g.pad[1]);
              const long iw = long(ow * g.stride[2] + kw) - long(g.pad[2]);
              if (id < 0 || ih < 0 || iw < 0 || id >= long(g.in[0]) || ih >= long(g.in[1]) ||
                  iw >= long(g.in[2]))
                continue;
              for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                for (std::size_t co = 0; co < g.out_channels; ++co) {
                  const std::size_t yi =
                      ((od * g.out[1] + oh) * g.out[2] + ow) * g.out_channels + co;
                  const std::size_t wi =
                      (((kd * g.kernel[1] + kh) * g.kernel[2] + kw) * g.in_channels + ci) *
                          g.out_channels +
                      co;
                  x[((std::size_t(id) * g.in[1] + ih) * g.in[2] + iw) * g.in_channels + ci] +=
                      w[wi] * y[yi];
                }
            }
}

template <typename T>
void conv_weight_grad(const ConvGeometry& g, const T* x, const T* dy, T* dw) {
  std::fill(dw, dw + g.weight_size(), T(0));
  for (std::size_t od = 0; od < g.out[0]; ++od)
    for (std::size_t oh = 0; oh < g.out[1]; ++oh)
      for (std::size_t ow = 0; ow < g.out[2]; ++ow)
        for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
          for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
            for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
              const long id = long(od * g.stride[0] + kd) - long(g.pad[0]);
              const long ih = long(oh * g.stride[1] + kh) - long(g.pad[1]);
              const long iw = long(ow * g.stride[2] + kw) - long(g.pad[2]);
              if (id < 0 || ih < 0 || iw < 0 || id >= long(g.in[0]) || ih >= long(g.in[1]) ||
                  iw >= long(g.in[2]))
                continue;
              for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                for (std::size_t co = 0; co < g.out_channels; ++co)
                  dw[(((kd * g.kernel[1] + kh) * g.kernel[2] + kw) * g.in_channels + ci) *
                         g.out_channels +
                     co] +=
                      x[((std::size_t(id) * g.in[1] + ih) * g.in[2] + iw) * g.in_channels + ci] *
                      dy[((od * g.out[1] + oh) * g.out[2] + ow) * g.out_channels + co];
            }
}

template <typename T>
void cost_volume_forward(std::size_t disparities, std::size_t height, std::size_t width,
                         std::size_t features, const T* left, const T* right, T* vol) {
  for (std::size_t d = 0; d < disparities; ++d)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        for (std::size_t c = 0; c < 2 * features; ++c) {
          T v;
          if (c < features)
            v = left[(y * width + x) * features + c];
          else
            v = x >= d ? right[(y * width + (x - d)) * features + (c - features)] : T(0);
          vol[((d * height + y) * width + x) * 2 * features + c] = v;
        }
}

#define GCNET_INSTANTIATE(T)                                                               \
  template void conv_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);    \
  template void conv_transpose<T>(const ConvGeometry&, const T*, const T*, T*);            \
  template void conv_weight_grad<T>(const ConvGeometry&, const T*, const T*, T*);          \
  template void cost_volume_forward<T>(std::size_t, std::size_t, std::size_t, std::size_t, \
                                       const T*, const T*, T*);
GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)
#undef GCNET_INSTANTIATE

}  // namespace reference

}  // namespace gcnet
