#include "gcnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace gcnet {

namespace {

using i64 = std::int64_t;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  const i64 n = static_cast<i64>(dst.size());
#pragma omp parallel for simd schedule(static)
  for (i64 i = 0; i < n; ++i) d[i] += s[i];
}

// Accumulates into the gradient of input `i` of `self` when it wants one.
template <typename T>
Tensor<T>* input_grad(Node<T>& self, std::size_t i) {
  auto& in = self.inputs.at(i);
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

struct Lifted {
  std::array<std::size_t, 3> extents{1, 1, 1};
  std::size_t channels = 1;
};

// View [H, W, C] or [D, H, W, C] as a 3-D volume with channels.
Lifted lift(const Shape& shape, std::size_t spatial_rank, const char* op) {
  require(shape.size() == spatial_rank + 1,
          std::string(op) + ": expected rank " + std::to_string(spatial_rank + 1) +
              " input, got " + shape_str(shape));
  Lifted l;
  for (std::size_t a = 0; a < spatial_rank; ++a) l.extents[3 - spatial_rank + a] = shape[a];
  l.channels = shape.back();
  return l;
}

std::array<std::size_t, 3> lift_param(const std::vector<std::size_t>& v, std::size_t fill) {
  std::array<std::size_t, 3> out{fill, fill, fill};
  for (std::size_t a = 0; a < v.size(); ++a) out[3 - v.size() + a] = v[a];
  return out;
}

const char* conv_name(const ConvSpec& spec) {
  if (spec.transposed) return spec.spatial_rank() == 2 ? "conv2d_transposed" : "conv3d_transposed";
  return spec.spatial_rank() == 2 ? "conv2d" : "conv3d";
}

template <typename T>
Var<T> conv_impl(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec,
                 std::optional<std::array<std::size_t, 3>> requested) {
  const char* name = conv_name(spec);
  const std::size_t sr = spec.spatial_rank();
  require(sr == 2 || sr == 3, std::string(name) + ": spatial rank must be 2 or 3");
  require(spec.stride.size() == sr, std::string(name) + ": stride rank does not match kernel rank");
  for (std::size_t a = 0; a < sr; ++a)
    require(spec.stride[a] >= 1, std::string(name) + ": stride must be >= 1 on axis " +
                                     std::to_string(a));

  const Lifted in = lift(x.shape(), sr, name);
  const Shape wshape = conv_weight_shape(spec, in.channels);
  if (w.shape() != wshape) {
    std::string msg = std::string(name) + ": weight shape " + shape_str(w.shape()) +
                      " does not match expected " + shape_str(wshape);
    if (w.shape().size() == sr + 2) {
      const std::size_t cin_axis = spec.transposed ? sr + 1 : sr;
      msg += "; input channels (input axis " + std::to_string(sr) + ") = " +
             std::to_string(in.channels) + ", weights expect " +
             std::to_string(w.shape()[cin_axis]) + " (weight axis " + std::to_string(cin_axis) +
             ")";
    }
    throw ShapeError(msg);
  }
  if (bias) require(bias.shape() == Shape{spec.out_channels},
                    std::string(name) + ": bias shape " + shape_str(bias.shape()) +
                        " does not match out channels " + std::to_string(spec.out_channels));

  const auto kernel = lift_param(spec.kernel, 1);
  const auto stride = lift_param(spec.stride, 1);

  Shape out_shape;
  ConvGeometry g;
  if (!spec.transposed) {
    g = make_conv_geometry(in.extents, kernel, stride, in.channels, spec.out_channels);
    for (std::size_t a = 0; a < sr; ++a) out_shape.push_back(g.out[3 - sr + a]);
  } else {
    std::array<std::size_t, 3> big{};
    for (int a = 0; a < 3; ++a) big[a] = in.extents[a] * stride[a];
    if (requested) {
      for (std::size_t a = 0; a < sr; ++a) {
        const std::size_t ax = 3 - sr + a;
        const std::size_t want = (*requested)[a];
        require(want >= 1 && (want + stride[ax] - 1) / stride[ax] == in.extents[ax],
                std::string(name) + ": output extent " + std::to_string(want) + " on axis " +
                    std::to_string(a) + " is not reconstructible from input extent " +
                    std::to_string(in.extents[ax]) + " at stride " + std::to_string(stride[ax]));
        big[ax] = want;
      }
    }
    g = make_conv_geometry(big, kernel, stride, spec.out_channels, in.channels);
    for (std::size_t a = 0; a < sr; ++a) out_shape.push_back(big[3 - sr + a]);
  }
  out_shape.push_back(spec.out_channels);

  Tensor<T> out(out_shape);
  if (!spec.transposed) {
    kernels::conv_forward(g, x.value().data(), w.value().data(),
                          bias ? bias.value().data() : static_cast<const T*>(nullptr), out.data());
  } else {
    kernels::conv_transpose(g, x.value().data(), w.value().data(), out.data());
    if (bias) {
      const T* b = bias.value().data();
      T* o = out.data();
      const i64 voxels = static_cast<i64>(g.in_voxels());
      const i64 C = static_cast<i64>(spec.out_channels);
#pragma omp parallel for schedule(static)
      for (i64 v = 0; v < voxels; ++v)
        for (i64 c = 0; c < C; ++c) o[v * C + c] += b[c];
    }
  }

  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(bias);
  const bool transposed = spec.transposed;
  const bool has_bias = static_cast<bool>(bias);
  return Var<T>::make(std::move(out), name, std::move(inputs),
                      [g, transposed, has_bias](Node<T>& self) {
                        const Tensor<T>& gy = self.grad;
                        const Tensor<T>& xv = self.inputs[0]->value;
                        const Tensor<T>& wv = self.inputs[1]->value;
                        if (!transposed) {
                          if (auto* gx = input_grad(self, 0)) {
                            Tensor<T> tmp(xv.shape());
                            kernels::conv_transpose(g, gy.data(), wv.data(), tmp.data());
                            add_into(*gx, tmp);
                          }
                          if (auto* gw = input_grad(self, 1)) {
                            Tensor<T> tmp(wv.shape());
                            kernels::conv_weight_grad(g, xv.data(), gy.data(), tmp.data());
                            add_into(*gw, tmp);
                          }
                          if (has_bias)
                            if (auto* gb = input_grad(self, 2)) {
                              Tensor<T> tmp(gb->shape());
                              kernels::channel_sum(g.out_voxels(), g.out_channels, gy.data(),
                                                   tmp.data());
                              add_into(*gb, tmp);
                            }
                        } else {
                          if (auto* gx = input_grad(self, 0)) {
                            Tensor<T> tmp(xv.shape());
                            kernels::conv_forward(g, gy.data(), wv.data(),
                                                  static_cast<const T*>(nullptr), tmp.data());
                            add_into(*gx, tmp);
                          }
                          if (auto* gw = input_grad(self, 1)) {
                            Tensor<T> tmp(wv.shape());
                            kernels::conv_weight_grad(g, gy.data(), xv.data(), tmp.data());
                            add_into(*gw, tmp);
                          }
                          if (has_bias)
                            if (auto* gb = input_grad(self, 2)) {
                              Tensor<T> tmp(gb->shape());
                              kernels::channel_sum(g.in_voxels(), g.in_channels, gy.data(),
                                                   tmp.data());
                              add_into(*gb, tmp);
                            }
                        }
                      });
}

}  // namespace

Shape conv_weight_shape(const ConvSpec& spec, std::size_t in_channels) {
  Shape s(spec.kernel.begin(), spec.kernel.end());
  if (spec.transposed) {
    s.push_back(spec.out_channels);
    s.push_back(in_channels);
  } else {
    s.push_back(in_channels);
    s.push_back(spec.out_channels);
  }
  return s;
}

std::vector<std::size_t> conv_output_extents(const ConvSpec& spec,
                                             const std::vector<std::size_t>& in_extents) {
  require(in_extents.size() == spec.spatial_rank(), "conv_output_extents: rank mismatch");
  std::vector<std::size_t> out(in_extents.size());
  for (std::size_t a = 0; a < out.size(); ++a)
    out[a] = spec.transposed ? in_extents[a] * spec.stride[a]
                             : (in_extents[a] + spec.stride[a] - 1) / spec.stride[a];
  return out;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec) {
  require(spec.spatial_rank() == 2 && !spec.transposed, "conv2d: spec must be 2-D, not transposed");
  return conv_impl(x, w, bias, spec, std::nullopt);
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec) {
  require(spec.spatial_rank() == 3 && !spec.transposed, "conv3d: spec must be 3-D, not transposed");
  return conv_impl(x, w, bias, spec, std::nullopt);
}

template <typename T>
Var<T> conv3d_transposed(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                         const ConvSpec& spec,
                         std::optional<std::array<std::size_t, 3>> out_extents) {
  require(spec.spatial_rank() == 3 && spec.transposed,
          "conv3d_transposed: spec must be 3-D with the transposed flag set");
  return conv_impl(x, w, bias, spec, out_extents);
}

template <typename T>
Var<T> conv(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec) {
  return conv_impl(x, w, bias, spec, std::nullopt);
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  RunningStats<T>* running, const BatchNormOptions& options) {
  require(x.value().rank() >= 1, "batch_norm: input must have a channel axis");
  const std::size_t C = x.shape().back();
  const std::size_t N = x.value().size() / C;
  require(N > 0, "batch_norm: zero-element channel");
  require(gamma.shape() == Shape{C} && beta.shape() == Shape{C},
          "batch_norm: gamma/beta length must equal channel count " + std::to_string(C));
  if (running)
    require(running->mean.shape() == Shape{C} && running->var.shape() == Shape{C},
            "batch_norm: running statistics do not match channel count");
  if (!options.training) require(running != nullptr, "batch_norm: inference needs running stats");

  const T* xv = x.value().data();
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (options.training) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) mean[c] += xv[n * C + c];
    for (auto& m : mean) m /= double(N);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = xv[n * C + c] - mean[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= double(N);
    if (running) {
      for (std::size_t c = 0; c < C; ++c) {
        running->mean[c] =
            T(options.momentum * running->mean[c] + (1.0 - options.momentum) * mean[c]);
        running->var[c] =
            T(options.momentum * running->var[c] + (1.0 - options.momentum) * var[c]);
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running->mean[c];
      var[c] = running->var[c];
    }
  }

  std::vector<T> inv_std(C), mean_t(C);
  for (std::size_t c = 0; c < C; ++c) {
    inv_std[c] = T(1.0 / std::sqrt(var[c] + options.epsilon));
    mean_t[c] = T(mean[c]);
  }

  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  const T* g = gamma.value().data();
  const T* b = beta.value().data();
  {
    T* xh = xhat.data();
    T* o = out.data();
    const i64 n_total = static_cast<i64>(N);
#pragma omp parallel for schedule(static)
    for (i64 n = 0; n < n_total; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T h = (xv[n * C + c] - mean_t[c]) * inv_std[c];
        xh[n * C + c] = h;
        o[n * C + c] = g[c] * h + b[c];
      }
  }

  const bool training = options.training;
  return Var<T>::make(
      std::move(out), "batch_norm", {x, gamma, beta},
      [xhat = std::move(xhat), inv_std, C, N, training](Node<T>& self) {
        const T* dy = self.grad.data();
        const T* xh = xhat.data();
        const T* gv = self.inputs[1]->value.data();
        std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c) {
            sum_dy[c] += dy[n * C + c];
            sum_dy_xhat[c] += double(dy[n * C + c]) * xh[n * C + c];
          }
        if (auto* gg = input_grad(self, 1))
          for (std::size_t c = 0; c < C; ++c) (*gg)[c] += T(sum_dy_xhat[c]);
        if (auto* gb = input_grad(self, 2))
          for (std::size_t c = 0; c < C; ++c) (*gb)[c] += T(sum_dy[c]);
        if (auto* gx = input_grad(self, 0)) {
          T* dx = gx->data();
          std::vector<T> k(C), m_dy(C), m_dyx(C);
          for (std::size_t c = 0; c < C; ++c) {
            k[c] = gv[c] * inv_std[c];
            m_dy[c] = training ? T(sum_dy[c] / double(N)) : T(0);
            m_dyx[c] = training ? T(sum_dy_xhat[c] / double(N)) : T(0);
          }
          const i64 n_total = static_cast<i64>(N);
#pragma omp parallel for schedule(static)
          for (i64 n = 0; n < n_total; ++n)
            for (std::size_t c = 0; c < C; ++c)
              dx[n * C + c] += k[c] * (dy[n * C + c] - m_dy[c] - xh[n * C + c] * m_dyx[c]);
        }
      });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  T* o = out.data();
  const i64 n = static_cast<i64>(out.size());
#pragma omp parallel for simd schedule(static)
  for (i64 i = 0; i < n; ++i) o[i] = xv[i] > T(0) ? xv[i] : T(0);
  return Var<T>::make(std::move(out), "relu", {x}, [](Node<T>& self) {
    auto* gx = input_grad(self, 0);
    if (!gx) return;
    const T* xv = self.inputs[0]->value.data();
    const T* dy = self.grad.data();
    T* dx = gx->data();
    const i64 n = static_cast<i64>(self.grad.size());
    // subgradient 0 at exactly 0
#pragma omp parallel for simd schedule(static)
    for (i64 i = 0; i < n; ++i) dx[i] += xv[i] > T(0) ? dy[i] : T(0);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  add_into(out, b.value());
  return Var<T>::make(std::move(out), "add", {a, b}, [](Node<T>& self) {
    if (auto* ga = input_grad(self, 0)) add_into(*ga, self.grad);
    if (auto* gb = input_grad(self, 1)) add_into(*gb, self.grad);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return Var<T>::make(std::move(out), "mul", {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
    if (auto* gb = input_grad(self, 1))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * av[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v *= factor;
  return Var<T>::make(std::move(out), "scale", {x}, [factor](Node<T>& self) {
    if (auto* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = T(0);
  for (T v : x.value().values()) s += v;
  return Var<T>::make(Tensor<T>(Shape{1}, s), "sum", {x}, [](Node<T>& self) {
    if (auto* gx = input_grad(self, 0))
      for (auto& v : gx->storage()) v += self.grad[0];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return Var<T>::make(std::move(out), "reshape", {x}, [](Node<T>& self) {
    if (auto* gx = input_grad(self, 0)) add_into(*gx, self.grad);
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  require(axis < s.size(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t len = s[axis];

  Tensor<T> out(s);
  const T* xv = x.value().data();
  T* o = out.data();
  const i64 lines = static_cast<i64>(outer * inner);
#pragma omp parallel for schedule(static)
  for (i64 l = 0; l < lines; ++l) {
    const std::size_t base = (l / inner) * len * inner + (l % inner);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
    T z = T(0);
    for (std::size_t k = 0; k < len; ++k) {
      const T e = std::exp(xv[base + k * inner] - mx);
      o[base + k * inner] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) o[base + k * inner] /= z;
  }

  return Var<T>::make(std::move(out), "softmax", {x}, [outer, inner, len](Node<T>& self) {
    auto* gx = input_grad(self, 0);
    if (!gx) return;
    const T* y = self.value.data();
    const T* dy = self.grad.data();
    T* dx = gx->data();
    const i64 lines = static_cast<i64>(outer * inner);
#pragma omp parallel for schedule(static)
    for (i64 l = 0; l < lines; ++l) {
      const std::size_t base = (l / inner) * len * inner + (l % inner);
      T dot = T(0);
      for (std::size_t k = 0; k < len; ++k) dot += dy[base + k * inner] * y[base + k * inner];
      for (std::size_t k = 0; k < len; ++k)
        dx[base + k * inner] += y[base + k * inner] * (dy[base + k * inner] - dot);
    }
  });
}

template <typename T>
Var<T> cost_volume(const Var<T>& left, const Var<T>& right, std::size_t disparities) {
  require(left.shape().size() == 3, "cost_volume: features must be [H, W, F], got " +
                                        shape_str(left.shape()));
  require(left.shape() == right.shape(), "cost_volume: left " + shape_str(left.shape()) +
                                             " and right " + shape_str(right.shape()) +
                                             " feature maps differ");
  const std::size_t H = left.shape()[0], W = left.shape()[1], F = left.shape()[2];
  require(disparities >= 1, "cost_volume: need at least one disparity level");
  require(disparities <= W, "cost_volume: " + std::to_string(disparities) +
                                " disparity levels exceed feature width " + std::to_string(W));
  Tensor<T> vol(Shape{disparities, H, W, 2 * F});
  kernels::cost_volume_forward(disparities, H, W, F, left.value().data(), right.value().data(),
                               vol.data());
  return Var<T>::make(std::move(vol), "cost_volume", {left, right},
                      [disparities, H, W, F](Node<T>& self) {
                        Tensor<T> gl(Shape{H, W, F}), gr(Shape{H, W, F});
                        kernels::cost_volume_backward(disparities, H, W, F, self.grad.data(),
                                                      gl.data(), gr.data());
                        if (auto* g = input_grad(self, 0)) add_into(*g, gl);
                        if (auto* g = input_grad(self, 1)) add_into(*g, gr);
                      });
}

template <typename T>
Var<T> soft_argmin(const Var<T>& costs) {
  const Shape& s = costs.shape();
  require(s.size() == 3 || (s.size() == 4 && s[3] == 1),
          "soft_argmin: costs must be [D, H, W] or [D, H, W, 1], got " + shape_str(s));
  const std::size_t D = s[0], H = s[1], W = s[2];
  const std::size_t plane = H * W;

  Tensor<T> prob(Shape{D, H, W});
  Tensor<T> out(Shape{H, W});
  const T* c = costs.value().data();
  const i64 n_pix = static_cast<i64>(plane);
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < n_pix; ++p) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t d = 0; d < D; ++d) mx = std::max(mx, -c[d * plane + p]);
    T z = T(0);
    for (std::size_t d = 0; d < D; ++d) {
      const T e = std::exp(-c[d * plane + p] - mx);
      prob[d * plane + p] = e;
      z += e;
    }
    T expect = T(0);
    for (std::size_t d = 0; d < D; ++d) {
      prob[d * plane + p] /= z;
      expect += T(d) * prob[d * plane + p];
    }
    out[p] = expect;
  }

  return Var<T>::make(std::move(out), "soft_argmin", {costs},
                      [prob = std::move(prob), D, plane](Node<T>& self) {
                        auto* gc = input_grad(self, 0);
                        if (!gc) return;
                        const i64 n_pix = static_cast<i64>(plane);
                        T* dc = gc->data();
#pragma omp parallel for schedule(static)
                        for (i64 p = 0; p < n_pix; ++p) {
                          const T g = self.grad[p];
                          const T mean = self.value[p];
                          for (std::size_t d = 0; d < D; ++d)
                            dc[d * plane + p] -= g * prob[d * plane + p] * (T(d) - mean);
                        }
                      });
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& gt, const Tensor<std::uint8_t>& mask) {
  require(pred.shape() == gt.shape() && gt.shape() == mask.shape(),
          "l1_loss: pred " + shape_str(pred.shape()) + ", gt " + shape_str(gt.shape()) +
              " and mask " + shape_str(mask.shape()) + " must match");
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (mask[i]) {
      ++count;
      total += std::abs(double(pred.value()[i]) - double(gt[i]));
    }
  if (count == 0) throw std::invalid_argument("l1_loss: mask has no valid pixels");
  const T inv_n = T(1.0 / double(count));
  return Var<T>::make(Tensor<T>(Shape{1}, T(total / double(count))), "l1_loss", {pred},
                      [gt, mask, inv_n](Node<T>& self) {
                        auto* gp = input_grad(self, 0);
                        if (!gp) return;
                        const auto& p = self.inputs[0]->value;
                        const T g = self.grad[0] * inv_n;
                        for (std::size_t i = 0; i < gt.size(); ++i) {
                          if (!mask[i]) continue;
                          const T diff = p[i] - gt[i];
                          (*gp)[i] += diff > T(0) ? g : (diff < T(0) ? -g : T(0));
                        }
                      });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& costs, const Tensor<T>& target,
                     const Tensor<std::uint8_t>& mask) {
  const Shape& s = costs.shape();
  require(s.size() == 3, "cross_entropy: costs must be [D, H, W], got " + shape_str(s));
  require(target.shape() == s, "cross_entropy: target shape " + shape_str(target.shape()) +
                                   " does not match costs " + shape_str(s));
  require(mask.shape() == Shape({s[1], s[2]}), "cross_entropy: mask must be [H, W]");
  const std::size_t D = s[0], plane = s[1] * s[2];
  const T* c = costs.value().data();

  Tensor<T> prob(s);
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t d = 0; d < D; ++d) mx = std::max(mx, -c[d * plane + p]);
    T z = T(0);
    for (std::size_t d = 0; d < D; ++d) z += std::exp(-c[d * plane + p] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t d = 0; d < D; ++d) prob[d * plane + p] = std::exp(-c[d * plane + p] - lse);
    if (!mask[p]) continue;
    ++count;
    for (std::size_t d = 0; d < D; ++d)
      total -= double(target[d * plane + p]) * (double(-c[d * plane + p]) - double(lse));
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: mask has no valid pixels");
  const T inv_n = T(1.0 / double(count));
  return Var<T>::make(Tensor<T>(Shape{1}, T(total / double(count))), "cross_entropy", {costs},
                      [prob = std::move(prob), target, mask, inv_n, D, plane](Node<T>& self) {
                        auto* gc = input_grad(self, 0);
                        if (!gc) return;
                        const T g = self.grad[0] * inv_n;
                        for (std::size_t p = 0; p < plane; ++p) {
                          if (!mask[p]) continue;
                          for (std::size_t d = 0; d < D; ++d) {
                            const std::size_t i = d * plane + p;
                            (*gc)[i] += g * (target[i] - prob[i]);
                          }
                        }
                      });
}

template <typename T>
Var<T> upsample2x(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  require(axis < s.size(), "upsample2x: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t n = s[axis];
  Shape os = s;
  os[axis] = 2 * n;
  Tensor<T> out(os);
  const T* xv = x.value().data();
  T* o = out.data();
  const i64 n_outer = static_cast<i64>(outer);
#pragma omp parallel for schedule(static)
  for (i64 a = 0; a < n_outer; ++a)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t prev = i == 0 ? 0 : i - 1;
      const std::size_t next = i + 1 == n ? i : i + 1;
      const T* xi = xv + (a * n + i) * inner;
      const T* xp = xv + (a * n + prev) * inner;
      const T* xn = xv + (a * n + next) * inner;
      T* o0 = o + (a * 2 * n + 2 * i) * inner;
      T* o1 = o0 + inner;
      for (std::size_t k = 0; k < inner; ++k) {
        o0[k] = T(0.75) * xi[k] + T(0.25) * xp[k];
        o1[k] = T(0.75) * xi[k] + T(0.25) * xn[k];
      }
    }
  return Var<T>::make(std::move(out), "upsample2x", {x}, [outer, inner, n](Node<T>& self) {
    auto* gx = input_grad(self, 0);
    if (!gx) return;
    const T* dy = self.grad.data();
    T* dx = gx->data();
    const i64 n_outer = static_cast<i64>(outer);
#pragma omp parallel for schedule(static)
    for (i64 a = 0; a < n_outer; ++a)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t prev = i == 0 ? 0 : i - 1;
        const std::size_t next = i + 1 == n ? i : i + 1;
        const T* g0 = dy + (a * 2 * n + 2 * i) * inner;
        const T* g1 = g0 + inner;
        T* di = dx + (a * n + i) * inner;
        T* dp = dx + (a * n + prev) * inner;
        T* dn = dx + (a * n + next) * inner;
        for (std::size_t k = 0; k < inner; ++k) {
          di[k] += T(0.75) * (g0[k] + g1[k]);
          dp[k] += T(0.25) * g0[k];
          dn[k] += T(0.25) * g1[k];
        }
      }
  });
}

#define GCNET_INSTANTIATE(T)                                                                     \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&);          \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&);          \
  template Var<T> conv3d_transposed(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                    const ConvSpec&, std::optional<std::array<std::size_t, 3>>); \
  template Var<T> conv(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&);            \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, RunningStats<T>*,      \
                             const BatchNormOptions&);                                           \
  template Var<T> relu(const Var<T>&);                                                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> sum(const Var<T>&);                                                            \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> softmax(const Var<T>&, std::size_t);                                           \
  template Var<T> cost_volume(const Var<T>&, const Var<T>&, std::size_t);                        \
  template Var<T> soft_argmin(const Var<T>&);                                                    \
  template Var<T> l1_loss(const Var<T>&, const Tensor<T>&, const Tensor<std::uint8_t>&);         \
  template Var<T> cross_entropy(const Var<T>&, const Tensor<T>&, const Tensor<std::uint8_t>&);   \
  template Var<T> upsample2x(const Var<T>&, std::size_t);
GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)
#undef GCNET_INSTANTIATE

}  // namespace gcnet
