#include "layer_ops.hpp"

#include <algorithm>
#include <string>
#include <type_traits>

#include "apemkit/error.hpp"

namespace apemkit::detail {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_rank3(const Shape& in, std::string_view kind) {
  if (in.size() != 3) {
    throw ShapeError(std::string(kind) + " layer expects (channels, height, width) input, got " +
                     shape_string(in));
  }
}

}  // namespace

Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const DenseLayer& d) -> Shape {
            if (d.weight.rank() != 2 || d.bias.rank() != 1 || d.bias.dim(0) != d.weight.dim(0)) {
              throw ShapeError("dense layer weight/bias shapes are inconsistent");
            }
            if (in.size() != 1 || in[0] != d.weight.dim(1)) {
              throw ShapeError("dense layer expects input (" + std::to_string(d.weight.dim(1)) +
                               "), got " + shape_string(in));
            }
            return {d.weight.dim(0)};
          },
          [&](const Conv2dLayer& c) -> Shape {
            require_rank3(in, "conv2d");
            if (c.weight.rank() != 4 || c.weight.dim(2) != c.weight.dim(3) || c.bias.rank() != 1 ||
                c.bias.dim(0) != c.weight.dim(0)) {
              throw ShapeError("conv2d weight/bias shapes are inconsistent");
            }
            if (c.stride == 0) throw ShapeError("conv2d stride must be >= 1");
            if (in[0] != c.weight.dim(1)) {
              throw ShapeError("conv2d expects " + std::to_string(c.weight.dim(1)) +
                               " input channels, got " + shape_string(in));
            }
            const std::size_t k = c.weight.dim(2);
            if (in[1] + 2 * c.padding < k || in[2] + 2 * c.padding < k) {
              throw ShapeError("conv2d kernel larger than padded input " + shape_string(in));
            }
            return {c.weight.dim(0), (in[1] + 2 * c.padding - k) / c.stride + 1,
                    (in[2] + 2 * c.padding - k) / c.stride + 1};
          },
          [&](const ReluLayer&) -> Shape { return in; },
          [&](const MaxPool2dLayer& p) -> Shape {
            require_rank3(in, "maxpool2d");
            if (p.size == 0 || p.stride == 0 || p.size > in[1] || p.size > in[2]) {
              throw ShapeError("maxpool2d window does not fit input " + shape_string(in));
            }
            return {in[0], (in[1] - p.size) / p.stride + 1, (in[2] - p.size) / p.stride + 1};
          },
          [&](const FlattenLayer&) -> Shape { return {element_count(in)}; },
      },
      layer);
}

std::vector<std::size_t> maxpool_argmax(const MaxPool2dLayer& p, const Tensor& in,
                                        const Shape& out) {
  const std::size_t h = in.dim(1), w = in.dim(2);
  std::vector<std::size_t> idx(element_count(out));
  std::size_t o = 0;
  for (std::size_t c = 0; c < out[0]; ++c) {
    for (std::size_t oy = 0; oy < out[1]; ++oy) {
      for (std::size_t ox = 0; ox < out[2]; ++ox, ++o) {
        std::size_t best = (c * h + oy * p.stride) * w + ox * p.stride;
        for (std::size_t ky = 0; ky < p.size; ++ky) {
          for (std::size_t kx = 0; kx < p.size; ++kx) {
            const std::size_t i = (c * h + oy * p.stride + ky) * w + ox * p.stride + kx;
            // strict comparison keeps the first maximum in row-major order
            if (in[i] > in[best]) best = i;
          }
        }
        idx[o] = best;
      }
    }
  }
  return idx;
}

namespace {

// Range of output columns [lo, hi) whose tap `kx` lands inside the input row.
struct TapRange {
  std::size_t lo, hi;
};

TapRange tap_range(std::size_t kx, std::size_t pad, std::size_t stride, std::size_t in_len,
                   std::size_t out_len) {
  // need 0 <= o * stride + kx - pad < in_len
  std::size_t lo = 0;
  if (pad > kx) lo = (pad - kx + stride - 1) / stride;
  if (in_len + pad <= kx) return {0, 0};
  std::size_t hi = (in_len + pad - kx - 1) / stride + 1;
  hi = std::min(hi, out_len);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

// Visits every (output row, input row) pair for kernel row `ky`.
template <class F>
void for_each_row(std::size_t ky, std::size_t pad, std::size_t stride, std::size_t in_h,
                  std::size_t out_h, F&& f) {
  const auto r = tap_range(ky, pad, stride, in_h, out_h);
  for (std::size_t oy = r.lo; oy < r.hi; ++oy) f(oy, oy * stride + ky - pad);
}

Tensor conv_forward(const Conv2dLayer& c, const Tensor& in, const Shape& out_shape) {
  Tensor out(out_shape);
  const std::size_t ic_n = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t k = c.weight.dim(2), s = c.stride, pad = c.padding;
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  for (std::size_t oc = 0; oc < out_shape[0]; ++oc) {
    double* plane = &out[oc * oh * ow];
    std::fill(plane, plane + oh * ow, c.bias[oc]);
    for (std::size_t ic = 0; ic < ic_n; ++ic) {
      const double* src = &in[ic * h * w];
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = c.weight[((oc * ic_n + ic) * k + ky) * k + kx];
          const auto cols = tap_range(kx, pad, s, w, ow);
          for_each_row(ky, pad, s, h, oh, [&](std::size_t oy, std::size_t iy) {
            double* orow = plane + oy * ow;
            const double* irow = src + iy * w;
            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wv * irow[ox * s + kx - pad];
          });
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor conv_transpose(const Conv2dLayer& c, const Shape& in_shape, const Tensor& g) {
  Tensor grad_in(in_shape);
  const std::size_t ic_n = in_shape[0], h = in_shape[1], w = in_shape[2];
  const std::size_t k = c.weight.dim(2), s = c.stride, pad = c.padding;
  const std::size_t oh = g.dim(1), ow = g.dim(2);
  for (std::size_t oc = 0; oc < g.dim(0); ++oc) {
    const double* plane = &g[oc * oh * ow];
    for (std::size_t ic = 0; ic < ic_n; ++ic) {
      double* dst = &grad_in[ic * h * w];
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = c.weight[((oc * ic_n + ic) * k + ky) * k + kx];
          const auto cols = tap_range(kx, pad, s, w, ow);
          for_each_row(ky, pad, s, h, oh, [&](std::size_t oy, std::size_t iy) {
            const double* grow = plane + oy * ow;
            double* drow = dst + iy * w;
            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox * s + kx - pad] += wv * grow[ox];
          });
        }
      }
    }
  }
  return grad_in;
}

Tensor dense_transpose(const DenseLayer& d, const Tensor& g) {
  const std::size_t out = d.weight.dim(0), in = d.weight.dim(1);
  Tensor grad_in(Shape{in});
  for (std::size_t j = 0; j < out; ++j) {
    const double gj = g[j];
    if (gj == 0.0) continue;
    const double* row = &d.weight[j * in];
    for (std::size_t i = 0; i < in; ++i) grad_in[i] += row[i] * gj;
  }
  return grad_in;
}

Tensor layer_forward(const Layer& layer, const Tensor& in, const Shape& out_shape) {
  return std::visit(
      Overloaded{
          [&](const DenseLayer& d) {
            const std::size_t out = d.weight.dim(0), n = d.weight.dim(1);
            Tensor y(out_shape);
            for (std::size_t j = 0; j < out; ++j) {
              const double* row = &d.weight[j * n];
              double s = d.bias[j];
              for (std::size_t i = 0; i < n; ++i) s += row[i] * in[i];
              y[j] = s;
            }
            return y;
          },
          [&](const Conv2dLayer& c) { return conv_forward(c, in, out_shape); },
          [&](const ReluLayer&) {
            Tensor y = in;
            for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
            return y;
          },
          [&](const MaxPool2dLayer& p) {
            const auto idx = maxpool_argmax(p, in, out_shape);
            Tensor y(out_shape);
            for (std::size_t o = 0; o < idx.size(); ++o) y[o] = in[idx[o]];
            return y;
          },
          [&](const FlattenLayer&) { return in.reshaped(out_shape); },
      },
      layer);
}

Tensor layer_backward(const Layer& layer, const Tensor& in, Tensor grad_out, ReluBackward mode) {
  return std::visit(
      Overloaded{
          [&](const DenseLayer& d) { return dense_transpose(d, grad_out); },
          [&](const Conv2dLayer& c) { return conv_transpose(c, in.shape(), grad_out); },
          [&](const ReluLayer&) {
            for (std::size_t i = 0; i < grad_out.size(); ++i) {
              const bool blocked =
                  !(in[i] > 0.0) || (mode == ReluBackward::Guided && grad_out[i] < 0.0);
              if (blocked) grad_out[i] = 0.0;
            }
            return grad_out;
          },
          [&](const MaxPool2dLayer& p) {
            const auto idx = maxpool_argmax(p, in, grad_out.shape());
            Tensor grad_in(in.shape());
            for (std::size_t o = 0; o < idx.size(); ++o) grad_in[idx[o]] += grad_out[o];
            return grad_in;
          },
          [&](const FlattenLayer&) { return grad_out.reshaped(in.shape()); },
      },
      layer);
}

void layer_parameter_gradients(const Layer& layer, const Tensor& in, const Tensor& g,
                               Tensor& grad_weight, Tensor& grad_bias) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    const std::size_t out = d->weight.dim(0), n = d->weight.dim(1);
    for (std::size_t j = 0; j < out; ++j) {
      grad_bias[j] += g[j];
      double* row = &grad_weight[j * n];
      for (std::size_t i = 0; i < n; ++i) row[i] += g[j] * in[i];
    }
  } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
    const std::size_t ic_n = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t k = c->weight.dim(2), s = c->stride, pad = c->padding;
    const std::size_t oh = g.dim(1), ow = g.dim(2);
    for (std::size_t oc = 0; oc < g.dim(0); ++oc) {
      const double* plane = &g[oc * oh * ow];
      for (std::size_t i = 0; i < oh * ow; ++i) grad_bias[oc] += plane[i];
      for (std::size_t ic = 0; ic < ic_n; ++ic) {
        const double* src = &in[ic * h * w];
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto cols = tap_range(kx, pad, s, w, ow);
            double acc = 0.0;
            for_each_row(ky, pad, s, h, oh, [&](std::size_t oy, std::size_t iy) {
              const double* grow = plane + oy * ow;
              const double* irow = src + iy * w;
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) acc += grow[ox] * irow[ox * s + kx - pad];
            });
            grad_weight[((oc * ic_n + ic) * k + ky) * k + kx] += acc;
          }
        }
      }
    }
  }
}

}  // namespace apemkit::detail
