#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "pai/kernels.hpp"
#include "pai/tensor.hpp"

namespace pai {
namespace {

Tape& same_tape(const char* op, Var a) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": input is not attached to a tape");
  return *a.tape();
}

Tape& same_tape(const char* op, Var a, Var b) {
  Tape& t = same_tape(op, a);
  if (b.tape() != &t) throw std::invalid_argument(std::string(op) + ": inputs live on different tapes");
  return t;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_error(const char* op, const Shape& a) {
  throw std::invalid_argument(std::string(op) + ": unsupported shape " + shape_str(a));
}

void accumulate(std::vector<double>& dst, std::span<const double> src) {
  kernels::axpy(1.0, src, dst);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape("matmul", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error("matmul", sa, sb);
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out = Tensor::zeros({m, n});
  kernels::gemm_nn({m, n, k}, a.value().data.data(), b.value().data.data(), out.data.data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, m, n, k](Tape& t, std::size_t self) {
    const auto& gy = t.node_grad(self);
    if (t.node_requires_grad(ia)) {
      kernels::gemm_nt({m, k, n}, gy.data(), t.node_value(ib).data.data(), t.node_grad(ia).data(), true);
    }
    if (t.node_requires_grad(ib)) {
      kernels::gemm_tn({k, n, m}, t.node_value(ia).data.data(), gy.data(), t.node_grad(ib).data(), true);
    }
  });
}

Var linear(Var x, Var w) {
  Tape& tape = same_tape("linear", x, w);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1]) shape_error("linear", sx, sw);
  const std::size_t batch = sx[0], in = sx[1], out_features = sw[0];
  Tensor out = Tensor::zeros({batch, out_features});
  kernels::gemm_nt({batch, out_features, in}, x.value().data.data(), w.value().data.data(), out.data.data(), false);
  const std::size_t ix = x.id(), iw = w.id();
  return tape.record(std::move(out), {ix, iw}, [ix, iw, batch, in, out_features](Tape& t, std::size_t self) {
    const auto& gy = t.node_grad(self);
    if (t.node_requires_grad(ix)) {
      kernels::gemm_nn({batch, in, out_features}, gy.data(), t.node_value(iw).data.data(), t.node_grad(ix).data(), true);
    }
    if (t.node_requires_grad(iw)) {
      kernels::gemm_tn({out_features, in, batch}, gy.data(), t.node_value(ix).data.data(), t.node_grad(iw).data(), true);
    }
  });
}

Var add_bias(Var x, Var b) {
  Tape& tape = same_tape("add_bias", x, b);
  const Shape& sx = x.shape();
  const Shape& sb = b.shape();
  if ((sx.size() != 2 && sx.size() != 4) || sb.size() != 1 || sb[0] != sx[1]) shape_error("add_bias", sx, sb);
  const std::size_t n = sx[0], c = sx[1];
  const std::size_t inner = sx.size() == 4 ? sx[2] * sx[3] : 1;
  Tensor out = x.value();
  out.grad.reset();
  const auto& bias = b.value().data;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* row = out.data.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) row[j] += bias[ch];
    }
  }
  const std::size_t ix = x.id(), ib = b.id();
  return tape.record(std::move(out), {ix, ib}, [ix, ib, n, c, inner](Tape& t, std::size_t self) {
    const auto& gy = t.node_grad(self);
    if (t.node_requires_grad(ix)) accumulate(t.node_grad(ix), gy);
    if (t.node_requires_grad(ib)) {
      auto& gb = t.node_grad(ib);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* row = gy.data() + (i * c + ch) * inner;
          double s = 0.0;
          for (std::size_t j = 0; j < inner; ++j) s += row[j];
          gb[ch] += s;
        }
      }
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t o, kh, kw;
  std::size_t stride, pad;
  std::size_t oh, ow;
  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return oh * ow; }
};

// Unfolds one sample (c,h,w) into a (c*kh*kw, oh*ow) matrix.
void im2col(const ConvGeometry& g, const double* x, double* col) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* dst = col + ((ch * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const std::ptrdiff_t xj =
                static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = yi >= 0 && xj >= 0 && yi < static_cast<std::ptrdiff_t>(g.h) &&
                                xj < static_cast<std::ptrdiff_t>(g.w);
            dst[oi * g.ow + oj] = inside ? x[(ch * g.h + static_cast<std::size_t>(yi)) * g.w + static_cast<std::size_t>(xj)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* src = col + ((ch * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const std::ptrdiff_t xj =
                static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (xj < 0 || xj >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(ch * g.h + static_cast<std::size_t>(yi)) * g.w + static_cast<std::size_t>(xj)] += src[oi * g.ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Conv2dParams params) {
  Tape& tape = same_tape("conv2d", x, w);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1]) shape_error("conv2d", sx, sw);
  if (params.stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvGeometry g{sx[0], sx[1], sx[2], sx[3], sw[0], sw[2], sw[3], params.stride, params.padding, 0, 0};
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) shape_error("conv2d", sx, sw);
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  const std::size_t col_size = g.col_rows() * g.col_cols();
  auto cols = std::make_shared<std::vector<double>>(g.n * col_size);
  Tensor out = Tensor::zeros({g.n, g.o, g.oh, g.ow});
  const double* xd = x.value().data.data();
  const double* wd = w.value().data.data();
  for (std::size_t i = 0; i < g.n; ++i) {
    double* col = cols->data() + i * col_size;
    im2col(g, xd + i * g.c * g.h * g.w, col);
    kernels::gemm_nn({g.o, g.col_cols(), g.col_rows()}, wd, col, out.data.data() + i * g.o * g.col_cols(), false);
  }
  const std::size_t ix = x.id(), iw = w.id();
  return tape.record(std::move(out), {ix, iw}, [ix, iw, g, cols, col_size](Tape& t, std::size_t self) {
    const auto& gy = t.node_grad(self);
    const std::size_t out_plane = g.o * g.col_cols();
    if (t.node_requires_grad(iw)) {
      auto& gw = t.node_grad(iw);
      for (std::size_t i = 0; i < g.n; ++i) {
        kernels::gemm_nt({g.o, g.col_rows(), g.col_cols()}, gy.data() + i * out_plane, cols->data() + i * col_size,
                         gw.data(), true);
      }
    }
    if (t.node_requires_grad(ix)) {
      auto& gx = t.node_grad(ix);
      std::vector<double> dcol(col_size);
      const double* wd = t.node_value(iw).data.data();
      for (std::size_t i = 0; i < g.n; ++i) {
        kernels::gemm_tn({g.col_rows(), g.col_cols(), g.o}, wd, gy.data() + i * out_plane, dcol.data(), false);
        col2im_add(g, dcol.data(), gx.data() + i * g.c * g.h * g.w);
      }
    }
  });
}

Var relu(Var x) {
  Tape& tape = same_tape("relu", x);
  Tensor out = Tensor::zeros(x.shape());
  kernels::relu(x.value().data, out.data);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    kernels::relu_backward(t.node_value(ix).data, t.node_grad(self), t.node_grad(ix));
  });
}

Var flatten(Var x) {
  Tape& tape = same_tape("flatten", x);
  const Shape& sx = x.shape();
  if (sx.empty()) shape_error("flatten", sx);
  Tensor out(Shape{sx[0], x.value().numel() / sx[0]}, x.value().data);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix},
                     [ix](Tape& t, std::size_t self) { accumulate(t.node_grad(ix), t.node_grad(self)); });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape("mul", a, b);
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out = Tensor::zeros(a.shape());
  kernels::hadamard(a.value().data, b.value().data, out.data);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& gy = t.node_grad(self);
    std::vector<double> tmp(gy.size());
    if (t.node_requires_grad(ia)) {
      kernels::hadamard(gy, t.node_value(ib).data, tmp);
      accumulate(t.node_grad(ia), tmp);
    }
    if (t.node_requires_grad(ib)) {
      kernels::hadamard(gy, t.node_value(ia).data, tmp);
      accumulate(t.node_grad(ib), tmp);
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape("add", a, b);
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor out = a.value();
  out.grad.reset();
  accumulate(out.data, b.value().data);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& gy = t.node_grad(self);
    if (t.node_requires_grad(ia)) accumulate(t.node_grad(ia), gy);
    if (t.node_requires_grad(ib)) accumulate(t.node_grad(ib), gy);
  });
}

Var scale(Var x, double factor) {
  Tape& tape = same_tape("scale", x);
  if (!std::isfinite(factor)) throw std::domain_error("scale: non-finite factor");
  Tensor out = x.value();
  out.grad.reset();
  for (double& v : out.data) v *= factor;
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, factor](Tape& t, std::size_t self) {
    kernels::axpy(factor, t.node_grad(self), t.node_grad(ix));
  });
}

Var sum(Var x) {
  Tape& tape = same_tape("sum", x);
  double s = 0.0;
  for (double v : x.value().data) s += v;
  const std::size_t ix = x.id();
  return tape.record(Tensor::scalar(s), {ix}, [ix](Tape& t, std::size_t self) {
    const double gy = t.node_grad(self)[0];
    for (double& g : t.node_grad(ix)) g += gy;
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& tape = same_tape("softmax_cross_entropy", logits);
  const Shape& s = logits.shape();
  if (s.size() != 2) shape_error("softmax_cross_entropy", s);
  const std::size_t n = s[0], classes = s[1];
  if (labels.size() != n) {
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                                shape_str(s));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0," +
                              std::to_string(classes) + ")");
    }
  }
  const auto& z = logits.value().data;
  // Softmax probabilities minus one-hot, scaled by 1/n: exactly dL/dlogits.
  auto dlogits = std::make_shared<std::vector<double>>(n * classes);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data() + i * classes;
    const double zmax = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - zmax);
    const double lse = zmax + std::log(denom);
    const auto label = static_cast<std::size_t>(labels[i]);
    total += lse - row[label];
    for (std::size_t c = 0; c < classes; ++c) {
      (*dlogits)[i * classes + c] = (std::exp(row[c] - lse) - (c == label ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  const std::size_t il = logits.id();
  return tape.record(Tensor::scalar(total / static_cast<double>(n)), {il}, [il, dlogits](Tape& t, std::size_t self) {
    kernels::axpy(t.node_grad(self)[0], *dlogits, t.node_grad(il));
  });
}

}  // namespace pai
