#include "oba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "oba/errors.hpp"

namespace oba {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t count) const {
  if (shape_.empty() || begin + count > shape_[0]) {
    throw DimensionError("row slice out of range for " + shape_to_string(shape_));
  }
  const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = count;
  return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                                  data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * stride)));
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

double pairwise_sum(const double* p, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(p, h) + pairwise_sum(p + h, n - h);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw DimensionError("conv: stride must be >= 1");
  if (kernel == 0 || kernel > in + 2 * pad) {
    throw DimensionError("conv: kernel " + std::to_string(kernel) + " does not fit extent " +
                         std::to_string(in) + " with padding " + std::to_string(pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, cout, k, ho, wo;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
  if (x.size() != 3 || w.size() != 4 || w[1] != x[0] || w[2] != w[3]) {
    throw DimensionError("conv2d: input " + shape_to_string(x) + " incompatible with weight " +
                         shape_to_string(w));
  }
  ConvGeometry g{x[0], x[1], x[2], w[0], w[2], 0, 0};
  g.ho = conv_out_extent(g.h, g.k, stride, pad);
  g.wo = conv_out_extent(g.w, g.k, stride, pad);
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, pad);
  if (b.size() != 0 && !(b.rank() == 1 && b.dim(0) == g.cout)) {
    throw DimensionError("conv2d: bias " + shape_to_string(b.shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
  }
  Tensor y({g.cout, g.ho, g.wo});
  const auto ip = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t o = 0; o < g.cout; ++o) {
    const double bias = b.size() ? b[o] : 0.0;
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
      for (std::size_t ox = 0; ox < g.wo; ++ox) {
        double s = 0.0;
        for (std::size_t c = 0; c < g.cin; ++c) {
          for (std::size_t ky = 0; ky < g.k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ip;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kx = 0; kx < g.k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ip;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              s += w[((o * g.cin + c) * g.k + ky) * g.k + kx] *
                   x[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)];
            }
          }
        }
        y[(o * g.ho + oy) * g.wo + ox] = s + bias;
      }
    }
  }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const Shape& x_shape, std::size_t stride,
                         std::size_t pad) {
  const ConvGeometry g = conv_geometry(x_shape, w.shape(), stride, pad);
  if (gy.shape() != Shape{g.cout, g.ho, g.wo}) {
    throw DimensionError("conv2d_input_grad: upstream " + shape_to_string(gy.shape()) + " does not match output");
  }
  Tensor gx(x_shape);
  const auto ip = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t o = 0; o < g.cout; ++o) {
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
      for (std::size_t ox = 0; ox < g.wo; ++ox) {
        const double up = gy[(o * g.ho + oy) * g.wo + ox];
        if (up == 0.0) continue;
        for (std::size_t c = 0; c < g.cin; ++c) {
          for (std::size_t ky = 0; ky < g.k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ip;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kx = 0; kx < g.k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ip;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              gx[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] +=
                  up * w[((o * g.cin + c) * g.k + ky) * g.k + kx];
            }
          }
        }
      }
    }
  }
  return gx;
}

void conv2d_weight_grad_accumulate(const Tensor& x, const Tensor& gy, Tensor& gw, std::size_t stride,
                                   std::size_t pad) {
  const ConvGeometry g = conv_geometry(x.shape(), gw.shape(), stride, pad);
  const auto ip = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t o = 0; o < g.cout; ++o) {
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
      for (std::size_t ox = 0; ox < g.wo; ++ox) {
        const double up = gy[(o * g.ho + oy) * g.wo + ox];
        if (up == 0.0) continue;
        for (std::size_t c = 0; c < g.cin; ++c) {
          for (std::size_t ky = 0; ky < g.k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ip;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kx = 0; kx < g.k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ip;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              gw[((o * g.cin + c) * g.k + ky) * g.k + kx] +=
                  up * x[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax_rows expects rank 2, got " + shape_to_string(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(row[j] - mx);
      y[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= z;
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (double& v : c.storage()) v *= s;
  return c;
}

Tensor relu(const Tensor& a) {
  Tensor c = a;
  for (double& v : c.storage()) v = v > 0.0 ? v : 0.0;
  return c;
}

void axpy(double s, const Tensor& b, Tensor& a) {
  require_same(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

double sum(const Tensor& a) { return pairwise_sum(a.data().data(), a.size()); }

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: size mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

Tensor sum_over_axes(const Tensor& a, const std::vector<std::size_t>& axes) {
  std::vector<bool> reduce(a.rank(), false);
  for (std::size_t ax : axes) {
    if (ax >= a.rank()) throw DimensionError("sum_over_axes: axis out of range for " + shape_to_string(a.shape()));
    reduce[ax] = true;
  }
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (!reduce[i]) out_shape.push_back(a.dim(i));
  Tensor out(out_shape);
  std::vector<std::size_t> idx(a.rank(), 0);
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < a.rank(); ++i)
      if (!reduce[i]) o = o * a.dim(i) + idx[i];
    out[o] += a[flat];
    for (std::size_t i = a.rank(); i-- > 0;) {
      if (++idx[i] < a.dim(i)) break;
      idx[i] = 0;
    }
  }
  return out;
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace oba
