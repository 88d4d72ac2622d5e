#include "csiqa/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "csiqa/errors.hpp"

namespace csiqa::nn {

namespace {

using Impl = detail::TensorImpl;
using ImplPtr = std::shared_ptr<Impl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!GradTape::current()) return false;
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, std::vector<double> values, bool track) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (track) out.set_requires_grad(true);
  return out;
}

void record(const Tensor& out, GradTape::BackwardFn fn) {
  GradTape::current()->record(out.impl(), std::move(fn));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  const bool track = tracking({&x});
  const auto src = x.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
  Tensor y = make_output(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr xi = x.impl();
    Impl* yi = y.impl().get();
    record(y, [xi, yi, df] {
      auto& gx = xi->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yi->grad[i] * df(xi->data[i], yi->data[i]);
    });
  }
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const bool track = tracking({&a, &b});
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor y = make_output({m, n}, std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, bi, yi, m, k, n] {
      if (ai->requires_grad) gemm_nt(yi->grad.data(), bi->data.data(), ai->ensure_grad().data(), m, n, k);
      if (bi->requires_grad) gemm_tn(ai->data.data(), yi->grad.data(), bi->ensure_grad().data(), m, k, n);
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<std::size_t> index(m * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) index[i * m + j] = j * n + i;
  return gather(a, std::move(index), {n, m});
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool track = tracking({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y = make_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, bi, yi] {
      for (Impl* in : {ai.get(), bi.get()}) {
        if (!in->requires_grad) continue;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const bool track = tracking({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor y = make_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, bi, yi] {
      if (ai->requires_grad) {
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= yi->grad[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool track = tracking({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y = make_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, bi, yi] {
      if (ai->requires_grad) {
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * ai->data[i];
      }
    });
  }
  return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const bool track = tracking({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  Tensor y = make_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, bi, yi] {
      if (ai->requires_grad) {
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] / bi->data[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= yi->grad[i] * yi->data[i] / bi->data[i];
      }
    });
  }
  return y;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_bias");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(a.shape()));
  }
  const bool track = tracking({&a, &bias});
  std::vector<double> out(m * n);
  const auto av = a.data();
  const auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + bv[j];
  Tensor y = make_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl(), bi = bias.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, bi, yi, m, n] {
      if (ai->requires_grad) {
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[j] += yi->grad[i * n + j];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must have one element, got " + shape_str(s.shape()));
  const bool track = tracking({&a, &s});
  const double f = s.item();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f * a[i];
  Tensor y = make_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl(), si = s.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, si, yi] {
      if (ai->requires_grad) {
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * si->data[0];
      }
      if (si->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < yi->grad.size(); ++i) acc += yi->grad[i] * ai->data[i];
        si->ensure_grad()[0] += acc;
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& a) {
  const bool track = tracking({&a});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor y = make_output({1}, {acc}, track);
  if (track) {
    ImplPtr ai = a.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, yi] {
      auto& g = ai->ensure_grad();
      for (auto& v : g) v += yi->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const bool track = tracking({&x});
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  }
  Tensor y = make_output(s, std::move(out), track);
  if (track) {
    ImplPtr xi = x.impl();
    Impl* yi = y.impl().get();
    record(y, [xi, yi, outer, inner, len] {
      auto& gx = xi->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t idx = base + k * inner;
            dot += yi->grad[idx] * yi->data[idx];
          }
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t idx = base + k * inner;
            gx[idx] += yi->data[idx] * (yi->grad[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.shape().back();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match last extent of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const bool track = tracking({&x, &gain, &bias});
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * is;
      out[r * n + j] = gv[j] * xhat[r * n + j] + bv[j];
    }
  }
  Tensor y = make_output(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl();
    Impl* yi = y.impl().get();
    record(y, [xi, gi, bi, yi, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n] {
      const auto& gy = yi->grad;
      if (gi->requires_grad) {
        auto& gg = gi->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gg[j] += gy[r * n + j] * xhat[r * n + j];
      }
      if (bi->requires_grad) {
        auto& gb = bi->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gb[j] += gy[r * n + j];
      }
      if (xi->requires_grad) {
        auto& gx = xi->ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = gy[r * n + j] * gi->data[j];
            sum_d += d;
            sum_dx += d * xhat[r * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double d = gy[r * n + j] * gi->data[j];
            gx[r * n + j] += inv_std[r] * (d - inv_n * sum_d - xhat[r * n + j] * inv_n * sum_dx);
          }
        }
      }
    });
  }
  return y;
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v))); },
      [](double v, double) {
        const double u = c * (v + k * v * v * v);
        const double t = std::tanh(u);
        const double du = c * (1.0 + 3.0 * k * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  const bool track = tracking({&a});
  std::vector<double> out(a.data().begin(), a.data().end());
  Tensor y = make_output(std::move(shape), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, yi] {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
    });
  }
  return y;
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& s = a.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                         " invalid for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<std::size_t> index;
  index.reserve(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < length; ++k)
      for (std::size_t in = 0; in < inner; ++in)
        index.push_back((o * s[axis] + start + k) * inner + in);
  return gather(a, std::move(index), std::move(out_shape));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw DimensionError("concat: incompatible " + shape_str(first) + " and " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  bool track = false;
  for (const auto& p : parts) track = track || tracking({&p});
  std::vector<double> out(shape_numel(out_shape));
  const std::size_t total = out_shape[axis];
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis);
    const auto pv = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data() + o * len * inner, len * inner,
                  out.data() + (o * total + offset) * inner);
    offset += len;
  }
  Tensor y = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    std::vector<ImplPtr> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    Impl* yi = y.impl().get();
    record(y, [ins = std::move(ins), yi, outer, inner, total, axis] {
      std::size_t off = 0;
      for (const auto& in : ins) {
        const std::size_t len = in->shape[axis];
        if (in->requires_grad) {
          auto& g = in->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = yi->grad.data() + (o * total + off) * inner;
            double* dst = g.data() + o * len * inner;
            for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        off += len;
      }
    });
  }
  return y;
}

Tensor gather(const Tensor& a, std::vector<std::size_t> index, Shape out_shape) {
  if (shape_numel(out_shape) != index.size()) {
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for output " +
                         shape_str(out_shape));
  }
  const auto av = a.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.size()) throw DimensionError("gather: index out of range for " + shape_str(a.shape()));
    out[i] = av[index[i]];
  }
  const bool track = tracking({&a});
  Tensor y = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr ai = a.impl();
    Impl* yi = y.impl().get();
    record(y, [ai, yi, index = std::move(index)] {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += yi->grad[i];
    });
  }
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw DimensionError("conv2d: expected input [C,H,W] and weight [Co,Ci,kh,kw], got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  if (h + 2 * padding < kh || wd + 2 * padding < kw) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  if (bias.defined() && bias.numel() != cout) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(cout) + " output channels");
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * padding - kw) / stride + 1;
  const bool track = tracking({&x, &w, &bias});
  const auto xv = x.data();
  const auto wv = w.data();
  std::vector<double> out(cout * oh * ow, 0.0);
  const long pad = static_cast<long>(padding);
  for (std::size_t co = 0; co < cout; ++co) {
    const double b0 = bias.defined() ? bias[co] : 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b0;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = static_cast<long>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long ix = static_cast<long>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<long>(wd)) continue;
              acc += wv[((co * cin + ci) * kh + ky) * kw + kx] * xv[(ci * h + iy) * wd + ix];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
  Tensor y = make_output({cout, oh, ow}, std::move(out), track);
  if (track) {
    ImplPtr xi = x.impl(), wi = w.impl();
    ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
    Impl* yi = y.impl().get();
    record(y, [=] {
      const auto& gy = yi->grad;
      std::vector<double>* gx = xi->requires_grad ? &xi->ensure_grad() : nullptr;
      std::vector<double>* gw = wi->requires_grad ? &wi->ensure_grad() : nullptr;
      if (bi && bi->requires_grad) {
        auto& gb = bi->ensure_grad();
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t p = 0; p < oh * ow; ++p) gb[co] += gy[co * oh * ow + p];
      }
      if (!gx && !gw) return;
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double g = gy[(co * oh + oy) * ow + ox];
            if (g == 0.0) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const long iy = static_cast<long>(oy * stride + ky) - pad;
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const long ix = static_cast<long>(ox * stride + kx) - pad;
                  if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                  const std::size_t widx = ((co * cin + ci) * kh + ky) * kw + kx;
                  const std::size_t xidx = (ci * h + iy) * wd + ix;
                  if (gw) (*gw)[widx] += g * xi->data[xidx];
                  if (gx) (*gx)[xidx] += g * wi->data[widx];
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  const Tensor diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

}  // namespace csiqa::nn
