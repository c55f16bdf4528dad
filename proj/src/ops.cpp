#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "tar/errors.hpp"
#include "tar/tensor.hpp"

namespace tar {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions " + shape_str(a.shape()) + " . " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  NodePtr an = a.node(), bn = b.node();
  return make_result({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](Node& self) {
    if (an->requires_grad) {
      kernels::gemm_nt(m, n, k, self.grad.data(), bn->data.data(), an->grad_buffer().data());
    }
    if (bn->requires_grad) {
      kernels::gemm_tn(k, m, n, an->data.data(), self.grad.data(), bn->grad_buffer().data());
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(w, 2, "linear");
  const Shape& xs = x.shape();
  const std::size_t k = xs.back();
  if (w.dim(0) != k) {
    throw DimensionError("linear: input width " + std::to_string(k) + " vs weight " +
                         shape_str(w.shape()));
  }
  const std::size_t rows = x.numel() / k;
  const std::size_t n = w.dim(1);
  Shape out_shape = xs;
  out_shape.back() = n;
  Tensor flat = reshape(x, {rows, k});
  Tensor y = reshape(matmul(flat, w), out_shape);
  if (bias.defined()) y = add_bias(y, bias);
  return y;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  if (b.dim(0) != batch) throw DimensionError("bmm batch sizes differ");
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k) {
    throw DimensionError("bmm inner dimensions " + shape_str(a.shape()) + " . " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    if (transpose_b) {
      kernels::gemm_nt(m, k, n, ad + i * m * k, bd + i * n * k, out.data() + i * m * n);
    } else {
      kernels::gemm_nn(m, k, n, ad + i * m * k, bd + i * k * n, out.data() + i * m * n);
    }
  }
  NodePtr an = a.node(), bn = b.node();
  return make_result(
      {batch, m, n}, std::move(out), {a, b},
      [an, bn, batch, m, k, n, transpose_b](Node& self) {
        const double* g = self.grad.data();
        for (std::size_t i = 0; i < batch; ++i) {
          const double* gi = g + i * m * n;
          const double* ai = an->data.data() + i * m * k;
          const double* bi = bn->data.data() + i * n * k;
          if (an->requires_grad) {
            double* ga = an->grad_buffer().data() + i * m * k;
            if (transpose_b) {
              kernels::gemm_nn(m, n, k, gi, bi, ga);  // G . B
            } else {
              kernels::gemm_nt(m, n, k, gi, bi, ga);  // G . B^T
            }
          }
          if (bn->requires_grad) {
            double* gb = bn->grad_buffer().data() + i * n * k;
            if (transpose_b) {
              kernels::gemm_tn(n, m, k, gi, ai, gb);  // G^T . A
            } else {
              kernels::gemm_tn(k, m, n, ai, gi, gb);  // A^T . G
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
  NodePtr an = a.node();
  return make_result({n, m}, std::move(out), {a}, [an, m, n](Node& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  NodePtr an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    for (const NodePtr& p : {an, bn}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  NodePtr an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  NodePtr an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * ad[i];
  NodePtr an = a.node();
  return make_result(a.shape(), std::move(out), {a}, [an, c](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  NodePtr an = a.node();
  return make_result(a.shape(), std::move(out), {a}, [an](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (an->data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = x.shape().back();
  if (bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  const auto xd = x.data(), bd = bias.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + bd[i % n];
  NodePtr xn = x.node(), bn = bias.node();
  return make_result(x.shape(), std::move(out), {x, bias}, [xn, bn, n](Node& self) {
    if (xn->requires_grad) {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  NodePtr an = a.node();
  return make_result({1}, {s}, {a}, [an](Node& self) {
    auto& g = an->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  NodePtr an = a.node();
  return make_result(std::move(shape), std::move(out), {a}, [an](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw DimensionError("concat: " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " on axis " + std::to_string(axis));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw DimensionError("concat: mismatched non-concatenated dims " +
                           shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  const AxisSplit sa = split_axis(a.shape(), axis);
  const AxisSplit sb = split_axis(b.shape(), axis);
  const std::size_t la = sa.length * sa.inner, lb = sb.length * sb.inner;
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  const auto ad = a.data(), bd = b.data();
  for (std::size_t o = 0; o < sa.outer; ++o) {
    out.insert(out.end(), ad.begin() + o * la, ad.begin() + (o + 1) * la);
    out.insert(out.end(), bd.begin() + o * lb, bd.begin() + (o + 1) * lb);
  }
  NodePtr an = a.node(), bn = b.node();
  const std::size_t outer = sa.outer;
  return make_result(std::move(shape), std::move(out), {a, b},
                     [an, bn, outer, la, lb](Node& self) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* g = self.grad.data() + o * (la + lb);
                         if (an->requires_grad) {
                           double* ga = an->grad_buffer().data() + o * la;
                           for (std::size_t i = 0; i < la; ++i) ga[i] += g[i];
                         }
                         if (bn->requires_grad) {
                           double* gb = bn->grad_buffer().data() + o * lb;
                           for (std::size_t i = 0; i < lb; ++i) gb[i] += g[la + i];
                         }
                       }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  return concat(a, b, a.rank() == 3 ? 0 : a.rank() - 1);
}

Tensor flatten_chw(const Tensor& x) {
  require_rank(x, 3, "flatten_chw");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  return transpose(reshape(x, {c, hw}));
}

Tensor slice_window(const Tensor& x, std::size_t cy, std::size_t cx, std::size_t w) {
  require_rank(x, 3, "slice_window");
  Tensor stacked = gather_windows(x, {{cy, cx}}, w);  // [1 x w*w x C]
  const std::size_t c = x.dim(0);
  return reshape(transpose(reshape(stacked, {w * w, c})), {c, w, w});
}

Tensor gather_windows(const Tensor& x,
                      const std::vector<std::pair<std::size_t, std::size_t>>& centers,
                      std::size_t w) {
  require_rank(x, 3, "gather_windows");
  if (w % 2 == 0) throw DimensionError("window size must be odd");
  if (centers.empty()) throw DimensionError("gather_windows needs at least one center");
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t r = w / 2;
  for (const auto& [cy, cx] : centers) {
    if (cy < r || cx < r || cy + r >= h || cx + r >= wd) {
      throw DimensionError("window at (" + std::to_string(cy) + "," + std::to_string(cx) +
                           ") exceeds map " + shape_str(x.shape()));
    }
  }
  const std::size_t batch = centers.size(), n = w * w;
  std::vector<std::size_t> offsets(batch * n);  // flat spatial index per slot
  for (std::size_t b = 0; b < batch; ++b) {
    const auto [cy, cx] = centers[b];
    for (std::size_t dy = 0; dy < w; ++dy)
      for (std::size_t dx = 0; dx < w; ++dx)
        offsets[b * n + dy * w + dx] = (cy - r + dy) * wd + (cx - r + dx);
  }
  const auto xd = x.data();
  const std::size_t plane = h * wd;
  std::vector<double> out(batch * n * c);
  for (std::size_t s = 0; s < batch * n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) out[s * c + ch] = xd[ch * plane + offsets[s]];
  NodePtr xn = x.node();
  return make_result({batch, n, c}, std::move(out), {x},
                     [xn, offsets = std::move(offsets), c, plane](Node& self) {
                       auto& g = xn->grad_buffer();
                       for (std::size_t s = 0; s < offsets.size(); ++s)
                         for (std::size_t ch = 0; ch < c; ++ch)
                           g[ch * plane + offsets[s]] += self.grad[s * c + ch];
                     });
}

Tensor select_position(const Tensor& x, std::size_t position) {
  require_rank(x, 3, "select_position");
  const std::size_t batch = x.dim(0), n = x.dim(1), d = x.dim(2);
  if (position >= n) throw DimensionError("select_position index out of range");
  const auto xd = x.data();
  std::vector<double> out(batch * d);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(xd.begin() + (b * n + position) * d, d, out.begin() + b * d);
  NodePtr xn = x.node();
  return make_result({batch, d}, std::move(out), {x}, [xn, n, d, position, batch](Node& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < d; ++i) g[(b * n + position) * d + i] += self.grad[b * d + i];
  });
}

// ---- normalisation --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax axis out of range");
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.length * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.length; ++l) mx = std::max(mx, xd[base + l * s.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) {
        const double e = std::exp(xd[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < s.length; ++l) out[base + l * s.inner] /= z;
    }
  }
  NodePtr xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn, s](Node& self) {
    const auto& yd = self.data;
    auto& g = xn->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.length * s.inner + in;
        double dotp = 0.0;
        for (std::size_t l = 0; l < s.length; ++l) {
          const std::size_t i = base + l * s.inner;
          dotp += self.grad[i] * yd[i];
        }
        for (std::size_t l = 0; l < s.length; ++l) {
          const std::size_t i = base + l * s.inner;
          g[i] += yd[i] * (self.grad[i] - dotp);
        }
      }
    }
  });
}

Tensor l2_normalize(const Tensor& x, std::size_t axis, double eps) {
  if (axis >= x.rank()) throw DimensionError("l2_normalize axis out of range");
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  std::vector<double> norms(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.length * s.inner + in;
      double ss = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) {
        const double v = xd[base + l * s.inner];
        ss += v * v;
      }
      const double nrm = std::sqrt(ss);
      norms[o * s.inner + in] = nrm;
      const double denom = std::max(nrm, eps);
      for (std::size_t l = 0; l < s.length; ++l)
        out[base + l * s.inner] = xd[base + l * s.inner] / denom;
    }
  }
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {x}, [xn, s, eps, norms = std::move(norms)](Node& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.length * s.inner + in;
            const double nrm = norms[o * s.inner + in];
            if (nrm > eps) {
              double dotp = 0.0;
              for (std::size_t l = 0; l < s.length; ++l) {
                const std::size_t i = base + l * s.inner;
                dotp += self.grad[i] * xn->data[i];
              }
              const double inv = 1.0 / nrm;
              const double k = dotp * inv * inv * inv;
              for (std::size_t l = 0; l < s.length; ++l) {
                const std::size_t i = base + l * s.inner;
                g[i] += self.grad[i] * inv - xn->data[i] * k;
              }
            } else {
              for (std::size_t l = 0; l < s.length; ++l) {
                const std::size_t i = base + l * s.inner;
                g[i] += self.grad[i] / eps;
              }
            }
          }
        }
      });
}

Tensor instance_norm(const Tensor& x, double eps) {
  require_rank(x, 3, "instance_norm");
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* v = xd.data() + ch * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += v[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (v[i] - mean) * (v[i] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[ch] = is;
    for (std::size_t i = 0; i < n; ++i) out[ch * n + i] = (v[i] - mean) * is;
  }
  NodePtr xn = x.node();
  return make_result(x.shape(), std::move(out), {x},
                     [xn, c, n, inv_std = std::move(inv_std)](Node& self) {
    auto& g = xn->grad_buffer();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* gy = self.grad.data() + ch * n;
      const double* yv = self.data.data() + ch * n;
      double mg = 0.0, mgy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mg += gy[i];
        mgy += gy[i] * yv[i];
      }
      mg *= inv_n;
      mgy *= inv_n;
      for (std::size_t i = 0; i < n; ++i)
        g[ch * n + i] += inv_std[ch] * (gy[i] - mg - yv[i] * mgy);
    }
  });
}

// ---- convolution ----------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_rank(x, 3, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != cin) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  if (stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw) {
    throw DimensionError("conv2d: kernel does not fit padded input " + shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()));
  }
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  const std::size_t rows = cin * kh * kw, cols_n = ho * wo;

  // im2col: cols[(c, dy, dx), (oy, ox)]
  std::vector<double> cols(rows * cols_n, 0.0);
  const auto xd = x.data();
  for (std::size_t ch = 0; ch < cin; ++ch) {
    for (std::size_t dy = 0; dy < kh; ++dy) {
      for (std::size_t dx = 0; dx < kw; ++dx) {
        double* row = cols.data() + ((ch * kh + dy) * kw + dx) * cols_n;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + dy) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + dx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            row[oy * wo + ox] = xd[(ch * h + iy) * w + ix];
          }
        }
      }
    }
  }
  std::vector<double> out(cout * cols_n, 0.0);
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::size_t o = 0; o < cout; ++o)
      std::fill_n(out.begin() + o * cols_n, cols_n, bd[o]);
  }
  kernels::gemm_nn(cout, rows, cols_n, k.data().data(), cols.data(), out.data());

  NodePtr xn = x.node(), kn = k.node();
  NodePtr bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> inputs = {x, k};
  if (bias.defined()) inputs.push_back(bias);
  const bool keep_cols = k.requires_grad();
  return make_result(
      {cout, ho, wo}, std::move(out), inputs,
      [xn, kn, bn, cols = keep_cols ? std::move(cols) : std::vector<double>(), cin, h, w,
       cout, kh, kw, ho, wo, stride, pad, rows, cols_n](Node& self) {
        const double* g = self.grad.data();
        if (bn && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t o = 0; o < cout; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < cols_n; ++i) s += g[o * cols_n + i];
            gb[o] += s;
          }
        }
        if (kn->requires_grad) {
          kernels::gemm_nt(cout, cols_n, rows, g, cols.data(), kn->grad_buffer().data());
        }
        if (xn->requires_grad) {
          std::vector<double> dcols(rows * cols_n, 0.0);
          kernels::gemm_tn(rows, cout, cols_n, kn->data.data(), g, dcols.data());
          auto& gx = xn->grad_buffer();
          for (std::size_t ch = 0; ch < cin; ++ch) {
            for (std::size_t dy = 0; dy < kh; ++dy) {
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const double* row = dcols.data() + ((ch * kh + dy) * kw + dx) * cols_n;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const long iy = static_cast<long>(oy * stride + dy) - static_cast<long>(pad);
                  if (iy < 0 || iy >= static_cast<long>(h)) continue;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const long ix = static_cast<long>(ox * stride + dx) - static_cast<long>(pad);
                    if (ix < 0 || ix >= static_cast<long>(w)) continue;
                    gx[(ch * h + iy) * w + ix] += row[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_rank(x, 3, "upsample_nearest2x");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto xd = x.data();
  std::vector<double> out(c * 4 * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out[(ch * 2 * h + y) * 2 * w + xx] = xd[(ch * h + y / 2) * w + xx / 2];
  NodePtr xn = x.node();
  return make_result({c, 2 * h, 2 * w}, std::move(out), {x}, [xn, c, h, w](Node& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          g[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * 2 * h + y) * 2 * w + xx];
  });
}

// ---- attention ------------------------------------------------------------

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const bool batched = q.rank() == 3;
  if (!(q.rank() == 2 || q.rank() == 3) || k.rank() != q.rank() || v.rank() != q.rank()) {
    throw DimensionError("attention_core expects matching rank-2 or rank-3 inputs");
  }
  const std::size_t batch = batched ? q.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t nq = q.dim(off), d = q.dim(off + 1);
  const std::size_t nk = k.dim(off);
  if (k.dim(off + 1) != d || v.dim(off + 1) != d || v.dim(off) != nk ||
      (batched && (k.dim(0) != batch || v.dim(0) != batch))) {
    throw DimensionError("attention_core: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qd = q.data(), kd = k.data(), vd = v.data();

  std::vector<double> probs(batch * heads * nq * nk);
  std::vector<double> out(batch * nq * d, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t col = hh * dh;
      for (std::size_t i = 0; i < nq; ++i) {
        double* a = probs.data() + ((b * heads + hh) * nq + i) * nk;
        const double* qi = qd.data() + (b * nq + i) * d + col;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          a[j] = kernels::dot(qi, kd.data() + (b * nk + j) * d + col, dh) * inv_sqrt;
          mx = std::max(mx, a[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
          a[j] = std::exp(a[j] - mx);
          z += a[j];
        }
        double* oi = out.data() + (b * nq + i) * d + col;
        for (std::size_t j = 0; j < nk; ++j) {
          a[j] /= z;
          const double* vj = vd.data() + (b * nk + j) * d + col;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += a[j] * vj[c];
        }
      }
    }
  }

  NodePtr qn = q.node(), kn = k.node(), vn = v.node();
  return make_result(
      q.shape(), std::move(out), {q, k, v},
      [qn, kn, vn, probs = std::move(probs), batch, heads, nq, nk, d, dh,
       inv_sqrt](Node& self) {
        std::vector<double> ds(nk);
        double* gq = qn->requires_grad ? qn->grad_buffer().data() : nullptr;
        double* gk = kn->requires_grad ? kn->grad_buffer().data() : nullptr;
        double* gv = vn->requires_grad ? vn->grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t hh = 0; hh < heads; ++hh) {
            const std::size_t col = hh * dh;
            for (std::size_t i = 0; i < nq; ++i) {
              const double* a = probs.data() + ((b * heads + hh) * nq + i) * nk;
              const double* go = self.grad.data() + (b * nq + i) * d + col;
              // dA_j = <dO_i, V_j>; dS = A * (dA - <dA, A>)
              double acc = 0.0;
              for (std::size_t j = 0; j < nk; ++j) {
                ds[j] = kernels::dot(go, vn->data.data() + (b * nk + j) * d + col, dh);
                acc += ds[j] * a[j];
              }
              for (std::size_t j = 0; j < nk; ++j) ds[j] = a[j] * (ds[j] - acc) * inv_sqrt;
              const double* qi = qn->data.data() + (b * nq + i) * d + col;
              for (std::size_t j = 0; j < nk; ++j) {
                const std::size_t kv = (b * nk + j) * d + col;
                if (gv) {
                  for (std::size_t c = 0; c < dh; ++c) gv[kv + c] += a[j] * go[c];
                }
                if (gk) {
                  for (std::size_t c = 0; c < dh; ++c) gk[kv + c] += ds[j] * qi[c];
                }
                if (gq) {
                  double* gqi = gq + (b * nq + i) * d + col;
                  const double* kj = kn->data.data() + kv;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds[j] * kj[c];
                }
              }
            }
          }
        }
      });
}

}  // namespace tar
