#include <algorithm>
#include <cmath>

#include "satm/autodiff.hpp"

namespace satm::num {
namespace {

Graph& same_graph(Var a, Var b) {
  if (a.graph() == nullptr || a.graph() != b.graph())
    throw std::invalid_argument("operands from different graphs");
  return *a.graph();
}

std::size_t broadcast_dim(std::size_t x, std::size_t y, const char* op) {
  if (x == y || y == 1) return x;
  if (x == 1) return y;
  throw ShapeError(std::string(op) + ": cannot broadcast " + std::to_string(x) + " vs " +
                   std::to_string(y));
}

// Elementwise binary op with size-1 broadcasting on either operand.
template <class F, class DA, class DB>
Var binary(const char* name, Var a, Var b, F f, DA da, DB db) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t rows = broadcast_dim(av.rows(), bv.rows(), name);
  const std::size_t cols = broadcast_dim(av.cols(), bv.cols(), name);
  Tensor out(rows, cols);
  auto at = [](const Tensor& t, std::size_t r, std::size_t c) {
    return t(t.rows() == 1 ? 0 : r, t.cols() == 1 ? 0 : c);
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = f(at(av, r, c), at(bv, r, c));
  const auto ia = a.id();
  const auto ib = b.id();
  return g.record(name, std::move(out), {a, b}, [ia, ib, da, db](Graph& g, std::uint32_t self) {
    const Tensor& gout = g.grad(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    auto idx = [](const Tensor& t, std::size_t r, std::size_t c) {
      return (t.rows() == 1 ? 0 : r) * t.cols() + (t.cols() == 1 ? 0 : c);
    };
    const bool need_a = g.requires_grad(ia);
    const bool need_b = g.requires_grad(ib);
    Tensor* gx = need_a ? &g.grad(ia) : nullptr;
    Tensor* gy = need_b ? &g.grad(ib) : nullptr;
    for (std::size_t r = 0; r < gout.rows(); ++r) {
      for (std::size_t c = 0; c < gout.cols(); ++c) {
        const std::size_t ix = idx(x, r, c);
        const std::size_t iy = idx(y, r, c);
        const double go = gout(r, c);
        if (gx) (*gx)[ix] += go * da(x[ix], y[iy]);
        if (gy) (*gy)[iy] += go * db(x[ix], y[iy]);
      }
    }
  });
}

template <class F, class D>
Var unary(const char* name, Var a, F f, D d) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const auto ia = a.id();
  return g.record(name, std::move(out), {a}, [ia, d](Graph& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& gout = g.grad(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gout[i] * d(x[i], y[i]);
  });
}

void check_mask(const Tensor& a, const Tensor* mask, const char* op) {
  if (mask && !mask->same_shape(a) && !(mask->rows() == 1 && mask->cols() == a.cols()))
    throw ShapeError(std::string(op) + ": mask shape " + mask->shape_string() + " vs " +
                     a.shape_string());
}

bool kept(const Tensor* mask, std::size_t r, std::size_t c) {
  if (!mask) return true;
  return (*mask)(mask->rows() == 1 ? 0 : r, c) != 0.0;
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows())
    throw ShapeError("matmul " + x.shape_string() + " x " + y.shape_string());
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x(i, p);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += xv * y(p, j);
    }
  const auto ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(out), {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
    if (g.requires_grad(ia)) {
      Tensor& gx = g.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += go(i, j) * y(p, j);
          gx(i, p) += s;
        }
    }
    if (g.requires_grad(ib)) {
      Tensor& gy = g.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x(i, p);
          if (xv == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gy(p, j) += xv * go(i, j);
        }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.cols())
    throw ShapeError("matmul_nt " + x.shape_string() + " x " + y.shape_string() + "^T");
  const std::size_t m = x.rows(), k = x.cols(), n = y.rows();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += x(i, p) * y(j, p);
      out(i, j) = s;
    }
  const auto ia = a.id(), ib = b.id();
  return g.record("matmul_nt", std::move(out), {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    const std::size_t m = x.rows(), k = x.cols(), n = y.rows();
    if (g.requires_grad(ia)) {
      Tensor& gx = g.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = go(i, j);
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gx(i, p) += gv * y(j, p);
        }
    }
    if (g.requires_grad(ib)) {
      Tensor& gy = g.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = go(i, j);
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gy(j, p) += gv * x(i, p);
        }
    }
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  return g.record("transpose", a.value().transposed(), {a}, [ia](Graph& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(ia);
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t c = 0; c < go.cols(); ++c) gx(c, r) += go(r, c);
  });
}

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Var a, double s) {
  return unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(Var a, const Tensor* mask) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (x.empty()) throw std::invalid_argument("softmax of empty input");
  check_mask(x, mask, "softmax_rows");
  Tensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (kept(mask, r, c)) mx = std::max(mx, x(r, c));
    if (mx == -INFINITY) throw std::invalid_argument("softmax row fully masked");
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = kept(mask, r, c) ? std::exp(x(r, c) - mx) : 0.0;
      z += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= z;
  }
  const auto ia = a.id();
  return g.record("softmax", std::move(out), {a}, [ia](Graph& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += go(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (go(r, c) - dot);
    }
  });
}

Var log_softmax_rows(Var a, const Tensor* mask) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (x.empty()) throw std::invalid_argument("log_softmax of empty input");
  check_mask(x, mask, "log_softmax_rows");
  Tensor out(x.rows(), x.cols());
  Tensor keep(x.rows(), x.cols(), 1.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      keep(r, c) = kept(mask, r, c) ? 1.0 : 0.0;
      if (keep(r, c) != 0.0) mx = std::max(mx, x(r, c));
    }
    if (mx == -INFINITY) throw std::invalid_argument("log_softmax row fully masked");
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (keep(r, c) != 0.0) z += std::exp(x(r, c) - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < x.cols(); ++c)
      out(r, c) = keep(r, c) != 0.0 ? x(r, c) - lz : kMaskedLogProb;
  }
  const auto ia = a.id();
  return g.record("log_softmax", std::move(out), {a},
                  [ia, keep = std::move(keep)](Graph& g, std::uint32_t self) {
                    if (!g.requires_grad(ia)) return;
                    const Tensor& go = g.grad(self);
                    const Tensor& y = g.value(self);
                    Tensor& gx = g.grad(ia);
                    for (std::size_t r = 0; r < y.rows(); ++r) {
                      double total = 0.0;
                      for (std::size_t c = 0; c < y.cols(); ++c)
                        if (keep(r, c) != 0.0) total += go(r, c);
                      for (std::size_t c = 0; c < y.cols(); ++c)
                        if (keep(r, c) != 0.0) gx(r, c) += go(r, c) - std::exp(y(r, c)) * total;
                    }
                  });
}

Var sum(Var a) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  return g.record("sum", Tensor::scalar(num::sum(a.value())), {a},
                  [ia](Graph& g, std::uint32_t self) {
                    if (!g.requires_grad(ia)) return;
                    const double go = g.grad(self)[0];
                    Tensor& gx = g.grad(ia);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
                  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum_cols(Var a) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, 0) += x(r, c);
  const auto ia = a.id();
  return g.record("sum_cols", std::move(out), {a}, [ia](Graph& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(ia);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += go(r, 0);
  });
}

Var sum_rows(Var a) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  Tensor out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
  const auto ia = a.id();
  return g.record("sum_rows", std::move(out), {a}, [ia](Graph& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(ia);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += go(0, c);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  Graph& g = *parts.front().graph();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols row mismatch");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
    off += v.cols();
    ids.push_back(p.id());
  }
  return g.record("concat_cols", std::move(out), parts, [ids](Graph& g, std::uint32_t self) {
    const Tensor& go = g.grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t w = g.value(id).cols();
      if (g.requires_grad(id)) {
        Tensor& gx = g.grad(id);
        for (std::size_t r = 0; r < go.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gx(r, c) += go(r, off + c);
      }
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Graph& g = *parts.front().graph();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows column mismatch");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    const auto& v = p.value().values();
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(p.id());
  }
  return g.record("concat_rows", Tensor(rows, cols, std::move(data)), parts,
                  [ids](Graph& g, std::uint32_t self) {
                    const Tensor& go = g.grad(self);
                    std::size_t off = 0;
                    for (auto id : ids) {
                      const std::size_t n = g.value(id).size();
                      if (g.requires_grad(id)) {
                        Tensor& gx = g.grad(id);
                        for (std::size_t i = 0; i < n; ++i) gx[i] += go[off + i];
                      }
                      off += n;
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (begin + count > x.rows() || count == 0)
    throw ShapeError("slice_rows out of range on " + x.shape_string());
  const std::size_t cols = x.cols();
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  const auto ia = a.id();
  return g.record("slice_rows", Tensor(count, cols, std::move(data)), {a},
                  [ia, begin, cols](Graph& g, std::uint32_t self) {
                    if (!g.requires_grad(ia)) return;
                    const Tensor& go = g.grad(self);
                    Tensor& gx = g.grad(ia);
                    for (std::size_t i = 0; i < go.size(); ++i) gx[begin * cols + i] += go[i];
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (begin + count > x.cols() || count == 0)
    throw ShapeError("slice_cols out of range on " + x.shape_string());
  Tensor out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, begin + c);
  const auto ia = a.id();
  return g.record("slice_cols", std::move(out), {a}, [ia, begin](Graph& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(ia);
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t c = 0; c < go.cols(); ++c) gx(r, begin + c) += go(r, c);
  });
}

Var gather_rows(Var table, std::span<const std::size_t> rows) {
  Graph& g = *table.graph();
  const Tensor& t = table.value();
  if (rows.empty()) throw ShapeError("gather_rows with no indices");
  Tensor out(rows.size(), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.rows()) throw ShapeError("gather_rows index out of range");
    for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(rows[i], c);
  }
  const auto ia = table.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return g.record("gather_rows", std::move(out), {table},
                  [ia, idx = std::move(idx)](Graph& g, std::uint32_t self) {
                    if (!g.requires_grad(ia)) return;
                    const Tensor& go = g.grad(self);
                    Tensor& gx = g.grad(ia);
                    for (std::size_t i = 0; i < idx.size(); ++i)
                      for (std::size_t c = 0; c < go.cols(); ++c) gx(idx[i], c) += go(i, c);
                  });
}

Var select_cols(Var a, std::span<const std::size_t> cols) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (cols.size() != x.rows()) throw ShapeError("select_cols needs one column per row");
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (cols[r] >= x.cols()) throw ShapeError("select_cols index out of range");
    out(r, 0) = x(r, cols[r]);
  }
  const auto ia = a.id();
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return g.record("select_cols", std::move(out), {a},
                  [ia, idx = std::move(idx)](Graph& g, std::uint32_t self) {
                    if (!g.requires_grad(ia)) return;
                    const Tensor& go = g.grad(self);
                    Tensor& gx = g.grad(ia);
                    for (std::size_t r = 0; r < idx.size(); ++r) gx(r, idx[r]) += go(r, 0);
                  });
}

Var weighted_entries(Var a, std::span<const std::size_t> index,
                     std::span<const double> weights) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (x.rows() != 1) throw ShapeError("weighted_entries expects a row vector");
  if (index.size() != weights.size()) throw ShapeError("weighted_entries size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.cols()) throw ShapeError("weighted_entries index out of range");
    s += weights[i] * x[index[i]];
  }
  const auto ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> w(weights.begin(), weights.end());
  return g.record("weighted_entries", Tensor::scalar(s), {a},
                  [ia, idx = std::move(idx), w = std::move(w)](Graph& g, std::uint32_t self) {
                    if (!g.requires_grad(ia)) return;
                    const double go = g.grad(self)[0];
                    Tensor& gx = g.grad(ia);
                    for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += go * w[i];
                  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = same_graph(x, gain);
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gv.rows() != 1 || gv.cols() != cols || !bv.same_shape(gv))
    throw ShapeError("layer_norm gain/bias shape");
  Tensor out(rows, cols);
  Tensor normed(rows, cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (std::size_t c = 0; c < cols; ++c) m += xv(r, c);
    m /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xv(r, c) - m) * (xv(r, c) - m);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      normed(r, c) = (xv(r, c) - m) * inv_std[r];
      out(r, c) = normed(r, c) * gv[c] + bv[c];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return g.record(
      "layer_norm", std::move(out), {x, gain, bias},
      [ix, ig, ib, normed = std::move(normed), inv_std = std::move(inv_std)](Graph& g,
                                                                             std::uint32_t self) {
        const Tensor& go = g.grad(self);
        const Tensor& gv = g.value(ig);
        const std::size_t rows = go.rows(), cols = go.cols();
        if (g.requires_grad(ig)) {
          Tensor& gg = g.grad(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += go(r, c) * normed(r, c);
        }
        if (g.requires_grad(ib)) {
          Tensor& gb = g.grad(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += go(r, c);
        }
        if (g.requires_grad(ix)) {
          Tensor& gx = g.grad(ix);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dn = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = go(r, c) * gv[c];
              mean_d += d;
              mean_dn += d * normed(r, c);
            }
            mean_d /= n;
            mean_dn /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = go(r, c) * gv[c];
              gx(r, c) += inv_std[r] * (d - mean_d - normed(r, c) * mean_dn);
            }
          }
        }
      });
}

}  // namespace satm::num
