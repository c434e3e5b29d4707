#include "fairlm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace fairlm {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

thread_local bool g_grad_enabled = true;

NodePtr make_node(std::vector<std::size_t> shape, std::vector<real> values) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t d : shape) p *= d;
    return p;
}

// Attaches the backward rule when recording is on and any parent needs grads.
void record(const Tensor& out, std::vector<Tensor> parents,
            std::function<void(TensorNode&)> fn) {
    if (!g_grad_enabled) return;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (!needs) return;
    TensorNode& n = out.node();
    n.requires_grad = true;
    n.parents.reserve(parents.size());
    for (auto& p : parents) n.parents.push_back(p.ptr());
    n.backward_fn = std::move(fn);
}

void check_2d(const Tensor& t, const char* what) {
    if (t.shape().size() != 2)
        throw ShapeError(std::string(what) + ": expected 2-D tensor, got shape " +
                         shape_str(t.shape()));
}

constexpr std::size_t kParallelFlops = 1u << 16;

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn_acc(const real* a, const real* b, real* c,
                 std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlops)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        real* crow = c + i * n;
        const real* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const real aip = arow[p];
            const real* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt_acc(const real* a, const real* b, real* c,
                 std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlops)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        const real* arow = a + i * k;
        real* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const real* brow = b + j * k;
            real acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn_acc(const real* a, const real* b, real* c,
                 std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlops)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(k); ++i) {
        real* crow = c + i * n;
        for (std::size_t p = 0; p < m; ++p) {
            const real v = a[p * k + i];
            const real* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
        }
    }
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void TensorNode::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, real fill) {
    node_ = make_node(shape, std::vector<real>(shape_product(shape), fill));
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<real> values) {
    if (shape_product(shape) != values.size())
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    node_ = make_node(std::move(shape), std::move(values));
}

TensorNode& Tensor::node() const {
    if (!node_) throw ContractError("use of default-constructed Tensor");
    return *node_;
}

std::size_t Tensor::rows() const {
    check_2d(*this, "rows");
    return shape()[0];
}

std::size_t Tensor::cols() const {
    check_2d(*this, "cols");
    return shape()[1];
}

const std::vector<real>& Tensor::grad() const {
    TensorNode& n = node();
    n.ensure_grad();
    return n.grad;
}

real Tensor::item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return values()[0];
}

Tensor& Tensor::set_requires_grad(bool v) {
    node().requires_grad = v;
    return *this;
}

void Tensor::zero_grad() {
    TensorNode& n = node();
    std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<real> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Tensor y(a.shape(), std::move(out));
    record(y, {a, b}, [](TensorNode& n) {
        for (auto& p : n.parents) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    });
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<real> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    Tensor y(a.shape(), std::move(out));
    record(y, {a, b}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<real> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Tensor y(a.shape(), std::move(out));
    record(y, {a, b}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
    return y;
}

Tensor scale(const Tensor& a, real c) {
    std::vector<real> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    Tensor y(a.shape(), std::move(out));
    record(y, {a}, [c](TensorNode& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * c;
    });
    return y;
}

Tensor sum(const Tensor& a) {
    real s = 0.0;
    for (real v : a.values()) s += v;
    Tensor y({1}, std::vector<real>{s});
    record(y, {a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const real g = n.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    });
    return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul lhs");
    check_2d(b, "matmul rhs");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const std::size_t n = b.shape()[1];
    std::vector<real> out(m * n, 0.0);
    gemm_nn_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
    Tensor y({m, n}, std::move(out));
    record(y, {a, b}, [m, k, n](TensorNode& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        // dA += dC * B^T ; dB += A^T * dC
        if (pa.requires_grad) {
            pa.ensure_grad();
            gemm_nt_acc(nd.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            gemm_tn_acc(pa.value.data(), nd.grad.data(), pb.grad.data(), m, k, n);
        }
    });
    return y;
}

Tensor linear(const Tensor& x, const Tensor& w) {
    check_2d(x, "linear input");
    check_2d(w, "linear weight");
    const std::size_t n = x.shape()[0], din = x.shape()[1];
    if (w.shape()[1] != din)
        throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
    const std::size_t dout = w.shape()[0];
    std::vector<real> out(n * dout, 0.0);
    gemm_nt_acc(x.values().data(), w.values().data(), out.data(), n, din, dout);
    Tensor y({n, dout}, std::move(out));
    record(y, {x, w}, [n, din, dout](TensorNode& nd) {
        auto& px = *nd.parents[0];
        auto& pw = *nd.parents[1];
        // dx += dy * W ; dW += dy^T * x
        if (px.requires_grad) {
            px.ensure_grad();
            gemm_nn_acc(nd.grad.data(), pw.value.data(), px.grad.data(), n, dout, din);
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            gemm_tn_acc(nd.grad.data(), px.value.data(), pw.grad.data(), n, dout, din);
        }
    });
    return y;
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len) {
    check_2d(x, "slice_rows");
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    if (start + len > r)
        throw ShapeError("slice_rows: [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " + std::to_string(r));
    std::vector<real> out(x.values().begin() + start * c,
                          x.values().begin() + (start + len) * c);
    Tensor y({len, c}, std::move(out));
    record(y, {x}, [start, c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[start * c + i] += n.grad[i];
    });
    return y;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
    check_2d(x, "slice_cols");
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    if (start + len > c)
        throw ShapeError("slice_cols: [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " + std::to_string(c));
    std::vector<real> out(r * len);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(xv.data() + i * c + start, len, out.data() + i * len);
    Tensor y({r, len}, std::move(out));
    record(y, {x}, [start, len, c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const std::size_t r2 = n.shape[0];
        for (std::size_t i = 0; i < r2; ++i)
            for (std::size_t j = 0; j < len; ++j)
                p.grad[i * c + start + j] += n.grad[i * len + j];
    });
    return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty part list");
    const std::size_t r = parts[0].rows();
    std::size_t ctot = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch");
        ctot += p.cols();
    }
    std::vector<real> out(r * ctot);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.cols();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(p.values().data() + i * c, c, out.data() + i * ctot + off);
        off += c;
    }
    Tensor y({r, ctot}, std::move(out));
    std::vector<std::size_t> widths;
    for (const auto& p : parts) widths.push_back(p.cols());
    record(y, parts, [widths, ctot](TensorNode& n) {
        const std::size_t r2 = n.shape[0];
        std::size_t off2 = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            auto& p = *n.parents[k];
            p.ensure_grad();
            const std::size_t c = widths[k];
            for (std::size_t i = 0; i < r2; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    p.grad[i * c + j] += n.grad[i * ctot + off2 + j];
            off2 += c;
        }
    });
    return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty part list");
    const std::size_t c = parts[0].cols();
    std::size_t rtot = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw ShapeError("concat_rows: column count mismatch");
        rtot += p.rows();
    }
    std::vector<real> out;
    out.reserve(rtot * c);
    for (const auto& p : parts)
        out.insert(out.end(), p.values().begin(), p.values().end());
    Tensor y({rtot, c}, std::move(out));
    std::vector<std::size_t> heights;
    for (const auto& p : parts) heights.push_back(p.rows());
    record(y, parts, [heights, c](TensorNode& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            auto& p = *n.parents[k];
            p.ensure_grad();
            const std::size_t cnt = heights[k] * c;
            for (std::size_t i = 0; i < cnt; ++i) p.grad[i] += n.grad[off + i];
            off += cnt;
        }
    });
    return y;
}

Tensor softmax_rows(const Tensor& x) {
    check_2d(x, "softmax_rows");
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    if (c < 1) throw ShapeError("softmax_rows: empty rows");
    std::vector<real> out(r * c);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < r; ++i) {
        const real* row = xv.data() + i * c;
        real mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        real z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(row[j] - mx);
            z += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    Tensor y({r, c}, std::move(out));
    record(y, {x}, [r, c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            const real* yv = n.value.data() + i * c;
            const real* dy = n.grad.data() + i * c;
            real dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += yv[j] * dy[j];
            for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += yv[j] * (dy[j] - dot);
        }
    });
    return y;
}

Tensor causal_softmax(const Tensor& scores) {
    check_2d(scores, "causal_softmax");
    const std::size_t t = scores.shape()[0];
    if (scores.shape()[1] != t) throw ShapeError("causal_softmax: matrix must be square");
    std::vector<real> out(t * t, 0.0);
    const auto& sv = scores.values();
    for (std::size_t i = 0; i < t; ++i) {
        const real* row = sv.data() + i * t;
        real mx = row[0];
        for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
        real z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            out[i * t + j] = std::exp(row[j] - mx);
            z += out[i * t + j];
        }
        for (std::size_t j = 0; j <= i; ++j) out[i * t + j] /= z;
    }
    Tensor y({t, t}, std::move(out));
    record(y, {scores}, [t](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < t; ++i) {
            const real* yv = n.value.data() + i * t;
            const real* dy = n.grad.data() + i * t;
            real dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) dot += yv[j] * dy[j];
            for (std::size_t j = 0; j <= i; ++j) p.grad[i * t + j] += yv[j] * (dy[j] - dot);
        }
    });
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
    check_2d(x, "layer_norm");
    const std::size_t r = x.shape()[0], d = x.shape()[1];
    if (gain.size() != d || bias.size() != d)
        throw ShapeError("layer_norm: gain/bias size must equal row width " + std::to_string(d));
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
    std::vector<real> out(r * d);
    std::vector<real> xhat(r * d);
    std::vector<real> inv_std(r);
    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    for (std::size_t i = 0; i < r; ++i) {
        const real* row = xv.data() + i * d;
        real mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<real>(d);
        real var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<real>(d);
        const real istd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = istd;
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (row[j] - mean) * istd;
            out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
        }
    }
    Tensor y({r, d}, std::move(out));
    record(y, {x, gain, bias},
           [r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& n) {
               auto& px = *n.parents[0];
               auto& pg = *n.parents[1];
               auto& pb = *n.parents[2];
               if (px.requires_grad) px.ensure_grad();
               if (pg.requires_grad) pg.ensure_grad();
               if (pb.requires_grad) pb.ensure_grad();
               for (std::size_t i = 0; i < r; ++i) {
                   const real* dy = n.grad.data() + i * d;
                   const real* xh = xhat.data() + i * d;
                   real m1 = 0.0, m2 = 0.0;
                   for (std::size_t j = 0; j < d; ++j) {
                       const real dxh = dy[j] * pg.value[j];
                       m1 += dxh;
                       m2 += dxh * xh[j];
                       if (pg.requires_grad) pg.grad[j] += dy[j] * xh[j];
                       if (pb.requires_grad) pb.grad[j] += dy[j];
                   }
                   if (!px.requires_grad) continue;
                   m1 /= static_cast<real>(d);
                   m2 /= static_cast<real>(d);
                   for (std::size_t j = 0; j < d; ++j) {
                       const real dxh = dy[j] * pg.value[j];
                       px.grad[i * d + j] += inv_std[i] * (dxh - m1 - xh[j] * m2);
                   }
               }
           });
    return y;
}

Tensor gelu(const Tensor& x) {
    static const real inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const real inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    std::vector<real> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
    Tensor y(x.shape(), std::move(out));
    record(y, {x}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const real v = p.value[i];
            const real cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const real pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            p.grad[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
    return y;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    check_2d(table, "embedding_rows");
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    std::vector<real> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
            throw IndexError("embedding_rows: id " + std::to_string(ids[i]) +
                             " out of table with " + std::to_string(v) + " rows");
        std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * d, d,
                    out.data() + i * d);
    }
    Tensor y({ids.size(), d}, std::move(out));
    record(y, {table}, [ids, d](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < d; ++j)
                p.grad[static_cast<std::size_t>(ids[i]) * d + j] += n.grad[i * d + j];
    });
    return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    check_2d(logits, "cross_entropy");
    const std::size_t t = logits.shape()[0], v = logits.shape()[1];
    if (targets.size() != t)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(t) + " logit rows");
    std::size_t count = 0;
    real loss = 0.0;
    std::vector<real> probs(t * v, 0.0);
    const auto& lv = logits.values();
    for (std::size_t i = 0; i < t; ++i) {
        if (targets[i] == kIgnoreTarget) continue;
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
            throw IndexError("cross_entropy: target id " + std::to_string(targets[i]) +
                             " out of vocabulary of " + std::to_string(v));
        const real* row = lv.data() + i * v;
        real mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        real z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        const real lse = mx + std::log(z);
        loss += lse - row[static_cast<std::size_t>(targets[i])];
        for (std::size_t j = 0; j < v; ++j) probs[i * v + j] = std::exp(row[j] - lse);
        ++count;
    }
    if (count == 0) throw InputError("cross_entropy: no scored positions");
    Tensor y({1}, std::vector<real>{loss / static_cast<real>(count)});
    record(y, {logits}, [targets, v, count, probs = std::move(probs)](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const real g = n.grad[0] / static_cast<real>(count);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (targets[i] == kIgnoreTarget) continue;
            for (std::size_t j = 0; j < v; ++j) p.grad[i * v + j] += g * probs[i * v + j];
            p.grad[i * v + static_cast<std::size_t>(targets[i])] -= g;
        }
    });
    return y;
}

void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{&loss.node()};
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });
    loss.node().ensure_grad();
    loss.node().grad[0] += 1.0;
    for (TensorNode* n : order)
        if (n->backward_fn) n->backward_fn(*n);
}

}  // namespace fairlm
