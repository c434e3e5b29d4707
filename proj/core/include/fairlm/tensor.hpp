#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fairlm/errors.hpp"

namespace fairlm {

using real = double;

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the define-by-run computation graph. Leaves hold parameters or
// inputs; interior nodes additionally carry the backward rule that scatters
// the incoming gradient into the parents.
struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<real> value;
    std::vector<real> grad;  // sized lazily, same length as value once used
    bool requires_grad = false;
    std::uint64_t id = 0;  // creation order; a valid topological order
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t size() const { return value.size(); }
    void ensure_grad();
};

// Value-semantic handle to a graph node. Copies alias the same storage.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, real fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<real> values);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(std::vector<std::size_t> shape, real v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(real v) { return Tensor({1}, std::vector<real>{v}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node().shape; }
    std::size_t size() const { return node().value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    const std::vector<real>& values() const { return node().value; }
    std::vector<real>& values() { return node().value; }
    const std::vector<real>& grad() const;
    bool has_grad() const { return !node().grad.empty(); }

    real item() const;  // scalar tensors only

    bool requires_grad() const { return node().requires_grad; }
    Tensor& set_requires_grad(bool v);
    void zero_grad();

    NodePtr ptr() const { return node_; }
    TensorNode& node() const;

  private:
    NodePtr node_;
};

// Disables graph recording for the current thread while alive. Forward values
// are still computed; backward rules are not attached.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

bool grad_enabled();

// Elementwise and reduction ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& a, real c);
Tensor sum(const Tensor& a);  // -> scalar

// Matrix ops on 2-D tensors.
Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k]x[k,n] -> [m,n]
Tensor linear(const Tensor& x, const Tensor& w);        // [n,din]x[dout,din] -> [n,dout], y = x w^T
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Row-wise softmax with max-subtraction; rows sum to 1.
Tensor softmax_rows(const Tensor& x);
// Softmax over a square [t,t] score matrix restricted to columns j <= i.
// Entries above the diagonal are exactly zero.
Tensor causal_softmax(const Tensor& scores);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps);
Tensor gelu(const Tensor& x);

// Gathers rows of `table` at `ids`; gradient scatter-adds into the table.
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// Mean over positions of -log softmax(logits)[target]. A target of
// `kIgnoreTarget` excludes the position from the mean.
inline constexpr int kIgnoreTarget = -1;
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Reverse-mode pass from a scalar loss. Fills grad slots of every
// requires-grad leaf reachable from `loss`, accumulating additively.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace fairlm
