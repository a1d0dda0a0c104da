#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "a2k/tensor.hpp"

namespace a2k::ad {

// Reverse-mode autodiff over an eagerly evaluated graph. Values are computed
// when an op is applied; backward() walks the recorded graph once.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation during backward()
  bool grad_ready = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;  // accumulates this->grad into the parents

  Tensor& ensure_grad();
  void accumulate(const Tensor& g);
};

using Var = std::shared_ptr<Node>;

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);

double scalar_value(const Var& v);

// Seeds root (a scalar) with gradient 1 and propagates to every reachable
// node that requires gradients. Grads of reachable nodes are reset first, so
// repeated calls on the same graph are independent.
void backward(const Var& root);

// Elementwise / scalar.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double c);
Var abs(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);       // d/dx defined as 0 at x == 0
Var relu(const Var& a);       // hinge; d/dx = 0 for x <= 0
Var leaky_relu(const Var& a, double slope);

// Reductions.
Var sum_all(const Var& a);   // -> [1]
Var mean_all(const Var& a);  // -> [1]
Var mean_rows(const Var& a);  // [n, d] -> [d], mean over axis 0
Var mean_axis1(const Var& a);  // [n, d] -> [n], mean over axis 1

// Linear algebra.
Var matmul(const Var& a, const Var& b);             // [m,k] x [k,n]
Var dense(const Var& x, const Var& w, const Var& b);  // [n,in] x [in,out] + bias

// Convolutions (single sample, channels-first).
Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv_transpose1d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv2d(const Var& x, const Var& w, const Var& b, int stride_h, int stride_w, int pad_h,
           int pad_w);

// Normalization.
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var l2_normalize_rows(const Var& x, double eps = 1e-12);

// Shape plumbing.
Var reshape(const Var& x, std::vector<int> shape);
Var transpose2(const Var& x);                     // [a,b] -> [b,a]
Var concat_rows(const std::vector<Var>& parts);   // along axis 0
Var broadcast_col(const Var& v, int n_cols);      // [d] -> [d, n_cols]
Var broadcast_row(const Var& v, int n_rows);      // [d] -> [n_rows, d]
Var slice_cols(const Var& x, int start, int len);  // [c, l] -> [c, len]
Var reflect_pad_cols(const Var& x, int left, int right);

}  // namespace a2k::ad
