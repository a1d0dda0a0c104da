#include "a2k/autodiff.hpp"

#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

#include "a2k/errors.hpp"

namespace a2k::ad {
namespace {

Var make_node(Tensor value, std::vector<Var> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const Var& p : n->parents) n->requires_grad = n->requires_grad || p->requires_grad;
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw ValidationError(std::string(op) + ": shape mismatch " + a->value.shape_string() +
                          " vs " + b->value.shape_string());
  }
}

void check_ndim(const Var& a, int ndim, const char* op) {
  if (a->value.ndim() != ndim) {
    throw ValidationError(std::string(op) + ": expected " + std::to_string(ndim) +
                          "-d tensor, got " + a->value.shape_string());
  }
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad_ready) {
    grad = Tensor(value.shape());
    grad_ready = true;
  }
  return grad;
}

void Node::accumulate(const Tensor& g) {
  Tensor& dst = ensure_grad();
  for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

double scalar_value(const Var& v) {
  if (v->value.size() != 1) {
    throw ValidationError("scalar_value on non-scalar tensor " + v->value.shape_string());
  }
  return v->value[0];
}

void backward(const Var& root) {
  if (root->value.size() != 1) {
    throw ValidationError("backward() root must be a scalar, got " + root->value.shape_string());
  }
  // Iterative post-order DFS; the order lists every node after its parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    n->grad = Tensor();
    n->grad_ready = false;
  }
  root->ensure_grad()[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad_ready && n->requires_grad && n->backprop) n->backprop();
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  Var n = make_node(std::move(out), {a, b});
  Node* self = n.get();
  Node* pa = a.get();
  Node* pb = b.get();
  n->backprop = [self, pa, pb] {
    if (pa->requires_grad) pa->accumulate(self->grad);
    if (pb->requires_grad) pb->accumulate(self->grad);
  };
  return n;
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  Var n = make_node(std::move(out), {a, b});
  Node* self = n.get();
  Node* pa = a.get();
  Node* pb = b.get();
  n->backprop = [self, pa, pb] {
    if (pa->requires_grad) pa->accumulate(self->grad);
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] -= self->grad[i];
    }
  };
  return n;
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  Var n = make_node(std::move(out), {a, b});
  Node* self = n.get();
  Node* pa = a.get();
  Node* pb = b.get();
  n->backprop = [self, pa, pb] {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * pa->value[i];
    }
  };
  return n;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = s * a->value[i];
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa, s] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += s * self->grad[i];
  };
  return n;
}

Var add_scalar(const Var& a, double c) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + c;
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa] {
    if (pa->requires_grad) pa->accumulate(self->grad);
  };
  return n;
}

Var abs(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a->value[i]);
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double x = pa->value[i];
      if (x > 0.0) {
        g[i] += self->grad[i];
      } else if (x < 0.0) {
        g[i] -= self->grad[i];
      }
    }
  };
  return n;
}

Var square(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * a->value[i];
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += 2.0 * pa->value[i] * self->grad[i];
  };
  return n;
}

Var sqrt(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a->value[i]);
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double y = self->value[i];
      if (y > 0.0) g[i] += self->grad[i] / (2.0 * y);
    }
  };
  return n;
}

Var relu(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (std::int64_t i = 0; i < g.size(); ++i) {
      if (pa->value[i] > 0.0) g[i] += self->grad[i];
    }
  };
  return n;
}

Var leaky_relu(const Var& a, double slope) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const double x = a->value[i];
    out[i] = x > 0.0 ? x : slope * x;
  }
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa, slope] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (std::int64_t i = 0; i < g.size(); ++i) {
      g[i] += self->grad[i] * (pa->value[i] > 0.0 ? 1.0 : slope);
    }
  };
  return n;
}

// ---------------------------------------------------------------------------
// Reductions

Var sum_all(const Var& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  Var n = make_node(Tensor::scalar(s), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    const double gs = self->grad[0];
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += gs;
  };
  return n;
}

Var mean_all(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->value.size());
  double s = 0.0;
  for (std::int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  Var n = make_node(Tensor::scalar(s * inv), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa, inv] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    const double gs = self->grad[0] * inv;
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += gs;
  };
  return n;
}

Var mean_rows(const Var& a) {
  check_ndim(a, 2, "mean_rows");
  const int rows = a->value.dim(0);
  const int cols = a->value.dim(1);
  Tensor out({cols});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out.at(j) += a->value.at(i, j);
  }
  const double inv = 1.0 / rows;
  for (int j = 0; j < cols; ++j) out.at(j) *= inv;
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa, rows, cols, inv] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) g.at(i, j) += self->grad.at(j) * inv;
    }
  };
  return n;
}

Var mean_axis1(const Var& a) {
  check_ndim(a, 2, "mean_axis1");
  const int rows = a->value.dim(0);
  const int cols = a->value.dim(1);
  const double inv = 1.0 / cols;
  Tensor out({rows});
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += a->value.at(i, j);
    out.at(i) = s * inv;
  }
  Var n = make_node(std::move(out), {a});
  Node* self = n.get();
  Node* pa = a.get();
  n->backprop = [self, pa, rows, cols, inv] {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      const double gi = self->grad.at(i) * inv;
      for (int j = 0; j < cols; ++j) g.at(i, j) += gi;
    }
  };
  return n;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  check_ndim(a, 2, "matmul");
  check_ndim(b, 2, "matmul");
  const int m = a->value.dim(0);
  const int k = a->value.dim(1);
  const int n_cols = b->value.dim(1);
  if (b->value.dim(0) != k) {
    throw ValidationError("matmul: inner dimensions disagree, " + a->value.shape_string() +
                          " x " + b->value.shape_string());
  }
  Tensor out({m, n_cols});
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double av = a->value.at(i, kk);
      if (av == 0.0) continue;
      for (int j = 0; j < n_cols; ++j) out.at(i, j) += av * b->value.at(kk, j);
    }
  }
  Var n = make_node(std::move(out), {a, b});
  Node* self = n.get();
  Node* pa = a.get();
  Node* pb = b.get();
  n->backprop = [self, pa, pb, m, k, n_cols] {
    if (pa->requires_grad) {
      Tensor& ga = pa->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n_cols; ++j) {
          const double gv = self->grad.at(i, j);
          if (gv == 0.0) continue;
          for (int kk = 0; kk < k; ++kk) ga.at(i, kk) += gv * pb->value.at(kk, j);
        }
      }
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
          const double av = pa->value.at(i, kk);
          if (av == 0.0) continue;
          for (int j = 0; j < n_cols; ++j) gb.at(kk, j) += av * self->grad.at(i, j);
        }
      }
    }
  };
  return n;
}

Var dense(const Var& x, const Var& w, const Var& b) {
  check_ndim(x, 2, "dense");
  check_ndim(w, 2, "dense");
  check_ndim(b, 1, "dense");
  const int n_rows = x->value.dim(0);
  const int in_dim = x->value.dim(1);
  const int out_dim = w->value.dim(1);
  if (w->value.dim(0) != in_dim || b->value.dim(0) != out_dim) {
    throw ValidationError("dense: weight/bias shapes disagree with input " +
                          x->value.shape_string());
  }
  Tensor out({n_rows, out_dim});
  for (int i = 0; i < n_rows; ++i) {
    for (int j = 0; j < out_dim; ++j) out.at(i, j) = b->value.at(j);
    for (int k = 0; k < in_dim; ++k) {
      const double xv = x->value.at(i, k);
      if (xv == 0.0) continue;
      for (int j = 0; j < out_dim; ++j) out.at(i, j) += xv * w->value.at(k, j);
    }
  }
  Var n = make_node(std::move(out), {x, w, b});
  Node* self = n.get();
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b.get();
  n->backprop = [self, px, pw, pb, n_rows, in_dim, out_dim] {
    if (px->requires_grad) {
      Tensor& gx = px->ensure_grad();
      for (int i = 0; i < n_rows; ++i) {
        for (int j = 0; j < out_dim; ++j) {
          const double gv = self->grad.at(i, j);
          if (gv == 0.0) continue;
          for (int k = 0; k < in_dim; ++k) gx.at(i, k) += gv * pw->value.at(k, j);
        }
      }
    }
    if (pw->requires_grad) {
      Tensor& gw = pw->ensure_grad();
      for (int i = 0; i < n_rows; ++i) {
        for (int k = 0; k < in_dim; ++k) {
          const double xv = px->value.at(i, k);
          if (xv == 0.0) continue;
          for (int j = 0; j < out_dim; ++j) gw.at(k, j) += xv * self->grad.at(i, j);
        }
      }
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int i = 0; i < n_rows; ++i) {
        for (int j = 0; j < out_dim; ++j) gb.at(j) += self->grad.at(i, j);
      }
    }
  };
  return n;
}

// ---------------------------------------------------------------------------
// Convolutions

Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_ndim(x, 2, "conv1d");
  check_ndim(w, 3, "conv1d");
  check_ndim(b, 1, "conv1d");
  const int c_in = x->value.dim(0);
  const int len = x->value.dim(1);
  const int c_out = w->value.dim(0);
  const int k_size = w->value.dim(2);
  if (w->value.dim(1) != c_in || b->value.dim(0) != c_out) {
    throw ValidationError("conv1d: weight shape " + w->value.shape_string() +
                          " does not match input channels " + std::to_string(c_in));
  }
  const int out_len = (len + 2 * pad - k_size) / stride + 1;
  if (out_len < 1) {
    throw ValidationError("conv1d: time axis too short (" + std::to_string(len) + " steps)");
  }
  Tensor out({c_out, out_len});
  for (int co = 0; co < c_out; ++co) {
    for (int t = 0; t < out_len; ++t) {
      double acc = b->value.at(co);
      for (int ci = 0; ci < c_in; ++ci) {
        for (int k = 0; k < k_size; ++k) {
          const int i = t * stride + k - pad;
          if (i >= 0 && i < len) acc += w->value.at(co, ci, k) * x->value.at(ci, i);
        }
      }
      out.at(co, t) = acc;
    }
  }
  Var n = make_node(std::move(out), {x, w, b});
  Node* self = n.get();
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b.get();
  n->backprop = [self, px, pw, pb, c_in, len, c_out, k_size, stride, pad] {
    const int out_len = self->value.dim(1);
    Tensor* gx = px->requires_grad ? &px->ensure_grad() : nullptr;
    Tensor* gw = pw->requires_grad ? &pw->ensure_grad() : nullptr;
    Tensor* gb = pb->requires_grad ? &pb->ensure_grad() : nullptr;
    for (int co = 0; co < c_out; ++co) {
      for (int t = 0; t < out_len; ++t) {
        const double g = self->grad.at(co, t);
        if (g == 0.0) continue;
        if (gb) gb->at(co) += g;
        for (int ci = 0; ci < c_in; ++ci) {
          for (int k = 0; k < k_size; ++k) {
            const int i = t * stride + k - pad;
            if (i < 0 || i >= len) continue;
            if (gx) gx->at(ci, i) += g * pw->value.at(co, ci, k);
            if (gw) gw->at(co, ci, k) += g * px->value.at(ci, i);
          }
        }
      }
    }
  };
  return n;
}

Var conv_transpose1d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_ndim(x, 2, "conv_transpose1d");
  check_ndim(w, 3, "conv_transpose1d");
  check_ndim(b, 1, "conv_transpose1d");
  const int c_in = x->value.dim(0);
  const int len = x->value.dim(1);
  const int c_out = w->value.dim(1);
  const int k_size = w->value.dim(2);
  if (w->value.dim(0) != c_in || b->value.dim(0) != c_out) {
    throw ValidationError("conv_transpose1d: weight shape " + w->value.shape_string() +
                          " does not match input channels " + std::to_string(c_in));
  }
  const int out_len = (len - 1) * stride - 2 * pad + k_size;
  if (out_len < 1) {
    throw ValidationError("conv_transpose1d: time axis too short (" + std::to_string(len) +
                          " steps)");
  }
  Tensor out({c_out, out_len});
  for (int co = 0; co < c_out; ++co) {
    for (int o = 0; o < out_len; ++o) out.at(co, o) = b->value.at(co);
  }
  for (int ci = 0; ci < c_in; ++ci) {
    for (int i = 0; i < len; ++i) {
      const double xv = x->value.at(ci, i);
      if (xv == 0.0) continue;
      for (int co = 0; co < c_out; ++co) {
        for (int k = 0; k < k_size; ++k) {
          const int o = i * stride + k - pad;
          if (o >= 0 && o < out_len) out.at(co, o) += w->value.at(ci, co, k) * xv;
        }
      }
    }
  }
  Var n = make_node(std::move(out), {x, w, b});
  Node* self = n.get();
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b.get();
  n->backprop = [self, px, pw, pb, c_in, len, c_out, k_size, stride, pad] {
    const int out_len = self->value.dim(1);
    Tensor* gx = px->requires_grad ? &px->ensure_grad() : nullptr;
    Tensor* gw = pw->requires_grad ? &pw->ensure_grad() : nullptr;
    Tensor* gb = pb->requires_grad ? &pb->ensure_grad() : nullptr;
    if (gb) {
      for (int co = 0; co < c_out; ++co) {
        for (int o = 0; o < out_len; ++o) gb->at(co) += self->grad.at(co, o);
      }
    }
    for (int ci = 0; ci < c_in; ++ci) {
      for (int i = 0; i < len; ++i) {
        for (int co = 0; co < c_out; ++co) {
          for (int k = 0; k < k_size; ++k) {
            const int o = i * stride + k - pad;
            if (o < 0 || o >= out_len) continue;
            const double g = self->grad.at(co, o);
            if (g == 0.0) continue;
            if (gx) gx->at(ci, i) += g * pw->value.at(ci, co, k);
            if (gw) gw->at(ci, co, k) += g * px->value.at(ci, i);
          }
        }
      }
    }
  };
  return n;
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride_h, int stride_w, int pad_h,
           int pad_w) {
  check_ndim(x, 3, "conv2d");
  check_ndim(w, 4, "conv2d");
  check_ndim(b, 1, "conv2d");
  const int c_in = x->value.dim(0);
  const int h = x->value.dim(1);
  const int w_in = x->value.dim(2);
  const int c_out = w->value.dim(0);
  const int kh = w->value.dim(2);
  const int kw = w->value.dim(3);
  if (w->value.dim(1) != c_in || b->value.dim(0) != c_out) {
    throw ValidationError("conv2d: weight shape " + w->value.shape_string() +
                          " does not match input channels " + std::to_string(c_in));
  }
  const int out_h = (h + 2 * pad_h - kh) / stride_h + 1;
  const int out_w = (w_in + 2 * pad_w - kw) / stride_w + 1;
  if (out_h < 1) throw ValidationError("conv2d: mel axis too short (" + std::to_string(h) + ")");
  if (out_w < 1) {
    throw ValidationError("conv2d: time axis too short (" + std::to_string(w_in) + ")");
  }
  Tensor out({c_out, out_h, out_w});
  const auto& xv = x->value;
  const auto& wv = w->value;
  for (int co = 0; co < c_out; ++co) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        double acc = b->value.at(co);
        for (int ci = 0; ci < c_in; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride_h + ky - pad_h;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride_w + kx - pad_w;
              if (ix >= 0 && ix < w_in) acc += wv.at(co, ci, ky * kw + kx) * xv.at(ci, iy, ix);
            }
          }
        }
        out.at(co, oy, ox) = acc;
      }
    }
  }
  Var n = make_node(std::move(out), {x, w, b});
  Node* self = n.get();
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b.get();
  n->backprop = [self, px, pw, pb, c_in, h, w_in, c_out, kh, kw, stride_h, stride_w, pad_h,
                 pad_w] {
    const int out_h = self->value.dim(1);
    const int out_w = self->value.dim(2);
    Tensor* gx = px->requires_grad ? &px->ensure_grad() : nullptr;
    Tensor* gw = pw->requires_grad ? &pw->ensure_grad() : nullptr;
    Tensor* gb = pb->requires_grad ? &pb->ensure_grad() : nullptr;
    for (int co = 0; co < c_out; ++co) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const double g = self->grad.at(co, oy, ox);
          if (g == 0.0) continue;
          if (gb) gb->at(co) += g;
          for (int ci = 0; ci < c_in; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride_h + ky - pad_h;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride_w + kx - pad_w;
                if (ix < 0 || ix >= w_in) continue;
                if (gx) gx->at(ci, iy, ix) += g * pw->value.at(co, ci, ky * kw + kx);
                if (gw) gw->at(co, ci, ky * kw + kx) += g * px->value.at(ci, iy, ix);
              }
            }
          }
        }
      }
    }
  };
  return n;
}

// ---------------------------------------------------------------------------
// Normalization

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x->value.ndim() < 2) {
    throw ValidationError("instance_norm: need [channels, spatial...] input, got " +
                          x->value.shape_string());
  }
  const int channels = x->value.dim(0);
  const std::int64_t spatial = x->value.size() / channels;
  if (gamma->value.size() != channels || beta->value.size() != channels) {
    throw ValidationError("instance_norm: gamma/beta must have one entry per channel");
  }
  Tensor out(x->value.shape());
  std::vector<double> inv_std(channels);
  std::vector<double> xhat(static_cast<std::size_t>(x->value.size()));
  const double inv_m = 1.0 / static_cast<double>(spatial);
  for (int c = 0; c < channels; ++c) {
    const double* xc = x->value.data() + c * spatial;
    double mu = 0.0;
    for (std::int64_t i = 0; i < spatial; ++i) mu += xc[i];
    mu *= inv_m;
    double var = 0.0;
    for (std::int64_t i = 0; i < spatial; ++i) {
      const double d = xc[i] - mu;
      var += d * d;
    }
    var *= inv_m;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[c] = inv;
    double* oc = out.data() + c * spatial;
    double* hc = xhat.data() + c * spatial;
    const double gc = gamma->value.at(c);
    const double bc = beta->value.at(c);
    for (std::int64_t i = 0; i < spatial; ++i) {
      hc[i] = (xc[i] - mu) * inv;
      oc[i] = gc * hc[i] + bc;
    }
  }
  Var n = make_node(std::move(out), {x, gamma, beta});
  Node* self = n.get();
  Node* px = x.get();
  Node* pg = gamma.get();
  Node* pb = beta.get();
  n->backprop = [self, px, pg, pb, channels, spatial, inv_m, inv_std = std::move(inv_std),
                 xhat = std::move(xhat)] {
    for (int c = 0; c < channels; ++c) {
      const double* g = self->grad.data() + c * spatial;
      const double* hc = xhat.data() + c * spatial;
      double sum_g = 0.0;
      double sum_gh = 0.0;
      for (std::int64_t i = 0; i < spatial; ++i) {
        sum_g += g[i];
        sum_gh += g[i] * hc[i];
      }
      if (pg->requires_grad) pg->ensure_grad().at(c) += sum_gh;
      if (pb->requires_grad) pb->ensure_grad().at(c) += sum_g;
      if (px->requires_grad) {
        double* gx = px->ensure_grad().data() + c * spatial;
        const double scale = pg->value.at(c) * inv_std[c];
        const double mean_g = sum_g * inv_m;
        const double mean_gh = sum_gh * inv_m;
        for (std::int64_t i = 0; i < spatial; ++i) {
          gx[i] += scale * (g[i] - mean_g - hc[i] * mean_gh);
        }
      }
    }
  };
  return n;
}

Var l2_normalize_rows(const Var& x, double eps) {
  const bool vector_input = x->value.ndim() == 1;
  const int rows = vector_input ? 1 : x->value.dim(0);
  const int cols = vector_input ? x->value.dim(0) : x->value.dim(1);
  if (!vector_input) check_ndim(x, 2, "l2_normalize_rows");
  Tensor out(x->value.shape());
  std::vector<double> inv_norm(rows);
  for (int i = 0; i < rows; ++i) {
    const double* xr = x->value.data() + static_cast<std::int64_t>(i) * cols;
    double ss = eps;
    for (int j = 0; j < cols; ++j) ss += xr[j] * xr[j];
    const double inv = 1.0 / std::sqrt(ss);
    inv_norm[i] = inv;
    double* orow = out.data() + static_cast<std::int64_t>(i) * cols;
    for (int j = 0; j < cols; ++j) orow[j] = xr[j] * inv;
  }
  Var n = make_node(std::move(out), {x});
  Node* self = n.get();
  Node* px = x.get();
  n->backprop = [self, px, rows, cols, inv_norm = std::move(inv_norm)] {
    if (!px->requires_grad) return;
    Tensor& gx = px->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      const double* g = self->grad.data() + static_cast<std::int64_t>(i) * cols;
      const double* y = self->value.data() + static_cast<std::int64_t>(i) * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += g[j] * y[j];
      double* gr = gx.data() + static_cast<std::int64_t>(i) * cols;
      for (int j = 0; j < cols; ++j) gr[j] += (g[j] - y[j] * dot) * inv_norm[i];
    }
  };
  return n;
}

// ---------------------------------------------------------------------------
// Shape plumbing

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out(shape);
  if (out.size() != x->value.size()) {
    throw ValidationError("reshape: size mismatch, " + x->value.shape_string() + " -> " +
                          out.shape_string());
  }
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i];
  Var n = make_node(std::move(out), {x});
  Node* self = n.get();
  Node* px = x.get();
  n->backprop = [self, px] {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
  };
  return n;
}

Var transpose2(const Var& x) {
  check_ndim(x, 2, "transpose2");
  const int rows = x->value.dim(0);
  const int cols = x->value.dim(1);
  Tensor out({cols, rows});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out.at(j, i) = x->value.at(i, j);
  }
  Var n = make_node(std::move(out), {x});
  Node* self = n.get();
  Node* px = x.get();
  n->backprop = [self, px, rows, cols] {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) g.at(i, j) += self->grad.at(j, i);
    }
  };
  return n;
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  const Tensor& first = parts.front()->value;
  std::vector<int> shape = first.shape();
  std::int64_t tail = first.size() / first.dim(0);
  int total_rows = 0;
  for (const Var& p : parts) {
    const Tensor& t = p->value;
    if (t.ndim() != first.ndim() || t.size() / t.dim(0) != tail) {
      throw ValidationError("concat_rows: trailing dimensions disagree (" +
                            first.shape_string() + " vs " + t.shape_string() + ")");
    }
    total_rows += t.dim(0);
  }
  shape[0] = total_rows;
  Tensor out(shape);
  std::int64_t offset = 0;
  for (const Var& p : parts) {
    for (std::int64_t i = 0; i < p->value.size(); ++i) out[offset + i] = p->value[i];
    offset += p->value.size();
  }
  Var n = make_node(std::move(out), {parts});
  Node* self = n.get();
  n->backprop = [self] {
    std::int64_t offset = 0;
    for (const Var& p : self->parents) {
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += self->grad[offset + i];
      }
      offset += p->value.size();
    }
  };
  return n;
}

Var broadcast_col(const Var& v, int n_cols) {
  check_ndim(v, 1, "broadcast_col");
  const int d = v->value.dim(0);
  Tensor out({d, n_cols});
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < n_cols; ++j) out.at(i, j) = v->value.at(i);
  }
  Var n = make_node(std::move(out), {v});
  Node* self = n.get();
  Node* pv = v.get();
  n->backprop = [self, pv, d, n_cols] {
    if (!pv->requires_grad) return;
    Tensor& g = pv->ensure_grad();
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < n_cols; ++j) s += self->grad.at(i, j);
      g.at(i) += s;
    }
  };
  return n;
}

Var broadcast_row(const Var& v, int n_rows) {
  check_ndim(v, 1, "broadcast_row");
  const int d = v->value.dim(0);
  Tensor out({n_rows, d});
  for (int i = 0; i < n_rows; ++i) {
    for (int j = 0; j < d; ++j) out.at(i, j) = v->value.at(j);
  }
  Var n = make_node(std::move(out), {v});
  Node* self = n.get();
  Node* pv = v.get();
  n->backprop = [self, pv, d, n_rows] {
    if (!pv->requires_grad) return;
    Tensor& g = pv->ensure_grad();
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int i = 0; i < n_rows; ++i) s += self->grad.at(i, j);
      g.at(j) += s;
    }
  };
  return n;
}

Var slice_cols(const Var& x, int start, int len) {
  check_ndim(x, 2, "slice_cols");
  const int rows = x->value.dim(0);
  const int cols = x->value.dim(1);
  if (start < 0 || len <= 0 || start + len > cols) {
    throw ValidationError("slice_cols: window [" + std::to_string(start) + ", " +
                          std::to_string(start + len) + ") out of range for " +
                          x->value.shape_string());
  }
  Tensor out({rows, len});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < len; ++j) out.at(i, j) = x->value.at(i, start + j);
  }
  Var n = make_node(std::move(out), {x});
  Node* self = n.get();
  Node* px = x.get();
  n->backprop = [self, px, rows, len, start] {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < len; ++j) g.at(i, start + j) += self->grad.at(i, j);
    }
  };
  return n;
}

namespace {

// Triangle-wave fold into [0, n): reflection without edge repetition.
int fold_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

}  // namespace

Var reflect_pad_cols(const Var& x, int left, int right) {
  check_ndim(x, 2, "reflect_pad_cols");
  if (left < 0 || right < 0) throw ValidationError("reflect_pad_cols: negative padding");
  const int rows = x->value.dim(0);
  const int cols = x->value.dim(1);
  const int out_cols = left + cols + right;
  Tensor out({rows, out_cols});
  std::vector<int> src(out_cols);
  for (int j = 0; j < out_cols; ++j) src[j] = fold_index(j - left, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < out_cols; ++j) out.at(i, j) = x->value.at(i, src[j]);
  }
  Var n = make_node(std::move(out), {x});
  Node* self = n.get();
  Node* px = x.get();
  n->backprop = [self, px, rows, out_cols, src = std::move(src)] {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < out_cols; ++j) g.at(i, src[j]) += self->grad.at(i, j);
    }
  };
  return n;
}

}  // namespace a2k::ad
