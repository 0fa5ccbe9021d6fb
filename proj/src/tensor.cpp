#include "flexmod/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "flexmod/kernels.hpp"

namespace flexmod {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape dims must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void ensure_grad(TensorNode& node) {
  if (node.grad.empty()) node.grad.assign(node.values.size(), 0.0);
}

Tensor make_result(std::vector<int> shape, std::vector<double> values,
                   std::vector<std::shared_ptr<TensorNode>> parents,
                   std::function<void(TensorNode&)> backprop) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  node->requires_grad = needs;
  if (needs) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(node));
}

void check_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(who) + ": expected a rank-2 tensor");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch between operands");
  }
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor values length does not match shape");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
  return node_->values[0];
}

std::vector<double>& Tensor::grad() {
  ensure_grad(*node_);
  return node_->grad;
}

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_rank2(x, "linear(input)");
  check_rank2(weight, "linear(weight)");
  if (bias.rank() != 1) throw std::invalid_argument("linear: bias must be rank-1");
  const int batch = x.dim(0), in = x.dim(1);
  const int out = weight.dim(0), win = weight.dim(1);
  if (in != win) {
    throw std::invalid_argument("linear: input inner dim " + std::to_string(in) +
                                " != weight inner dim " + std::to_string(win));
  }
  if (bias.dim(0) != out) {
    throw std::invalid_argument("linear: bias dim " + std::to_string(bias.dim(0)) +
                                " != weight outer dim " + std::to_string(out));
  }

  std::vector<double> y(static_cast<std::size_t>(batch) * out);
  kernels::matmul_nt(x.values().data(), weight.values().data(), y.data(), batch, in, out);
  const double* b = bias.values().data();
  for (int i = 0; i < batch; ++i) {
    double* row = y.data() + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) row[o] += b[o];
  }

  auto xp = x.node(), wp = weight.node(), bp = bias.node();
  return make_result(
      {batch, out}, std::move(y), {xp, wp, bp},
      [xp, wp, bp, batch, in, out](TensorNode& self) {
        const double* dy = self.grad.data();
        if (xp->requires_grad) {
          ensure_grad(*xp);
          std::vector<double> dx(static_cast<std::size_t>(batch) * in);
          kernels::matmul_nn(dy, wp->values.data(), dx.data(), batch, out, in);
          for (std::size_t i = 0; i < dx.size(); ++i) xp->grad[i] += dx[i];
        }
        if (wp->requires_grad) {
          ensure_grad(*wp);
          std::vector<double> dw(static_cast<std::size_t>(out) * in);
          kernels::matmul_tn(dy, xp->values.data(), dw.data(), out, batch, in);
          for (std::size_t i = 0; i < dw.size(); ++i) wp->grad[i] += dw[i];
        }
        if (bp->requires_grad) {
          ensure_grad(*bp);
          for (int i = 0; i < batch; ++i) {
            const double* row = dy + static_cast<std::size_t>(i) * out;
            for (int o = 0; o < out; ++o) bp->grad[o] += row[o];
          }
        }
      });
}

Tensor activate(const Tensor& x, Activation act) {
  if (act == Activation::identity) return x;
  std::vector<double> y(x.size());
  const auto& xv = x.values();
  switch (act) {
    case Activation::relu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
      break;
    case Activation::identity:
      break;
  }
  auto xp = x.node();
  return make_result(x.shape(), std::move(y), {xp}, [xp, act](TensorNode& self) {
    if (!xp->requires_grad) return;
    ensure_grad(*xp);
    for (std::size_t i = 0; i < self.values.size(); ++i) {
      double d = 0.0;
      switch (act) {
        case Activation::relu: d = xp->values[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::tanh: d = 1.0 - self.values[i] * self.values[i]; break;
        case Activation::sigmoid: d = self.values[i] * (1.0 - self.values[i]); break;
        case Activation::identity: d = 1.0; break;
      }
      xp->grad[i] += self.grad[i] * d;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no tensors given");
  const int batch = parts.front().dim(0);
  int total = 0;
  for (const auto& p : parts) {
    check_rank2(p, "concat_cols");
    if (p.dim(0) != batch) throw std::invalid_argument("concat_cols: batch dims differ");
    total += p.dim(1);
  }
  std::vector<double> y(static_cast<std::size_t>(batch) * total);
  int offset = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < batch; ++i) {
      const double* src = p.values().data() + static_cast<std::size_t>(i) * w;
      double* dst = y.data() + static_cast<std::size_t>(i) * total + offset;
      std::copy(src, src + w, dst);
    }
    offset += w;
  }
  std::vector<std::shared_ptr<TensorNode>> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) parents.push_back(p.node());
  return make_result({batch, total}, std::move(y), std::move(parents),
                     [batch, total](TensorNode& self) {
                       int off = 0;
                       for (auto& parent : self.parents) {
                         const int w = parent->shape[1];
                         if (parent->requires_grad) {
                           ensure_grad(*parent);
                           for (int i = 0; i < batch; ++i) {
                             const double* g =
                                 self.grad.data() + static_cast<std::size_t>(i) * total + off;
                             double* dst = parent->grad.data() + static_cast<std::size_t>(i) * w;
                             for (int j = 0; j < w; ++j) dst[j] += g[j];
                           }
                         }
                         off += w;
                       }
                     });
}

std::vector<double> softmax_rows(const std::vector<double>& logits, int batch, int k) {
  std::vector<double> probs(logits.size());
  for (int i = 0; i < batch; ++i) {
    const double* row = logits.data() + static_cast<std::size_t>(i) * k;
    double* out = probs.data() + static_cast<std::size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      out[j] = std::exp(row[j] - mx);
      sum += out[j];
    }
    for (int j = 0; j < k; ++j) out[j] /= sum;
  }
  return probs;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check_rank2(logits, "softmax_cross_entropy");
  const int batch = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != batch) {
    throw std::invalid_argument("softmax_cross_entropy: got " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(batch));
  }
  for (int i = 0; i < batch; ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                                  " out of range [0, " + std::to_string(k) + ") at row " +
                                  std::to_string(i));
    }
  }
  auto probs = softmax_rows(logits.values(), batch, k);
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    loss -= std::log(std::max(probs[static_cast<std::size_t>(i) * k + labels[i]], 1e-300));
  }
  loss /= batch;

  auto lp = logits.node();
  return make_result({1}, {loss}, {lp},
                     [lp, probs = std::move(probs), labels, batch, k](TensorNode& self) {
                       if (!lp->requires_grad) return;
                       ensure_grad(*lp);
                       const double g = self.grad[0] / batch;
                       for (int i = 0; i < batch; ++i) {
                         double* dst = lp->grad.data() + static_cast<std::size_t>(i) * k;
                         const double* p = probs.data() + static_cast<std::size_t>(i) * k;
                         for (int j = 0; j < k; ++j) dst[j] += g * p[j];
                         dst[labels[i]] -= g;
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  auto ap = a.node(), bp = b.node();
  return make_result(a.shape(), std::move(y), {ap, bp}, [ap, bp](TensorNode& self) {
    for (auto& p : {ap, bp}) {
      if (!p->requires_grad) continue;
      ensure_grad(*p);
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] - b.values()[i];
  auto ap = a.node(), bp = b.node();
  return make_result(a.shape(), std::move(y), {ap, bp}, [ap, bp](TensorNode& self) {
    if (ap->requires_grad) {
      ensure_grad(*ap);
      for (std::size_t i = 0; i < self.grad.size(); ++i) ap->grad[i] += self.grad[i];
    }
    if (bp->requires_grad) {
      ensure_grad(*bp);
      for (std::size_t i = 0; i < self.grad.size(); ++i) bp->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  auto ap = a.node(), bp = b.node();
  return make_result(a.shape(), std::move(y), {ap, bp}, [ap, bp](TensorNode& self) {
    if (ap->requires_grad) {
      ensure_grad(*ap);
      for (std::size_t i = 0; i < self.grad.size(); ++i) ap->grad[i] += self.grad[i] * bp->values[i];
    }
    if (bp->requires_grad) {
      ensure_grad(*bp);
      for (std::size_t i = 0; i < self.grad.size(); ++i) bp->grad[i] += self.grad[i] * ap->values[i];
    }
  });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor square(const Tensor& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.values()[i] * x.values()[i];
  auto xp = x.node();
  return make_result(x.shape(), std::move(y), {xp}, [xp](TensorNode& self) {
    if (!xp->requires_grad) return;
    ensure_grad(*xp);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xp->grad[i] += 2.0 * xp->values[i] * self.grad[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.values()[i] * factor;
  auto xp = x.node();
  return make_result(x.shape(), std::move(y), {xp}, [xp, factor](TensorNode& self) {
    if (!xp->requires_grad) return;
    ensure_grad(*xp);
    for (std::size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i] * factor;
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto xp = x.node();
  return make_result({1}, {s}, {xp}, [xp](TensorNode& self) {
    if (!xp->requires_grad) return;
    ensure_grad(*xp);
    for (std::size_t i = 0; i < xp->grad.size(); ++i) xp->grad[i] += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got size " +
                                std::to_string(loss.size()));
  }
  auto root = loss.node();
  if (root->backward_done && !root->backprop) {
    throw std::runtime_error("backward: graph already consumed; rebuild the forward pass");
  }

  // iterative post-order DFS over parents
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  ensure_grad(*root);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop) {
      node->backprop(*node);
      node->backprop = nullptr;
    }
    node->backward_done = true;
  }
}

void zero_grad(const std::vector<Tensor>& tensors) {
  for (const auto& t : tensors) {
    if (t.defined()) t.node()->grad.clear();
  }
}

}  // namespace flexmod
