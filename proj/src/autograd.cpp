#include "dualglob/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "dualglob/error.hpp"
#include "dualglob/kernels.hpp"

namespace dualglob::nn {

namespace {

thread_local bool g_no_grad = false;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

template <typename T>
T Var<T>::item() const {
  if (node_->value.size() != 1)
    throw ContractError("item() on a tensor of shape " + shape_str(node_->value.shape()));
  return node_->value[0];
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (g_no_grad) return Var<T>(node);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (!needs) return Var<T>(node);
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (const auto& p : parents) node->parents.push_back(p.ptr());
  node->backward_fn = std::move(backward_fn);
  return Var<T>(node);
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().size() != 1)
    throw ContractError("backward() needs a scalar loss");
  if (!loss.requires_grad()) return;

  // iterative post-order DFS
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order)
    if (n->backward_fn) n->grad = Tensor<T>(n->value.shape(), T(0));
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

FrameMask FrameMask::downsample(std::size_t stride) const {
  if (stride <= 1) return *this;
  FrameMask out;
  out.batch = batch;
  out.length = (length + stride - 1) / stride;
  out.bits.resize(out.batch * out.length);
  kernels::downsample_mask(batch, length, stride, bits.data(), out.bits.data());
  return out;
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride) {
  require_rank(x.shape(), 3, "conv1d input");
  require_rank(w.shape(), 3, "conv1d weight");
  kernels::Conv1dGeometry g;
  g.batch = x.shape()[0];
  g.in_channels = x.shape()[1];
  g.length = x.shape()[2];
  g.out_channels = w.shape()[0];
  g.kernel = w.shape()[2];
  g.stride = stride;
  if (w.shape()[1] != g.in_channels)
    throw ShapeError("conv1d: input has " + std::to_string(g.in_channels) +
                     " channels, weight expects " + std::to_string(w.shape()[1]));
  if (b.defined() && (b.value().size() != g.out_channels))
    throw ShapeError("conv1d: bias length does not match output channels");
  if (stride == 0 || g.length == 0) throw ShapeError("conv1d: zero stride or length");

  Tensor<T> y({g.batch, g.out_channels, g.out_length()});
  kernels::parallel::conv1d_forward(g, x.value().data(), w.value().data(),
                                    b.defined() ? b.value().data() : nullptr, y.data());
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_op<T>(std::move(y), std::move(parents), [g](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    T* dx = px.requires_grad ? px.grad_buffer().data() : nullptr;
    T* dw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
    T* db = nullptr;
    if (self.parents.size() > 2 && self.parents[2]->requires_grad)
      db = self.parents[2]->grad_buffer().data();
    kernels::parallel::conv1d_backward(g, px.value.data(), pw.value.data(), self.grad.data(), dx,
                                       dw, db);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  return make_op<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (self.value[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> masked_gap(const Var<T>& x, const FrameMask& mask) {
  require_rank(x.shape(), 3, "masked_gap input");
  const std::size_t B = x.shape()[0], C = x.shape()[1], L = x.shape()[2];
  if (mask.batch != B || mask.length != L)
    throw ShapeError("masked_gap: mask is [" + std::to_string(mask.batch) + "," +
                     std::to_string(mask.length) + "], features are " + shape_str(x.shape()));
  Tensor<T> y({B, C});
  kernels::parallel::masked_gap_forward(B, C, L, x.value().data(), mask.bits.data(), y.data());
  auto bits = std::make_shared<const std::vector<std::uint8_t>>(mask.bits);
  return make_op<T>(std::move(y), {x}, [B, C, L, bits](Node<T>& self) {
    kernels::parallel::masked_gap_backward(B, C, L, bits->data(), self.grad.data(),
                                           self.parents[0]->grad_buffer().data());
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(w.shape(), 2, "linear weight");
  const std::size_t B = x.shape()[0], In = x.shape()[1], Out = w.shape()[0];
  if (w.shape()[1] != In)
    throw ShapeError("linear: input width " + std::to_string(In) + " vs weight " +
                     shape_str(w.shape()));
  if (b.defined() && b.value().size() != Out) throw ShapeError("linear: bias length mismatch");
  Tensor<T> y({B, Out});
  kernels::parallel::linear_forward(B, In, Out, x.value().data(), w.value().data(),
                                    b.defined() ? b.value().data() : nullptr, y.data());
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_op<T>(std::move(y), std::move(parents), [B, In, Out](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    T* dx = px.requires_grad ? px.grad_buffer().data() : nullptr;
    T* dw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
    T* db = nullptr;
    if (self.parents.size() > 2 && self.parents[2]->requires_grad)
      db = self.parents[2]->grad_buffer().data();
    kernels::parallel::linear_backward(B, In, Out, px.value.data(), pw.value.data(),
                                       self.grad.data(), dx, dw, db);
  });
}

template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x, double eps) {
  require_rank(x.shape(), 2, "l2_normalize_rows");
  const std::size_t B = x.shape()[0], D = x.shape()[1];
  Tensor<T> y(x.shape());
  auto norms = std::make_shared<std::vector<double>>(B);
  for (std::size_t i = 0; i < B; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) s += double(x.value().at(i, j)) * x.value().at(i, j);
    const double n = std::max(std::sqrt(s), eps);
    (*norms)[i] = n;
    for (std::size_t j = 0; j < D; ++j) y.at(i, j) = static_cast<T>(x.value().at(i, j) / n);
  }
  return make_op<T>(std::move(y), {x}, [B, D, eps, norms](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < B; ++i) {
      const double n = (*norms)[i];
      if (n <= eps) {
        for (std::size_t j = 0; j < D; ++j) g.at(i, j) += static_cast<T>(self.grad.at(i, j) / eps);
        continue;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < D; ++j) dot += double(self.value.at(i, j)) * self.grad.at(i, j);
      for (std::size_t j = 0; j < D; ++j)
        g.at(i, j) += static_cast<T>((self.grad.at(i, j) - self.value.at(i, j) * dot) / n);
    }
  });
}

template <typename T>
Var<T> concat_rows(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sa.size() != sb.size() || !std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1))
    throw ShapeError("concat_rows: " + shape_str(sa) + " vs " + shape_str(sb));
  Shape so = sa;
  so[0] = sa[0] + sb[0];
  Tensor<T> y(so);
  std::copy(a.value().vec().begin(), a.value().vec().end(), y.vec().begin());
  std::copy(b.value().vec().begin(), b.value().vec().end(), y.vec().begin() + a.value().size());
  const std::size_t na = a.value().size();
  return make_op<T>(std::move(y), {a, b}, [na](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> rows) {
  const Shape& sx = x.shape();
  if (sx.empty()) throw ShapeError("gather_rows on a scalar");
  const std::size_t stride = x.value().size() / std::max<std::size_t>(sx[0], 1);
  for (auto r : rows)
    if (r >= sx[0]) throw ShapeError("gather_rows: row index out of range");
  Shape so = sx;
  so[0] = rows.size();
  Tensor<T> y(so);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.value().data() + rows[i] * stride, stride, y.data() + i * stride);
  auto idx = std::make_shared<const std::vector<std::size_t>>(rows.begin(), rows.end());
  return make_op<T>(std::move(y), {x}, [idx, stride](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t j = 0; j < stride; ++j) g[(*idx)[i] * stride + j] += self.grad[i * stride + j];
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    // read both values before either gradient changes (a and b may alias)
    const std::size_t n = self.grad.size();
    std::vector<T> ga(n), gb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ga[i] = self.grad[i] * pb.value[i];
      gb[i] = self.grad[i] * pa.value[i];
    }
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += ga[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += gb[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, double c) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<T>(x.value()[i] * c);
  return make_op<T>(std::move(y), {x}, [c](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(self.grad[i] * c);
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double s = 0.0;
  for (auto v : x.value().vec()) s += v;
  Tensor<T> y(Shape{}, std::vector<T>{static_cast<T>(s)});
  return make_op<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Var<T> supcon(const Var<T>& anchors, const Var<T>& candidates,
              std::span<const std::uint8_t> positive, std::span<const std::uint8_t> denominator,
              double tau) {
  require_rank(anchors.shape(), 2, "supcon anchors");
  require_rank(candidates.shape(), 2, "supcon candidates");
  if (!(tau > 0.0)) throw ContractError("supcon: temperature must be positive");
  const std::size_t M = anchors.shape()[0], N = candidates.shape()[0], D = anchors.shape()[1];
  if (candidates.shape()[1] != D)
    throw ShapeError("supcon: anchors " + shape_str(anchors.shape()) + " vs candidates " +
                     shape_str(candidates.shape()));
  if (positive.size() != M * N || denominator.size() != M * N)
    throw ShapeError("supcon: mask size does not match [anchors, candidates]");

  const auto& A = anchors.value();
  const auto& C = candidates.value();
  // dlogits holds d(loss)/d(logit) for the backward pass
  auto dlogits = std::make_shared<std::vector<double>>(M * N, 0.0);
  std::vector<double> logits(N);
  std::size_t contributing = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    std::size_t npos = 0;
    for (std::size_t j = 0; j < N; ++j) {
      if (positive[i * N + j]) {
        if (!denominator[i * N + j])
          throw ContractError("supcon: positive pair outside the denominator set");
        ++npos;
      }
    }
    if (npos == 0) continue;
    ++contributing;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < N; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += double(A.at(i, d)) * C.at(j, d);
      logits[j] = s / tau;
      if (denominator[i * N + j]) mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < N; ++j)
      if (denominator[i * N + j]) z += std::exp(logits[j] - mx);
    const double lse = mx + std::log(z);
    double term = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      double& g = (*dlogits)[i * N + j];
      if (denominator[i * N + j]) g = std::exp(logits[j] - lse);
      if (positive[i * N + j]) {
        term += logits[j] - lse;
        g -= 1.0 / static_cast<double>(npos);
      }
    }
    total += -term / static_cast<double>(npos);
  }
  if (contributing == 0) {
    std::fill(dlogits->begin(), dlogits->end(), 0.0);
  } else {
    const double inv = 1.0 / static_cast<double>(contributing);
    total *= inv;
    for (auto& g : *dlogits) g *= inv;
  }

  Tensor<T> y(Shape{}, std::vector<T>{static_cast<T>(total)});
  return make_op<T>(std::move(y), {anchors, candidates}, [M, N, D, tau, dlogits](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pc = *self.parents[1];
    const double up = self.grad[0] / tau;
    std::vector<double> ga(M * D, 0.0), gc(N * D, 0.0);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        const double g = (*dlogits)[i * N + j] * up;
        if (g == 0.0) continue;
        for (std::size_t d = 0; d < D; ++d) {
          ga[i * D + d] += g * pc.value.at(j, d);
          gc[j * D + d] += g * pa.value.at(i, d);
        }
      }
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t k = 0; k < ga.size(); ++k) g[k] += static_cast<T>(ga[k]);
    }
    if (pc.requires_grad) {
      auto& g = pc.grad_buffer();
      for (std::size_t k = 0; k < gc.size(); ++k) g[k] += static_cast<T>(gc[k]);
    }
  });
}

#define DUALGLOB_INSTANTIATE_AUTOGRAD(T)                                                        \
  template class Var<T>;                                                                      \
  template Var<T> make_op<T>(Tensor<T>, std::vector<Var<T>>, std::function<void(Node<T>&)>);  \
  template void backward<T>(const Var<T>&);                                                   \
  template Var<T> conv1d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t);        \
  template Var<T> relu<T>(const Var<T>&);                                                     \
  template Var<T> masked_gap<T>(const Var<T>&, const FrameMask&);                             \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                     \
  template Var<T> l2_normalize_rows<T>(const Var<T>&, double);                                \
  template Var<T> concat_rows<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> gather_rows<T>(const Var<T>&, std::span<const std::size_t>);                \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale<T>(const Var<T>&, double);                                            \
  template Var<T> sum<T>(const Var<T>&);                                                      \
  template Var<T> supcon<T>(const Var<T>&, const Var<T>&, std::span<const std::uint8_t>,      \
                            std::span<const std::uint8_t>, double);

DUALGLOB_INSTANTIATE_AUTOGRAD(float)
DUALGLOB_INSTANTIATE_AUTOGRAD(double)

#undef DUALGLOB_INSTANTIATE_AUTOGRAD

}  // namespace dualglob::nn
