// Copyright 2026 The esplit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "esplit/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "esplit/error.h"

namespace esplit::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  fail(ErrorKind::kShape, std::string(op) + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, "operand shapes differ " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, int64_t rank, const char* name) {
  if (t.rank() != rank) {
    shape_error(op, std::string(name) + " must have rank " + std::to_string(rank) +
                        ", got " + shape_str(t.shape()));
  }
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Elementwise unary op: `f` computes y from x, `df` computes dy/dx from (x, y).
template <typename F, typename DF>
Var unary(const char* op, Var x, F f, DF df) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (int64_t i = 0; i < xv.numel(); ++i) y[i] = f(xv[i]);
  BackwardFn bw;
  if (g.requires_grad(x)) {
    bw = [x, df, out = &g, id = static_cast<int>(g.size())](const Tensor& gout, GradSlots gin) {
      const Tensor& xv = x.value();
      const Tensor& yv = out->value(id);
      Tensor& gx = *gin[0];
      for (int64_t i = 0; i < xv.numel(); ++i) gx[i] += gout[i] * df(xv[i], yv[i]);
    };
  }
  return g.record(op, {x}, std::move(y), std::move(bw));
}

// [C,H,W] image -> [C*k*k, Ho*Wo] patch matrix.
void im2col(const double* x, int64_t C, int64_t H, int64_t W, int k, int s, int p, int64_t Ho,
            int64_t Wo, double* col) {
  const int64_t hw = Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * hw;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * s - p + ky;
          double* dst = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const double* src = x + (c * H + iy) * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * s - p + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int64_t C, int64_t H, int64_t W, int k, int s, int p, int64_t Ho,
            int64_t Wo, double* x) {
  const int64_t hw = Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * hw;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * s - p + ky;
          if (iy < 0 || iy >= H) continue;
          double* dst = x + (c * H + iy) * W;
          const double* src = row + oy * Wo;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * s - p + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---- Graph ------------------------------------------------------------------

const Tensor& Var::value() const {
  if (!graph_) fail(ErrorKind::kInvalidArgument, "use of an unbound Var");
  return graph_->value(id_);
}

void Graph::check_owner(Var v) const {
  if (v.graph() != this) fail(ErrorKind::kInvalidArgument, "Var belongs to a different graph");
}

Var Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(this, it->second);
  auto it = store.find(name);
  if (it == store.end()) fail(ErrorKind::kInvalidArgument, "unknown parameter '" + name + "'");
  Var v = input(it->second.value, it->second.trainable);
  nodes_.back().op = "param";
  param_ids_.emplace(name, v.id());
  return v;
}

Var Graph::record(const char* op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Node n;
  n.op = op;
  for (const Var& v : inputs) {
    check_owner(v);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[static_cast<size_t>(v.id())].requires_grad;
  }
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

bool Graph::requires_grad(Var v) const {
  check_owner(v);
  return nodes_[static_cast<size_t>(v.id())].requires_grad;
}

bool Graph::any_requires_grad(std::initializer_list<Var> vars) const {
  for (const Var& v : vars) {
    if (v.valid() && requires_grad(v)) return true;
  }
  return false;
}

void Graph::backward(Var loss) {
  check_owner(loss);
  if (loss.value().numel() != 1) {
    fail(ErrorKind::kShape, "backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  Node& root = nodes_[static_cast<size_t>(loss.id())];
  root.grad = Tensor(root.value.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.backward || n.grad.empty()) continue;
    slots.clear();
    for (int in : n.inputs) {
      Node& src = nodes_[static_cast<size_t>(in)];
      if (!src.requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (src.grad.empty()) src.grad = Tensor(src.value.shape(), 0.0);
      slots.push_back(&src.grad);
    }
    n.backward(n.grad, slots);
  }
}

Tensor Graph::grad(Var v) const {
  check_owner(v);
  const Node& n = nodes_[static_cast<size_t>(v.id())];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

GradMap Graph::param_grads() const {
  GradMap out;
  for (const auto& [name, id] : param_ids_) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) continue;
    out.emplace(name, n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad);
  }
  return out;
}

// ---- Convolution-style ops ----------------------------------------------------

Var conv2d(Var x, Var weight, std::optional<Var> bias, int stride, int pad) {
  constexpr const char* kOp = "conv2d";
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(kOp, xv, 4, "input");
  require_rank(kOp, wv, 4, "weight");
  const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t O = wv.dim(0);
  const int k = static_cast<int>(wv.dim(2));
  if (wv.dim(1) != C) {
    shape_error(kOp, "weight expects " + std::to_string(wv.dim(1)) + " input channels, input has " +
                         std::to_string(C));
  }
  if (wv.dim(3) != k) shape_error(kOp, "kernel must be square, got " + shape_str(wv.shape()));
  if (stride < 1 || pad < 0) shape_error(kOp, "invalid stride/pad");
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != O)) {
    shape_error(kOp, "bias shape " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(O) + " output channels");
  }
  const int64_t Ho = (H + 2 * pad - k) / stride + 1;
  const int64_t Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) shape_error(kOp, "kernel larger than padded input " + shape_str(xv.shape()));

  const int64_t ckk = C * k * k;
  const int64_t hw = Ho * Wo;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);
  const bool need_grad = g.any_requires_grad({x, weight}) || (bias && g.requires_grad(*bias));
  auto cols = std::make_shared<AlignedBuffer>();
  if (!pointwise) cols->resize(static_cast<size_t>((need_grad ? N : 1) * ckk * hw));

  Tensor y({N, O, Ho, Wo});
  ConstMatMap wm(wv.data().data(), O, ckk);
  for (int64_t n = 0; n < N; ++n) {
    const double* xin = xv.data().data() + n * C * H * W;
    const double* col = xin;
    if (!pointwise) {
      double* c = cols->data() + (need_grad ? n * ckk * hw : 0);
      im2col(xin, C, H, W, k, stride, pad, Ho, Wo, c);
      col = c;
    }
    MatMap ym(y.data().data() + n * O * hw, O, hw);
    ym.noalias() = wm * ConstMatMap(col, ckk, hw);
    if (bias) {
      const Tensor& bv = bias->value();
      for (int64_t o = 0; o < O; ++o) ym.row(o).array() += bv[o];
    }
  }

  BackwardFn bw;
  if (need_grad) {
    bw = [x, weight, cols, pointwise, N, C, H, W, O, k, stride, pad, Ho, Wo, ckk,
          hw](const Tensor& gout, GradSlots gin) {
      const Tensor& xv = x.value();
      const Tensor& wv = weight.value();
      ConstMatMap wm(wv.data().data(), O, ckk);
      AlignedBuffer gcol(pointwise ? 0 : static_cast<size_t>(ckk * hw));
      for (int64_t n = 0; n < N; ++n) {
        ConstMatMap go(gout.data().data() + n * O * hw, O, hw);
        const double* col = pointwise ? xv.data().data() + n * C * H * W : cols->data() + n * ckk * hw;
        if (gin[1]) {
          MatMap gw(gin[1]->data().data(), O, ckk);
          gw.noalias() += go * ConstMatMap(col, ckk, hw).transpose();
        }
        if (gin.size() > 2 && gin[2]) {
          Tensor& gb = *gin[2];
          for (int64_t o = 0; o < O; ++o) gb[o] += go.row(o).sum();
        }
        if (gin[0]) {
          double* gx = gin[0]->data().data() + n * C * H * W;
          if (pointwise) {
            MatMap(gx, ckk, hw).noalias() += wm.transpose() * go;
          } else {
            MatMap gc(gcol.data(), ckk, hw);
            gc.noalias() = wm.transpose() * go;
            col2im(gcol.data(), C, H, W, k, stride, pad, Ho, Wo, gx);
          }
        }
      }
    };
  }
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record(kOp, std::move(inputs), std::move(y), std::move(bw));
}

Var upsample_nearest(Var x, int factor) {
  constexpr const char* kOp = "upsample_nearest";
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  require_rank(kOp, xv, 4, "input");
  if (factor < 1) shape_error(kOp, "factor must be >= 1");
  const int64_t NC = xv.dim(0) * xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Ho = H * factor, Wo = W * factor;
  Tensor y({xv.dim(0), xv.dim(1), Ho, Wo});
  for (int64_t p = 0; p < NC; ++p) {
    for (int64_t oy = 0; oy < Ho; ++oy) {
      for (int64_t ox = 0; ox < Wo; ++ox) {
        y[(p * Ho + oy) * Wo + ox] = xv[(p * H + oy / factor) * W + ox / factor];
      }
    }
  }
  BackwardFn bw = [NC, H, W, Ho, Wo, factor](const Tensor& gout, GradSlots gin) {
    Tensor& gx = *gin[0];
    for (int64_t p = 0; p < NC; ++p) {
      for (int64_t oy = 0; oy < Ho; ++oy) {
        for (int64_t ox = 0; ox < Wo; ++ox) {
          gx[(p * H + oy / factor) * W + ox / factor] += gout[(p * Ho + oy) * Wo + ox];
        }
      }
    }
  };
  return g.record(kOp, {x}, std::move(y), std::move(bw));
}

Var avgpool2d(Var x, int kernel) {
  constexpr const char* kOp = "avgpool2d";
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  require_rank(kOp, xv, 4, "input");
  const int64_t H = xv.dim(2), W = xv.dim(3);
  if (kernel < 1 || H % kernel != 0 || W % kernel != 0) {
    shape_error(kOp, "kernel " + std::to_string(kernel) + " does not tile " + shape_str(xv.shape()));
  }
  const int64_t NC = xv.dim(0) * xv.dim(1), Ho = H / kernel, Wo = W / kernel;
  const double inv = 1.0 / (static_cast<double>(kernel) * kernel);
  Tensor y({xv.dim(0), xv.dim(1), Ho, Wo});
  for (int64_t p = 0; p < NC; ++p) {
    for (int64_t iy = 0; iy < H; ++iy) {
      for (int64_t ix = 0; ix < W; ++ix) {
        y[(p * Ho + iy / kernel) * Wo + ix / kernel] += xv[(p * H + iy) * W + ix] * inv;
      }
    }
  }
  BackwardFn bw = [NC, H, W, Ho, Wo, kernel, inv](const Tensor& gout, GradSlots gin) {
    Tensor& gx = *gin[0];
    for (int64_t p = 0; p < NC; ++p) {
      for (int64_t iy = 0; iy < H; ++iy) {
        for (int64_t ix = 0; ix < W; ++ix) {
          gx[(p * H + iy) * W + ix] += gout[(p * Ho + iy / kernel) * Wo + ix / kernel] * inv;
        }
      }
    }
  };
  return g.record(kOp, {x}, std::move(y), std::move(bw));
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  constexpr const char* kOp = "linear";
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(kOp, xv, 2, "input");
  require_rank(kOp, wv, 2, "weight");
  const int64_t N = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  if (wv.dim(1) != in) {
    shape_error(kOp, "weight " + shape_str(wv.shape()) + " incompatible with input " +
                         shape_str(xv.shape()));
  }
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != out)) {
    shape_error(kOp, "bias shape " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(out) + " outputs");
  }
  Tensor y({N, out});
  MatMap ym(y.data().data(), N, out);
  ym.noalias() = ConstMatMap(xv.data().data(), N, in) * ConstMatMap(wv.data().data(), out, in).transpose();
  if (bias) {
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t o = 0; o < out; ++o) ym(n, o) += bias->value()[o];
    }
  }
  BackwardFn bw = [x, weight, N, in, out](const Tensor& gout, GradSlots gin) {
    ConstMatMap go(gout.data().data(), N, out);
    if (gin[0]) {
      MatMap(gin[0]->data().data(), N, in).noalias() +=
          go * ConstMatMap(weight.value().data().data(), out, in);
    }
    if (gin[1]) {
      MatMap(gin[1]->data().data(), out, in).noalias() +=
          go.transpose() * ConstMatMap(x.value().data().data(), N, in);
    }
    if (gin.size() > 2 && gin[2]) {
      Tensor& gb = *gin[2];
      for (int64_t o = 0; o < out; ++o) gb[o] += go.col(o).sum();
    }
  };
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record(kOp, std::move(inputs), std::move(y), std::move(bw));
}

// ---- Elementwise --------------------------------------------------------------

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var abs(Var x) {
  return unary("abs", x, [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0)) fail(ErrorKind::kNumeric, "log: non-positive input " + std::to_string(v));
  }
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Var x) {
  return unary("softplus", x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] + bv[i];
  BackwardFn bw = [](const Tensor& gout, GradSlots gin) {
    for (Tensor* gi : gin) {
      if (!gi) continue;
      for (int64_t i = 0; i < gout.numel(); ++i) (*gi)[i] += gout[i];
    }
  };
  return a.graph()->record("add", {a, b}, std::move(y), std::move(bw));
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] - bv[i];
  BackwardFn bw = [](const Tensor& gout, GradSlots gin) {
    if (gin[0]) {
      for (int64_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += gout[i];
    }
    if (gin[1]) {
      for (int64_t i = 0; i < gout.numel(); ++i) (*gin[1])[i] -= gout[i];
    }
  };
  return a.graph()->record("sub", {a, b}, std::move(y), std::move(bw));
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  BackwardFn bw = [a, b](const Tensor& gout, GradSlots gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (gin[0]) {
      for (int64_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += gout[i] * bv[i];
    }
    if (gin[1]) {
      for (int64_t i = 0; i < gout.numel(); ++i) (*gin[1])[i] += gout[i] * av[i];
    }
  };
  return a.graph()->record("mul", {a, b}, std::move(y), std::move(bw));
}

Var div(Var a, Var b) {
  require_same_shape("div", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (int64_t i = 0; i < y.numel(); ++i) {
    if (bv[i] == 0.0) fail(ErrorKind::kNumeric, "div: division by zero");
    y[i] = av[i] / bv[i];
  }
  BackwardFn bw = [a, b](const Tensor& gout, GradSlots gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (gin[0]) {
      for (int64_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += gout[i] / bv[i];
    }
    if (gin[1]) {
      for (int64_t i = 0; i < gout.numel(); ++i) (*gin[1])[i] -= gout[i] * av[i] / (bv[i] * bv[i]);
    }
  };
  return a.graph()->record("div", {a, b}, std::move(y), std::move(bw));
}

Var add_scalar(Var x, double s) {
  return unary("add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(Var x, double s) {
  return unary("mul_scalar", x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

// ---- Shape and reductions ---------------------------------------------------

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  BackwardFn bw = [](const Tensor& gout, GradSlots gin) {
    for (int64_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += gout[i];
  };
  return x.graph()->record("reshape", {x}, std::move(y), std::move(bw));
}

Var sum(Var x) {
  double s = 0;
  for (double v : x.value().data()) s += v;
  BackwardFn bw = [](const Tensor& gout, GradSlots gin) {
    const double gv = gout[0];
    for (double& v : gin[0]->data()) v += gv;
  };
  return x.graph()->record("sum", {x}, Tensor::scalar(s), std::move(bw));
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().numel());
  double s = 0;
  for (double v : x.value().data()) s += v;
  BackwardFn bw = [n](const Tensor& gout, GradSlots gin) {
    const double gv = gout[0] / n;
    for (double& v : gin[0]->data()) v += gv;
  };
  return x.graph()->record("mean", {x}, Tensor::scalar(s / n), std::move(bw));
}

namespace {

// Row-wise log-softmax of a [N, K] buffer.
void log_softmax_rows(const Tensor& in, Tensor& out) {
  const int64_t N = in.dim(0), K = in.dim(1);
  for (int64_t n = 0; n < N; ++n) {
    double m = in[n * K];
    for (int64_t k = 1; k < K; ++k) m = std::max(m, in[n * K + k]);
    double z = 0;
    for (int64_t k = 0; k < K; ++k) z += std::exp(in[n * K + k] - m);
    const double lse = m + std::log(z);
    for (int64_t k = 0; k < K; ++k) out[n * K + k] = in[n * K + k] - lse;
  }
}

}  // namespace

Var softmax(Var logits) {
  require_rank("softmax", logits.value(), 2, "logits");
  Tensor y(logits.shape());
  log_softmax_rows(logits.value(), y);
  for (double& v : y.data()) v = std::exp(v);
  Graph& g = *logits.graph();
  BackwardFn bw = [out = &g, id = static_cast<int>(g.size())](const Tensor& gout, GradSlots gin) {
    const Tensor& p = out->value(id);
    const int64_t N = p.dim(0), K = p.dim(1);
    for (int64_t n = 0; n < N; ++n) {
      double dot = 0;
      for (int64_t k = 0; k < K; ++k) dot += gout[n * K + k] * p[n * K + k];
      for (int64_t k = 0; k < K; ++k) (*gin[0])[n * K + k] += p[n * K + k] * (gout[n * K + k] - dot);
    }
  };
  return g.record("softmax", {logits}, std::move(y), std::move(bw));
}

Var log_softmax(Var logits) {
  require_rank("log_softmax", logits.value(), 2, "logits");
  Tensor y(logits.shape());
  log_softmax_rows(logits.value(), y);
  Graph& g = *logits.graph();
  BackwardFn bw = [out = &g, id = static_cast<int>(g.size())](const Tensor& gout, GradSlots gin) {
    const Tensor& ls = out->value(id);
    const int64_t N = ls.dim(0), K = ls.dim(1);
    for (int64_t n = 0; n < N; ++n) {
      double gs = 0;
      for (int64_t k = 0; k < K; ++k) gs += gout[n * K + k];
      for (int64_t k = 0; k < K; ++k) {
        (*gin[0])[n * K + k] += gout[n * K + k] - std::exp(ls[n * K + k]) * gs;
      }
    }
  };
  return g.record("log_softmax", {logits}, std::move(y), std::move(bw));
}

Var squared_error(Var a, Var b) {
  require_same_shape("squared_error", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0;
  for (int64_t i = 0; i < av.numel(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  BackwardFn bw = [a, b](const Tensor& gout, GradSlots gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const double gv = 2.0 * gout[0];
    for (int64_t i = 0; i < av.numel(); ++i) {
      const double d = gv * (av[i] - bv[i]);
      if (gin[0]) (*gin[0])[i] += d;
      if (gin[1]) (*gin[1])[i] -= d;
    }
  };
  return a.graph()->record("squared_error", {a, b}, Tensor::scalar(s), std::move(bw));
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  constexpr const char* kOp = "cross_entropy";
  const Tensor& lv = logits.value();
  require_rank(kOp, lv, 2, "logits");
  const int64_t N = lv.dim(0), K = lv.dim(1);
  if (static_cast<int64_t>(labels.size()) != N) {
    shape_error(kOp, std::to_string(labels.size()) + " labels for " + std::to_string(N) + " rows");
  }
  Tensor ls(lv.shape());
  log_softmax_rows(lv, ls);
  double loss = 0;
  for (int64_t n = 0; n < N; ++n) {
    const int y = labels[static_cast<size_t>(n)];
    if (y < 0 || y >= K) fail(ErrorKind::kInvalidArgument, "cross_entropy: label out of range");
    loss -= ls[n * K + y];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  BackwardFn bw = [ls = std::move(ls), lab = std::move(lab), N, K](const Tensor& gout,
                                                                    GradSlots gin) {
    const double scale = gout[0] / static_cast<double>(N);
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t k = 0; k < K; ++k) {
        const double onehot = (k == lab[static_cast<size_t>(n)]) ? 1.0 : 0.0;
        (*gin[0])[n * K + k] += scale * (std::exp(ls[n * K + k]) - onehot);
      }
    }
  };
  return logits.graph()->record(kOp, {logits}, Tensor::scalar(loss / static_cast<double>(N)),
                                std::move(bw));
}

Var kl_divergence(Var p_logits, Var q_logits) {
  constexpr const char* kOp = "kl_divergence";
  require_rank(kOp, p_logits.value(), 2, "p_logits");
  require_same_shape(kOp, p_logits.value(), q_logits.value());
  const int64_t N = p_logits.value().dim(0), K = p_logits.value().dim(1);
  Tensor lp(p_logits.shape()), lq(q_logits.shape());
  log_softmax_rows(p_logits.value(), lp);
  log_softmax_rows(q_logits.value(), lq);
  std::vector<double> row_kl(static_cast<size_t>(N), 0.0);
  double total = 0;
  for (int64_t n = 0; n < N; ++n) {
    double kl = 0;
    for (int64_t k = 0; k < K; ++k) {
      const int64_t i = n * K + k;
      kl += std::exp(lp[i]) * (lp[i] - lq[i]);
    }
    row_kl[static_cast<size_t>(n)] = kl;
    total += kl;
  }
  BackwardFn bw = [lp = std::move(lp), lq = std::move(lq), row_kl = std::move(row_kl), N,
                   K](const Tensor& gout, GradSlots gin) {
    const double scale = gout[0] / static_cast<double>(N);
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t k = 0; k < K; ++k) {
        const int64_t i = n * K + k;
        const double p = std::exp(lp[i]);
        if (gin[0]) (*gin[0])[i] += scale * p * (lp[i] - lq[i] - row_kl[static_cast<size_t>(n)]);
        if (gin[1]) (*gin[1])[i] += scale * (std::exp(lq[i]) - p);
      }
    }
  };
  return p_logits.graph()->record(kOp, {p_logits, q_logits},
                                  Tensor::scalar(total / static_cast<double>(N)), std::move(bw));
}

}  // namespace esplit::ad
