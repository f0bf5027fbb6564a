#include "iqbench/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <string>

#include "iqbench/error.hpp"

namespace iqbench {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_tape_serial{1};

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  fail(ErrorCode::kShapeMismatch, std::string(op) + ": " + detail);
}

void accumulate(std::vector<double>* dst, const std::vector<double>& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

}  // namespace

// --- BackwardContext -------------------------------------------------------

const std::vector<double>& BackwardContext::out_grad() const {
  return tape_.nodes_[node_].grad;
}

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}

std::vector<double>* BackwardContext::input_grad(std::size_t i) {
  auto& in = tape_.nodes_[tape_.nodes_[node_].inputs.at(i)];
  if (!in.needs_grad) return nullptr;
  if (in.grad.empty()) in.grad.assign(in.value.numel(), 0.0);
  return &in.grad;
}

// --- Tape ------------------------------------------------------------------

Tape::Tape() : serial_(g_tape_serial.fetch_add(1)) {}

std::size_t Tape::check(Var v) const {
  require(v.tape_ == serial_ && v.id_ < nodes_.size(), ErrorCode::kInvalidArgument,
          "variable does not belong to this tape");
  return v.id_;
}

Var Tape::constant(Tensor value) {
  require(!consumed_, ErrorCode::kInvalidArgument, "tape already consumed by backward()");
  Node n;
  n.value = std::move(value);
  n.value.requires_grad = false;
  n.value.grad.clear();
  nodes_.push_back(std::move(n));
  return Var(serial_, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& param) {
  require(!consumed_, ErrorCode::kInvalidArgument, "tape already consumed by backward()");
  Node n;
  n.value = Tensor(param.shape, param.data);
  n.param = &param;
  n.needs_grad = param.requires_grad;
  nodes_.push_back(std::move(n));
  return Var(serial_, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return nodes_[check(v)].value; }

const std::vector<double>& Tape::grad(Var v) const { return nodes_[check(v)].grad; }

bool Tape::needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  require(!consumed_, ErrorCode::kInvalidArgument, "tape already consumed by backward()");
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto id = check(in);
    n.inputs.push_back(id);
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(serial_, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  require(!consumed_, ErrorCode::kInvalidArgument,
          "broken tape: backward() already ran on this tape");
  auto root = check(loss);
  require(nodes_[root].value.numel() == 1, ErrorCode::kShapeMismatch,
          "backward: loss must be scalar, got " + shape_str(nodes_[root].value.shape));
  consumed_ = true;
  if (!nodes_[root].needs_grad) {
    return;
  }
  nodes_[root].grad.assign(1, 1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) {
      BackwardContext ctx(*this, i);
      n.backward(ctx);
    }
    if (n.param != nullptr) {
      auto& p = *n.param;
      if (p.grad.size() != p.data.size()) p.grad.assign(p.data.size(), 0.0);
      for (std::size_t j = 0; j < n.grad.size(); ++j) p.grad[j] += n.grad[j];
    }
  }
}

// --- ops -------------------------------------------------------------------

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRelu: return "relu";
    case OpKind::kLinear: return "linear";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kL2Normalize: return "l2_normalize";
    case OpKind::kInfoNce: return "info_nce";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

Var add(Tape& tape, Var a, Var b) {
  const auto& ta = tape.value(a);
  const auto& tb = tape.value(b);
  if (ta.shape != tb.shape) {
    shape_error("add", shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  return tape.record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    accumulate(ctx.input_grad(0), ctx.out_grad());
    accumulate(ctx.input_grad(1), ctx.out_grad());
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const auto& ta = tape.value(a);
  const auto& tb = tape.value(b);
  if (ta.shape != tb.shape) {
    shape_error("mul", shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  return tape.record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto& g = ctx.out_grad();
    const auto& va = ctx.input(0).data;
    const auto& vb = ctx.input(1).data;
    if (auto* ga = ctx.input_grad(0)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * vb[i];
    }
    if (auto* gb = ctx.input_grad(1)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * va[i];
    }
  });
}

Var scale(Tape& tape, Var a, double s) {
  const auto& ta = tape.value(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = s * ta.data[i];
  return tape.record(std::move(out), {a}, [s](BackwardContext& ctx) {
    auto* ga = ctx.input_grad(0);
    const auto& g = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

Var sum(Tape& tape, Var a) {
  const auto& ta = tape.value(a);
  double total = 0.0;
  for (double v : ta.data) total += v;
  return tape.record(Tensor::scalar(total), {a}, [](BackwardContext& ctx) {
    auto* ga = ctx.input_grad(0);
    const double g = ctx.out_grad()[0];
    for (auto& v : *ga) v += g;
  });
}

Var mean(Tape& tape, Var a) {
  const auto n = static_cast<double>(tape.value(a).numel());
  return scale(tape, sum(tape, a), 1.0 / n);
}

Var relu(Tape& tape, Var a) {
  const auto& ta = tape.value(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] > 0.0 || std::isnan(ta.data[i]) ? ta.data[i] : 0.0;
  return tape.record(std::move(out), {a}, [](BackwardContext& ctx) {
    auto* ga = ctx.input_grad(0);
    const auto& g = ctx.out_grad();
    const auto& x = ctx.input(0).data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) (*ga)[i] += g[i];
    }
  });
}

Var linear(Tape& tape, Var x, Var w, std::optional<Var> b) {
  const auto& tx = tape.value(x);
  const auto& tw = tape.value(w);
  if (tx.rank() != 2 || tw.rank() != 2 || tx.shape[1] != tw.shape[1]) {
    shape_error("linear", "x " + shape_str(tx.shape) + " incompatible with weight " +
                              shape_str(tw.shape));
  }
  const auto batch = tx.shape[0];
  const auto in = tx.shape[1];
  const auto out_dim = tw.shape[0];
  if (b) {
    const auto& tb = tape.value(*b);
    if (tb.numel() != out_dim) {
      shape_error("linear", "bias " + shape_str(tb.shape) + " for " +
                                std::to_string(out_dim) + " outputs");
    }
  }
  Tensor out({batch, out_dim});
  MatMap y(out.data.data(), batch, out_dim);
  y.noalias() = ConstMatMap(tx.data.data(), batch, in) *
                ConstMatMap(tw.data.data(), out_dim, in).transpose();
  if (b) {
    const auto& tb = tape.value(*b);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < out_dim; ++c) y(r, c) += tb.data[c];
  }
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  const bool has_bias = b.has_value();
  return tape.record(std::move(out), std::move(inputs),
                     [batch, in, out_dim, has_bias](BackwardContext& ctx) {
    ConstMatMap g(ctx.out_grad().data(), batch, out_dim);
    if (auto* gx = ctx.input_grad(0)) {
      MatMap(gx->data(), batch, in).noalias() +=
          g * ConstMatMap(ctx.input(1).data.data(), out_dim, in);
    }
    if (auto* gw = ctx.input_grad(1)) {
      MatMap(gw->data(), out_dim, in).noalias() +=
          g.transpose() * ConstMatMap(ctx.input(0).data.data(), batch, in);
    }
    if (has_bias) {
      if (auto* gb = ctx.input_grad(2)) {
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t c = 0; c < out_dim; ++c) (*gb)[c] += g(r, c);
      }
    }
  });
}

Var matmul(Tape& tape, Var a, Var b, bool transpose_b) {
  const auto& ta = tape.value(a);
  const auto& tb = tape.value(b);
  if (ta.rank() != 2 || tb.rank() != 2) {
    shape_error("matmul", "operands must be 2-D, got " + shape_str(ta.shape) + " and " +
                              shape_str(tb.shape));
  }
  const auto m = ta.shape[0];
  const auto k = ta.shape[1];
  const auto kb = transpose_b ? tb.shape[1] : tb.shape[0];
  const auto n = transpose_b ? tb.shape[0] : tb.shape[1];
  if (k != kb) {
    shape_error("matmul", shape_str(ta.shape) + " x " + shape_str(tb.shape) +
                              (transpose_b ? "^T" : ""));
  }
  Tensor out({m, n});
  ConstMatMap A(ta.data.data(), m, k);
  MatMap C(out.data.data(), m, n);
  if (transpose_b) {
    C.noalias() = A * ConstMatMap(tb.data.data(), n, k).transpose();
  } else {
    C.noalias() = A * ConstMatMap(tb.data.data(), k, n);
  }
  return tape.record(std::move(out), {a, b}, [m, k, n, transpose_b](BackwardContext& ctx) {
    ConstMatMap G(ctx.out_grad().data(), m, n);
    ConstMatMap A(ctx.input(0).data.data(), m, k);
    if (transpose_b) {
      ConstMatMap B(ctx.input(1).data.data(), n, k);
      if (auto* ga = ctx.input_grad(0)) MatMap(ga->data(), m, k).noalias() += G * B;
      if (auto* gb = ctx.input_grad(1)) MatMap(gb->data(), n, k).noalias() += G.transpose() * A;
    } else {
      ConstMatMap B(ctx.input(1).data.data(), k, n);
      if (auto* ga = ctx.input_grad(0)) MatMap(ga->data(), m, k).noalias() += G * B.transpose();
      if (auto* gb = ctx.input_grad(1)) MatMap(gb->data(), k, n).noalias() += A.transpose() * G;
    }
  });
}

Var reshape(Tape& tape, Var a, Shape shape) {
  const auto& ta = tape.value(a);
  if (shape_numel(shape) != ta.numel()) {
    shape_error("reshape", shape_str(ta.shape) + " -> " + shape_str(shape));
  }
  Tensor out(std::move(shape), ta.data);
  return tape.record(std::move(out), {a}, [](BackwardContext& ctx) {
    accumulate(ctx.input_grad(0), ctx.out_grad());
  });
}

namespace {

struct ConvDims {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw;
  std::size_t out_h, out_w;
  Conv2dGeometry geom;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return batch * out_h * out_w; }
};

// cols[(c*kh + i)*kw + j, (b*out_h + oh)*out_w + ow]
void im2col(const ConvDims& d, const double* x, double* cols) {
  const auto npos = d.positions();
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        double* row = cols + ((c * d.kh + i) * d.kw + j) * npos;
        for (std::size_t b = 0; b < d.batch; ++b) {
          const double* plane = x + (b * d.channels + c) * d.height * d.width;
          for (std::size_t oh = 0; oh < d.out_h; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * d.geom.stride_h + i) -
                            static_cast<std::ptrdiff_t>(d.geom.pad_h);
            double* dst = row + (b * d.out_h + oh) * d.out_w;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.height)) {
              std::fill(dst, dst + d.out_w, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(ih) * d.width;
            for (std::size_t ow = 0; ow < d.out_w; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * d.geom.stride_w + j) -
                              static_cast<std::ptrdiff_t>(d.geom.pad_w);
              dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(d.width))
                            ? 0.0
                            : src[iw];
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvDims& d, const double* cols, double* dx) {
  const auto npos = d.positions();
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        const double* row = cols + ((c * d.kh + i) * d.kw + j) * npos;
        for (std::size_t b = 0; b < d.batch; ++b) {
          double* plane = dx + (b * d.channels + c) * d.height * d.width;
          for (std::size_t oh = 0; oh < d.out_h; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * d.geom.stride_h + i) -
                            static_cast<std::ptrdiff_t>(d.geom.pad_h);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.height)) continue;
            const double* src = row + (b * d.out_h + oh) * d.out_w;
            double* dst = plane + static_cast<std::size_t>(ih) * d.width;
            for (std::size_t ow = 0; ow < d.out_w; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * d.geom.stride_w + j) -
                              static_cast<std::ptrdiff_t>(d.geom.pad_w);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(d.width)) dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Tape& tape, Var x, Var w, std::optional<Var> b, const Conv2dGeometry& geom) {
  const auto& tx = tape.value(x);
  const auto& tw = tape.value(w);
  if (tx.rank() != 4 || tw.rank() != 4 || tx.shape[1] != tw.shape[1]) {
    shape_error("conv2d", "input " + shape_str(tx.shape) + " incompatible with weight " +
                              shape_str(tw.shape));
  }
  if (geom.stride_h == 0 || geom.stride_w == 0) shape_error("conv2d", "stride must be positive");
  ConvDims d{};
  d.batch = tx.shape[0];
  d.channels = tx.shape[1];
  d.height = tx.shape[2];
  d.width = tx.shape[3];
  d.out_channels = tw.shape[0];
  d.kh = tw.shape[2];
  d.kw = tw.shape[3];
  d.geom = geom;
  const auto padded_h = d.height + 2 * geom.pad_h;
  const auto padded_w = d.width + 2 * geom.pad_w;
  if (padded_h < d.kh || padded_w < d.kw) {
    shape_error("conv2d", "kernel " + shape_str(tw.shape) + " larger than padded input " +
                              shape_str(tx.shape));
  }
  d.out_h = (padded_h - d.kh) / geom.stride_h + 1;
  d.out_w = (padded_w - d.kw) / geom.stride_w + 1;
  if (b && tape.value(*b).numel() != d.out_channels) {
    shape_error("conv2d", "bias " + shape_str(tape.value(*b).shape) + " for " +
                              std::to_string(d.out_channels) + " output channels");
  }

  auto cols = std::make_shared<std::vector<double>>(d.patch() * d.positions());
  im2col(d, tx.data.data(), cols->data());

  RowMat prod(d.out_channels, d.positions());
  prod.noalias() = ConstMatMap(tw.data.data(), d.out_channels, d.patch()) *
                   ConstMatMap(cols->data(), d.patch(), d.positions());

  Tensor out({d.batch, d.out_channels, d.out_h, d.out_w});
  const auto plane = d.out_h * d.out_w;
  const double* bias = b ? tape.value(*b).data.data() : nullptr;
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      const double* src = prod.data() + o * d.positions() + bi * plane;
      double* dst = out.data.data() + (bi * d.out_channels + o) * plane;
      const double bv = bias ? bias[o] : 0.0;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + bv;
    }
  }

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  const bool has_bias = b.has_value();
  return tape.record(std::move(out), std::move(inputs), [d, cols, has_bias](BackwardContext& ctx) {
    const auto plane = d.out_h * d.out_w;
    const auto& g = ctx.out_grad();
    RowMat gmat(d.out_channels, d.positions());
    for (std::size_t bi = 0; bi < d.batch; ++bi) {
      for (std::size_t o = 0; o < d.out_channels; ++o) {
        const double* src = g.data() + (bi * d.out_channels + o) * plane;
        double* dst = gmat.data() + o * d.positions() + bi * plane;
        std::copy(src, src + plane, dst);
      }
    }
    if (auto* gw = ctx.input_grad(1)) {
      MatMap(gw->data(), d.out_channels, d.patch()).noalias() +=
          gmat * ConstMatMap(cols->data(), d.patch(), d.positions()).transpose();
    }
    if (has_bias) {
      if (auto* gb = ctx.input_grad(2)) {
        for (std::size_t o = 0; o < d.out_channels; ++o) (*gb)[o] += gmat.row(o).sum();
      }
    }
    if (auto* gx = ctx.input_grad(0)) {
      RowMat dcols(d.patch(), d.positions());
      dcols.noalias() =
          ConstMatMap(ctx.input(1).data.data(), d.out_channels, d.patch()).transpose() * gmat;
      col2im(d, dcols.data(), gx->data());
    }
  });
}

Var global_avg_pool(Tape& tape, Var x) {
  const auto& tx = tape.value(x);
  if (tx.rank() != 4) shape_error("global_avg_pool", "expected 4-D input, got " + shape_str(tx.shape));
  const auto batch = tx.shape[0];
  const auto channels = tx.shape[1];
  const auto plane = tx.shape[2] * tx.shape[3];
  Tensor out({batch, channels});
  for (std::size_t i = 0; i < batch * channels; ++i) {
    double acc = 0.0;
    const double* src = tx.data.data() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) acc += src[p];
    out.data[i] = acc / static_cast<double>(plane);
  }
  return tape.record(std::move(out), {x}, [batch, channels, plane](BackwardContext& ctx) {
    auto* gx = ctx.input_grad(0);
    const auto& g = ctx.out_grad();
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < batch * channels; ++i) {
      double* dst = gx->data() + i * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] += g[i] * inv;
    }
  });
}

Var l2_normalize(Tape& tape, Var x, double eps) {
  const auto& tx = tape.value(x);
  if (tx.rank() != 2) shape_error("l2_normalize", "expected 2-D input, got " + shape_str(tx.shape));
  const auto rows = tx.shape[0];
  const auto cols = tx.shape[1];
  Tensor out(tx.shape);
  std::vector<double> denom(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += tx.data[r * cols + c] * tx.data[r * cols + c];
    denom[r] = std::max(std::sqrt(ss), eps);
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = tx.data[r * cols + c] / denom[r];
  }
  return tape.record(std::move(out), {x}, [rows, cols, eps, denom](BackwardContext& ctx) {
    auto* gx = ctx.input_grad(0);
    const auto& g = ctx.out_grad();
    const auto& y = ctx.output().data;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = g.data() + r * cols;
      const double* yr = y.data() + r * cols;
      double* dst = gx->data() + r * cols;
      if (denom[r] > eps) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
        for (std::size_t c = 0; c < cols; ++c) dst[c] += (gr[c] - yr[c] * dot) / denom[r];
      } else {
        for (std::size_t c = 0; c < cols; ++c) dst[c] += gr[c] / eps;
      }
    }
  });
}

Var info_nce(Tape& tape, Var sim, double temperature) {
  const auto& ts = tape.value(sim);
  if (ts.rank() != 2 || ts.shape[0] != ts.shape[1]) {
    shape_error("info_nce", "similarity matrix must be square, got " + shape_str(ts.shape));
  }
  const auto n = ts.shape[0];
  require(n >= 2 && n % 2 == 0, ErrorCode::kInvalidArgument,
          "info_nce: need an even number (>= 2) of views, got " + std::to_string(n));
  require(temperature > 0.0 && std::isfinite(temperature), ErrorCode::kInvalidArgument,
          "info_nce: temperature must be positive");

  // Row-wise softmax over k != i, kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = ts.data.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) mx = std::max(mx, row[k] / temperature);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double e = std::exp(row[k] / temperature - mx);
      (*probs)[i * n + k] = e;
      z += e;
    }
    for (std::size_t k = 0; k < n; ++k) (*probs)[i * n + k] /= z;
    const std::size_t pos = i ^ 1U;
    total += -(row[pos] / temperature - mx - std::log(z));
  }
  const double loss = total / static_cast<double>(n);
  return tape.record(Tensor::scalar(loss), {sim}, [n, temperature, probs](BackwardContext& ctx) {
    auto* gs = ctx.input_grad(0);
    const double g = ctx.out_grad()[0] / (static_cast<double>(n) * temperature);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pos = i ^ 1U;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i) continue;
        const double target = k == pos ? 1.0 : 0.0;
        (*gs)[i * n + k] += g * ((*probs)[i * n + k] - target);
      }
    }
  });
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
  const auto& tl = tape.value(logits);
  if (tl.rank() != 2 || tl.shape[0] != labels.size()) {
    shape_error("softmax_cross_entropy", "logits " + shape_str(tl.shape) + " with " +
                                             std::to_string(labels.size()) + " labels");
  }
  const auto batch = tl.shape[0];
  const auto classes = tl.shape[1];
  auto probs = std::make_shared<std::vector<double>>(batch * classes);
  std::vector<int> targets(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const int y = targets[r];
    require(y >= 0 && static_cast<std::size_t>(y) < classes, ErrorCode::kInvalidArgument,
            "softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                std::to_string(classes) + ")");
    const double* row = tl.data.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      (*probs)[r * classes + c] = std::exp(row[c] - mx);
      z += (*probs)[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) (*probs)[r * classes + c] /= z;
    total += -(row[y] - mx - std::log(z));
  }
  return tape.record(Tensor::scalar(total / static_cast<double>(batch)), {logits},
                     [batch, classes, probs, targets](BackwardContext& ctx) {
    auto* gl = ctx.input_grad(0);
    const double g = ctx.out_grad()[0] / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double target = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
        (*gl)[r * classes + c] += g * ((*probs)[r * classes + c] - target);
      }
    }
  });
}

Var forward_op(Tape& tape, OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (inputs.size() < lo || inputs.size() > hi) {
      shape_error(op_name(kind), "expected " + std::to_string(lo) +
                                     (lo == hi ? "" : "-" + std::to_string(hi)) +
                                     " inputs, got " + std::to_string(inputs.size()));
    }
  };
  auto bias = [&](std::size_t idx) -> std::optional<Var> {
    return inputs.size() > idx ? std::optional<Var>(inputs[idx]) : std::nullopt;
  };
  switch (kind) {
    case OpKind::kAdd: need(2, 2); return add(tape, inputs[0], inputs[1]);
    case OpKind::kMul: need(2, 2); return mul(tape, inputs[0], inputs[1]);
    case OpKind::kScale: need(1, 1); return scale(tape, inputs[0], attrs.scalar);
    case OpKind::kSum: need(1, 1); return sum(tape, inputs[0]);
    case OpKind::kMean: need(1, 1); return mean(tape, inputs[0]);
    case OpKind::kRelu: need(1, 1); return relu(tape, inputs[0]);
    case OpKind::kLinear: need(2, 3); return linear(tape, inputs[0], inputs[1], bias(2));
    case OpKind::kMatMul: need(2, 2); return matmul(tape, inputs[0], inputs[1], attrs.transpose_b);
    case OpKind::kReshape: need(1, 1); return reshape(tape, inputs[0], attrs.shape);
    case OpKind::kConv2d: need(2, 3); return conv2d(tape, inputs[0], inputs[1], bias(2), attrs.conv);
    case OpKind::kGlobalAvgPool: need(1, 1); return global_avg_pool(tape, inputs[0]);
    case OpKind::kL2Normalize: need(1, 1); return l2_normalize(tape, inputs[0], attrs.eps);
    case OpKind::kInfoNce: need(1, 1); return info_nce(tape, inputs[0], attrs.scalar);
    case OpKind::kSoftmaxCrossEntropy:
      need(1, 1);
      return softmax_cross_entropy(tape, inputs[0], attrs.labels);
  }
  fail(ErrorCode::kInvalidArgument, "unknown op kind");
}

}  // namespace iqbench
