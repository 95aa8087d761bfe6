#include "ppg2abp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ppg2abp/errors.hpp"
#include "ppg2abp/kernels.hpp"

namespace ppg2abp::ad {

namespace {

enum OpCode : int {
  kParam,
  kConst,
  kConv,
  kConvT,
  kInstNorm,
  kRelu,
  kLeakyRelu,
  kTanh,
  kSigmoid,
  kAdd,
  kSub,
  kAffine,
  kAbs,
  kLog,
  kClamp,
  kSquare,
  kMean,
  kSum,
};

int reflect_index(int q, int len) {
  if (q < 0) return -q;
  if (q >= len) return 2 * len - 2 - q;
  return q;
}

// [batch, ch, len] -> [batch, ch, len + 2*pad], zeros or reflection.
std::vector<double> pad_rows(const double* x, int batch, int ch, int len, int pad,
                             bool reflect) {
  const int lp = len + 2 * pad;
  std::vector<double> out(static_cast<std::size_t>(batch) * ch * lp, 0.0);
  for (int r = 0; r < batch * ch; ++r) {
    const double* src = x + static_cast<std::size_t>(r) * len;
    double* dst = out.data() + static_cast<std::size_t>(r) * lp;
    if (reflect) {
      for (int i = 0; i < lp; ++i) dst[i] = src[reflect_index(i - pad, len)];
    } else {
      std::copy(src, src + len, dst + pad);
    }
  }
  return out;
}

// Adjoint of pad_rows: folds padded-layout gradients back onto the source.
void unpad_accumulate(const double* gp, int batch, int ch, int len, int pad,
                      bool reflect, double* gx) {
  const int lp = len + 2 * pad;
  for (int r = 0; r < batch * ch; ++r) {
    const double* src = gp + static_cast<std::size_t>(r) * lp;
    double* dst = gx + static_cast<std::size_t>(r) * len;
    if (reflect) {
      for (int i = 0; i < lp; ++i) dst[reflect_index(i - pad, len)] += src[i];
    } else {
      for (int i = 0; i < len; ++i) dst[i] += src[pad + i];
    }
  }
}

void check_conv_attrs(const ConvAttrs& a, bool transposed) {
  if (a.stride < 1) throw ArgumentError("stride must be positive");
  if (a.padding < 0) throw ArgumentError("padding must be non-negative");
  if (!transposed && a.output_padding != 0)
    throw ArgumentError("output_padding only applies to transposed convolution");
  if (transposed) {
    if (a.output_padding < 0 || a.output_padding >= a.stride)
      throw ArgumentError("output_padding must lie in [0, stride)");
    if (a.reflect)
      throw ArgumentError("reflection padding is not defined for transposed convolution");
  }
}

}  // namespace

int numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape s, double fill, bool rg) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(numel(shape)), fill);
  set_requires_grad(rg);
}

Tensor Tensor::from(Shape s, std::vector<double> values, bool rg) {
  Tensor t;
  t.shape = std::move(s);
  if (static_cast<int>(values.size()) != numel(t.shape))
    throw ShapeError("value count does not match tensor shape");
  t.data = std::move(values);
  t.set_requires_grad(rg);
  return t;
}

void Tensor::set_requires_grad(bool rg) {
  requires_grad = rg;
  if (rg)
    grad.assign(data.size(), 0.0);
  else
    grad.clear();
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0);
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_id(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw ArgumentError("unknown graph node id");
}

const Tensor& Graph::tensor_of(const Node& n) const {
  return n.bound != nullptr ? *n.bound : n.out;
}

const Tensor& Graph::value(int id) const {
  check_id(id);
  return tensor_of(nodes_[id]);
}

double Graph::scalar(int id) const {
  const Tensor& t = value(id);
  if (t.size() != 1) throw ShapeError("scalar() requires a single-element tensor");
  return t.data[0];
}

std::vector<double>& Graph::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.bound != nullptr) {
    if (n.bound->grad.size() != n.bound->data.size())
      n.bound->grad.assign(n.bound->data.size(), 0.0);
    return n.bound->grad;
  }
  if (n.grad.size() != tensor_of(n).data.size())
    n.grad.assign(tensor_of(n).data.size(), 0.0);
  return n.grad;
}

int Graph::param(Tensor& t) {
  Node n;
  n.op = kParam;
  n.bound = &t;
  n.rg = t.requires_grad;
  return push(std::move(n));
}

int Graph::constant(Tensor t) {
  Node n;
  n.op = kConst;
  n.out = std::move(t);
  n.out.set_requires_grad(false);
  return push(std::move(n));
}

int Graph::constant(Shape shape, std::vector<double> values) {
  return constant(Tensor::from(std::move(shape), std::move(values)));
}

int Graph::conv1d(int x, int w, int bias, const ConvAttrs& attrs) {
  check_id(x);
  check_id(w);
  if (bias >= 0) check_id(bias);
  check_conv_attrs(attrs, false);
  const Tensor& xt = value(x);
  const Tensor& wt = value(w);
  if (xt.shape.size() != 3) throw ShapeError("conv1d input must be [batch, ch, len]");
  if (wt.shape.size() != 3) throw ShapeError("conv1d weights must be [cout, cin, k]");
  if (wt.shape[1] != xt.shape[1])
    throw ShapeError("conv1d channel mismatch between input and weights");
  const int batch = xt.shape[0], cin = xt.shape[1], len = xt.shape[2];
  const int cout = wt.shape[0], k = wt.shape[2];
  if (bias >= 0 && value(bias).shape != Shape{cout})
    throw ShapeError("conv1d bias must be [cout]");
  if (attrs.reflect && attrs.padding > len - 1)
    throw ArgumentError("reflection padding requires padding <= len - 1");
  const int lp = len + 2 * attrs.padding;
  if (k > lp) throw ShapeError("conv1d kernel longer than padded input");
  const int lout = (lp - k) / attrs.stride + 1;

  Node n;
  n.op = kConv;
  n.in0 = x;
  n.in1 = w;
  n.in2 = bias;
  n.conv = attrs;
  n.rg = rg_of(x) || rg_of(w) || (bias >= 0 && rg_of(bias));
  n.out = Tensor({batch, cout, lout});
  const std::vector<double> xp =
      pad_rows(xt.data.data(), batch, cin, len, attrs.padding, attrs.reflect);
  const kernels::ConvDims d{batch, cin, cout, lp, lout, k, attrs.stride};
  kernels::active().conv_fwd(xp.data(), wt.data.data(),
                             bias >= 0 ? value(bias).data.data() : nullptr,
                             n.out.data.data(), d);
  return push(std::move(n));
}

int Graph::conv1d_transposed(int x, int w, int bias, const ConvAttrs& attrs) {
  check_id(x);
  check_id(w);
  if (bias >= 0) check_id(bias);
  check_conv_attrs(attrs, true);
  const Tensor& xt = value(x);
  const Tensor& wt = value(w);
  if (xt.shape.size() != 3)
    throw ShapeError("conv1d_transposed input must be [batch, ch, len]");
  if (wt.shape.size() != 3)
    throw ShapeError("conv1d_transposed weights must be [cin, cout, k]");
  if (wt.shape[0] != xt.shape[1])
    throw ShapeError("conv1d_transposed channel mismatch between input and weights");
  const int batch = xt.shape[0], cin = xt.shape[1], lin = xt.shape[2];
  const int cout = wt.shape[1], k = wt.shape[2];
  if (bias >= 0 && value(bias).shape != Shape{cout})
    throw ShapeError("conv1d_transposed bias must be [cout]");
  const int lfull = (lin - 1) * attrs.stride + k;
  const int lout = lfull - 2 * attrs.padding + attrs.output_padding;
  if (lout < 1) throw ShapeError("conv1d_transposed output would be empty");

  Node n;
  n.op = kConvT;
  n.in0 = x;
  n.in1 = w;
  n.in2 = bias;
  n.conv = attrs;
  n.rg = rg_of(x) || rg_of(w) || (bias >= 0 && rg_of(bias));
  n.out = Tensor({batch, cout, lout});
  // Scatter x through w into the full overlap buffer, then crop by padding.
  // conv_grad_input is exactly that scatter when w is read as [cin][cout][k].
  std::vector<double> full(static_cast<std::size_t>(batch) * cout * lfull, 0.0);
  const kernels::ConvDims d{batch, cout, cin, lfull, lin, k, attrs.stride};
  kernels::active().conv_grad_input(xt.data.data(), wt.data.data(), full.data(), d);
  const double* bp = bias >= 0 ? value(bias).data.data() : nullptr;
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < cout; ++c) {
      const double* src = full.data() + (static_cast<std::size_t>(b) * cout + c) * lfull;
      double* dst = n.out.data.data() + (static_cast<std::size_t>(b) * cout + c) * lout;
      const double add = bp != nullptr ? bp[c] : 0.0;
      for (int i = 0; i < lout; ++i) {
        const int j = i + attrs.padding;
        dst[i] = (j < lfull ? src[j] : 0.0) + add;
      }
    }
  return push(std::move(n));
}

int Graph::instance_norm(int x, int gain, int shift, double eps) {
  check_id(x);
  check_id(gain);
  check_id(shift);
  if (eps <= 0) throw ArgumentError("instance_norm eps must be positive");
  const Tensor& xt = value(x);
  if (xt.shape.size() != 3) throw ShapeError("instance_norm input must be [batch, ch, len]");
  const int batch = xt.shape[0], ch = xt.shape[1], len = xt.shape[2];
  if (len < 2) throw ArgumentError("instance_norm needs at least 2 samples per channel");
  if (value(gain).shape != Shape{ch} || value(shift).shape != Shape{ch})
    throw ShapeError("instance_norm gain and shift must be [ch]");

  Node n;
  n.op = kInstNorm;
  n.in0 = x;
  n.in1 = gain;
  n.in2 = shift;
  n.p0 = eps;
  n.rg = rg_of(x) || rg_of(gain) || rg_of(shift);
  n.out = Tensor({batch, ch, len});
  n.saved.resize(static_cast<std::size_t>(batch) * ch * 2);
  const double* g = value(gain).data.data();
  const double* s = value(shift).data.data();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c) {
      const int r = b * ch + c;
      const double* src = xt.data.data() + static_cast<std::size_t>(r) * len;
      double* dst = n.out.data.data() + static_cast<std::size_t>(r) * len;
      double mean = 0.0;
      for (int i = 0; i < len; ++i) mean += src[i];
      mean /= len;
      double var = 0.0;
      for (int i = 0; i < len; ++i) {
        const double d = src[i] - mean;
        var += d * d;
      }
      var /= len;
      const double inv = 1.0 / std::sqrt(var + eps);
      n.saved[2 * r] = mean;
      n.saved[2 * r + 1] = inv;
      for (int i = 0; i < len; ++i) dst[i] = g[c] * ((src[i] - mean) * inv) + s[c];
    }
  return push(std::move(n));
}

int Graph::unary(int opcode, int x, double p0, double p1) {
  check_id(x);
  const Tensor& xt = value(x);
  Node n;
  n.op = opcode;
  n.in0 = x;
  n.p0 = p0;
  n.p1 = p1;
  n.rg = rg_of(x);
  n.out = Tensor(xt.shape);
  const double* src = xt.data.data();
  double* dst = n.out.data.data();
  const int sz = xt.size();
  switch (opcode) {
    case kRelu:
      for (int i = 0; i < sz; ++i) dst[i] = src[i] > 0 ? src[i] : 0.0;
      break;
    case kLeakyRelu:
      for (int i = 0; i < sz; ++i) dst[i] = src[i] > 0 ? src[i] : p0 * src[i];
      break;
    case kTanh:
      for (int i = 0; i < sz; ++i) dst[i] = std::tanh(src[i]);
      break;
    case kSigmoid:
      for (int i = 0; i < sz; ++i) dst[i] = 1.0 / (1.0 + std::exp(-src[i]));
      break;
    case kAffine:
      for (int i = 0; i < sz; ++i) dst[i] = p0 * src[i] + p1;
      break;
    case kAbs:
      for (int i = 0; i < sz; ++i) dst[i] = std::abs(src[i]);
      break;
    case kLog:
      for (int i = 0; i < sz; ++i) dst[i] = std::log(src[i]);
      break;
    case kClamp:
      for (int i = 0; i < sz; ++i) dst[i] = std::clamp(src[i], p0, p1);
      break;
    case kSquare:
      for (int i = 0; i < sz; ++i) dst[i] = src[i] * src[i];
      break;
    default:
      throw ArgumentError("unknown unary opcode");
  }
  return push(std::move(n));
}

int Graph::relu(int x) { return unary(kRelu, x); }

int Graph::leaky_relu(int x, double slope) {
  if (slope < 0) throw ArgumentError("leaky_relu slope must be non-negative");
  return unary(kLeakyRelu, x, slope);
}

int Graph::tanh_(int x) { return unary(kTanh, x); }

int Graph::sigmoid_(int x) { return unary(kSigmoid, x); }

int Graph::affine(int x, double scale, double shift) {
  return unary(kAffine, x, scale, shift);
}

int Graph::abs_(int x) { return unary(kAbs, x); }

int Graph::log_(int x) { return unary(kLog, x); }

int Graph::clamp(int x, double lo, double hi) {
  if (!(lo <= hi)) throw ArgumentError("clamp requires lo <= hi");
  return unary(kClamp, x, lo, hi);
}

int Graph::square(int x) { return unary(kSquare, x); }

int Graph::add(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& at = value(a);
  const Tensor& bt = value(b);
  if (at.shape != bt.shape) throw ShapeError("add requires identical shapes");
  Node n;
  n.op = kAdd;
  n.in0 = a;
  n.in1 = b;
  n.rg = rg_of(a) || rg_of(b);
  n.out = Tensor(at.shape);
  for (int i = 0; i < at.size(); ++i) n.out.data[i] = at.data[i] + bt.data[i];
  return push(std::move(n));
}

int Graph::sub(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& at = value(a);
  const Tensor& bt = value(b);
  if (at.shape != bt.shape) throw ShapeError("sub requires identical shapes");
  Node n;
  n.op = kSub;
  n.in0 = a;
  n.in1 = b;
  n.rg = rg_of(a) || rg_of(b);
  n.out = Tensor(at.shape);
  for (int i = 0; i < at.size(); ++i) n.out.data[i] = at.data[i] - bt.data[i];
  return push(std::move(n));
}

int Graph::mean_all(int x) {
  check_id(x);
  const Tensor& xt = value(x);
  Node n;
  n.op = kMean;
  n.in0 = x;
  n.rg = rg_of(x);
  n.out = Tensor({1});
  double acc = 0.0;
  for (double v : xt.data) acc += v;
  n.out.data[0] = acc / xt.size();
  return push(std::move(n));
}

int Graph::sum_all(int x) {
  check_id(x);
  const Tensor& xt = value(x);
  Node n;
  n.op = kSum;
  n.in0 = x;
  n.rg = rg_of(x);
  n.out = Tensor({1});
  double acc = 0.0;
  for (double v : xt.data) acc += v;
  n.out.data[0] = acc;
  return push(std::move(n));
}

void Graph::backward(int loss) {
  check_id(loss);
  if (value(loss).size() != 1)
    throw ShapeError("backward requires a single-element loss");
  if (!nodes_[loss].rg)
    throw ArgumentError("loss does not depend on any parameter with requires_grad");
  // Interior adjoints are per-call scratch; only bound tensors accumulate
  // across calls.
  for (Node& n : nodes_)
    if (n.bound == nullptr) n.grad.clear();
  grad_of(loss)[0] += 1.0;
  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.rg) continue;
    if (n.bound == nullptr && n.grad.empty()) continue;  // not on the loss path
    backward_node(id);
  }
}

void Graph::backward_node(int id) {
  Node& n = nodes_[id];
  const std::vector<double>& gy = n.bound != nullptr ? n.bound->grad : n.grad;
  switch (n.op) {
    case kParam:
    case kConst:
      return;
    case kConv: {
      const Tensor& xt = value(n.in0);
      const Tensor& wt = value(n.in1);
      const int batch = xt.shape[0], cin = xt.shape[1], len = xt.shape[2];
      const int cout = wt.shape[0], k = wt.shape[2];
      const int lp = len + 2 * n.conv.padding;
      const int lout = n.out.shape[2];
      const kernels::ConvDims d{batch, cin, cout, lp, lout, k, n.conv.stride};
      if (rg_of(n.in0)) {
        std::vector<double> gxp(static_cast<std::size_t>(batch) * cin * lp, 0.0);
        kernels::active().conv_grad_input(gy.data(), wt.data.data(), gxp.data(), d);
        unpad_accumulate(gxp.data(), batch, cin, len, n.conv.padding, n.conv.reflect,
                         grad_of(n.in0).data());
      }
      const bool need_w = rg_of(n.in1);
      const bool need_b = n.in2 >= 0 && rg_of(n.in2);
      if (need_w || need_b) {
        const std::vector<double> xp =
            pad_rows(xt.data.data(), batch, cin, len, n.conv.padding, n.conv.reflect);
        std::vector<double> gw_scratch;
        double* gw = need_w ? grad_of(n.in1).data() : nullptr;
        if (!need_w) {
          gw_scratch.assign(wt.data.size(), 0.0);
          gw = gw_scratch.data();
        }
        kernels::active().conv_grad_weights(xp.data(), gy.data(), gw,
                                            need_b ? grad_of(n.in2).data() : nullptr, d);
      }
      return;
    }
    case kConvT: {
      const Tensor& xt = value(n.in0);
      const Tensor& wt = value(n.in1);
      const int batch = xt.shape[0], cin = xt.shape[1], lin = xt.shape[2];
      const int cout = wt.shape[1], k = wt.shape[2];
      const int lfull = (lin - 1) * n.conv.stride + k;
      const int lout = n.out.shape[2];
      // Undo the crop: place gy back at offset `padding` in the full buffer.
      std::vector<double> gfull(static_cast<std::size_t>(batch) * cout * lfull, 0.0);
      for (int b = 0; b < batch; ++b)
        for (int c = 0; c < cout; ++c) {
          const double* src = gy.data() + (static_cast<std::size_t>(b) * cout + c) * lout;
          double* dst = gfull.data() + (static_cast<std::size_t>(b) * cout + c) * lfull;
          for (int i = 0; i < lout; ++i) {
            const int j = i + n.conv.padding;
            if (j < lfull) dst[j] += src[i];
          }
        }
      const kernels::ConvDims d{batch, cout, cin, lfull, lin, k, n.conv.stride};
      if (rg_of(n.in0)) {
        // Adjoint of the scatter is the valid correlation of gfull with w.
        std::vector<double> gx(xt.data.size(), 0.0);
        kernels::active().conv_fwd(gfull.data(), wt.data.data(), nullptr, gx.data(), d);
        std::vector<double>& target = grad_of(n.in0);
        for (std::size_t i = 0; i < gx.size(); ++i) target[i] += gx[i];
      }
      if (rg_of(n.in1)) {
        kernels::active().conv_grad_weights(gfull.data(), xt.data.data(),
                                            grad_of(n.in1).data(), nullptr, d);
      }
      if (n.in2 >= 0 && rg_of(n.in2)) {
        std::vector<double>& gb = grad_of(n.in2);
        for (int b = 0; b < batch; ++b)
          for (int c = 0; c < cout; ++c) {
            const double* src =
                gy.data() + (static_cast<std::size_t>(b) * cout + c) * lout;
            double acc = 0.0;
            for (int i = 0; i < lout; ++i) acc += src[i];
            gb[c] += acc;
          }
      }
      return;
    }
    case kInstNorm: {
      const Tensor& xt = value(n.in0);
      const int batch = xt.shape[0], ch = xt.shape[1], len = xt.shape[2];
      const double* g = value(n.in1).data.data();
      const bool need_x = rg_of(n.in0);
      const bool need_g = rg_of(n.in1);
      const bool need_s = rg_of(n.in2);
      double* gx = need_x ? grad_of(n.in0).data() : nullptr;
      double* gg = need_g ? grad_of(n.in1).data() : nullptr;
      double* gs = need_s ? grad_of(n.in2).data() : nullptr;
      for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c) {
          const int r = b * ch + c;
          const double mean = n.saved[2 * r];
          const double inv = n.saved[2 * r + 1];
          const double* src = xt.data.data() + static_cast<std::size_t>(r) * len;
          const double* dy = gy.data() + static_cast<std::size_t>(r) * len;
          double sum_dy = 0.0, sum_dyx = 0.0;
          for (int i = 0; i < len; ++i) {
            const double xh = (src[i] - mean) * inv;
            sum_dy += dy[i];
            sum_dyx += dy[i] * xh;
          }
          if (gg != nullptr) gg[c] += sum_dyx;
          if (gs != nullptr) gs[c] += sum_dy;
          if (gx != nullptr) {
            const double m_dy = sum_dy / len;
            const double m_dyx = sum_dyx / len;
            double* dst = gx + static_cast<std::size_t>(r) * len;
            for (int i = 0; i < len; ++i) {
              const double xh = (src[i] - mean) * inv;
              dst[i] += g[c] * inv * (dy[i] - m_dy - xh * m_dyx);
            }
          }
        }
      return;
    }
    case kRelu: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < xt.size(); ++i)
        if (xt.data[i] > 0) gx[i] += gy[i];
      return;
    }
    case kLeakyRelu: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < xt.size(); ++i)
        gx[i] += xt.data[i] > 0 ? gy[i] : n.p0 * gy[i];
      return;
    }
    case kTanh: {
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < n.out.size(); ++i)
        gx[i] += (1.0 - n.out.data[i] * n.out.data[i]) * gy[i];
      return;
    }
    case kSigmoid: {
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < n.out.size(); ++i)
        gx[i] += n.out.data[i] * (1.0 - n.out.data[i]) * gy[i];
      return;
    }
    case kAdd: {
      if (rg_of(n.in0)) {
        std::vector<double>& ga = grad_of(n.in0);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (rg_of(n.in1)) {
        std::vector<double>& gb = grad_of(n.in1);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
      return;
    }
    case kSub: {
      if (rg_of(n.in0)) {
        std::vector<double>& ga = grad_of(n.in0);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (rg_of(n.in1)) {
        std::vector<double>& gb = grad_of(n.in1);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      }
      return;
    }
    case kAffine: {
      std::vector<double>& gx = grad_of(n.in0);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += n.p0 * gy[i];
      return;
    }
    case kAbs: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < xt.size(); ++i) {
        if (xt.data[i] > 0)
          gx[i] += gy[i];
        else if (xt.data[i] < 0)
          gx[i] -= gy[i];
      }
      return;
    }
    case kLog: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < xt.size(); ++i) gx[i] += gy[i] / xt.data[i];
      return;
    }
    case kClamp: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < xt.size(); ++i)
        if (xt.data[i] > n.p0 && xt.data[i] < n.p1) gx[i] += gy[i];
      return;
    }
    case kSquare: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < xt.size(); ++i) gx[i] += 2.0 * xt.data[i] * gy[i];
      return;
    }
    case kMean: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      const double g = gy[0] / xt.size();
      for (int i = 0; i < xt.size(); ++i) gx[i] += g;
      return;
    }
    case kSum: {
      const Tensor& xt = value(n.in0);
      std::vector<double>& gx = grad_of(n.in0);
      for (int i = 0; i < xt.size(); ++i) gx[i] += gy[0];
      return;
    }
    default:
      throw ArgumentError("unknown opcode in backward");
  }
}

void Adam::step(const std::vector<std::pair<std::string, Tensor*>>& params) {
  for (const auto& [name, t] : params) {
    if (t == nullptr) throw ArgumentError("optimizer given a null parameter");
    if (!t->requires_grad || t->grad.size() != t->data.size())
      throw ArgumentError("optimizer parameter '" + name + "' has no gradient");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, t] : params) {
    Moments& mom = state_[name];
    if (mom.m.size() != t->data.size()) {
      mom.m.assign(t->data.size(), 0.0);
      mom.v.assign(t->data.size(), 0.0);
    }
    for (std::size_t i = 0; i < t->data.size(); ++i) {
      const double g = t->grad[i];
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      t->data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::restore(std::map<std::string, Moments> state, long t) {
  if (t < 0) throw ArgumentError("optimizer step count must be non-negative");
  state_ = std::move(state);
  t_ = t;
}

}  // namespace ppg2abp::ad
