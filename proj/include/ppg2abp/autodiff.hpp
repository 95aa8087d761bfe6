#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ppg2abp::ad {

using Shape = std::vector<int>;

int numel(const Shape& shape);

/// Dense n-dimensional value with an optional same-shape gradient store.
/// 64-bit throughout; checkpoints convert to 32-bit on disk.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0, bool rg = false);
  static Tensor from(Shape s, std::vector<double> values, bool rg = false);

  int size() const { return static_cast<int>(data.size()); }
  void set_requires_grad(bool rg);
  void zero_grad();
};

struct ConvAttrs {
  int stride = 1;
  int padding = 0;
  int output_padding = 0;
  bool reflect = false;  // reflection padding instead of zeros
};

/// Reverse-mode tape. Operations evaluate eagerly and append a record; the
/// record order is topological by construction. backward() walks the tape
/// in reverse and accumulates dLoss/dParam into every bound parameter's
/// grad store (repeated calls keep accumulating until zero_grad()).
///
/// The operator set is closed: exactly what the translation networks and
/// their losses need, each one gradient-checked against finite differences.
class Graph {
 public:
  /// Leaf bound to external storage; gradients flow into t.grad.
  int param(Tensor& t);
  /// Leaf with a private copy; never receives gradients.
  int constant(Tensor t);
  int constant(Shape shape, std::vector<double> values);

  // x: [batch, cin, len], w: [cout, cin, k], bias: [cout] or -1.
  int conv1d(int x, int w, int bias, const ConvAttrs& attrs);
  // x: [batch, cin, len], w: [cin, cout, k] (adjoint of conv1d with the
  // same kernel tensor), bias: [cout] or -1.
  int conv1d_transposed(int x, int w, int bias, const ConvAttrs& attrs);
  // x: [batch, ch, len], gain/shift: [ch]; per (batch, channel) moments.
  int instance_norm(int x, int gain, int shift, double eps = 1e-5);

  int relu(int x);
  int leaky_relu(int x, double slope = 0.2);
  int tanh_(int x);
  int sigmoid_(int x);

  int add(int a, int b);
  int sub(int a, int b);
  int affine(int x, double scale, double shift);  // scale * x + shift
  int abs_(int x);
  int log_(int x);
  int clamp(int x, double lo, double hi);
  int square(int x);
  int mean_all(int x);  // -> shape [1]
  int sum_all(int x);   // -> shape [1]

  const Tensor& value(int id) const;
  double scalar(int id) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// loss must be a single-element tensor. Each call seeds a fresh unit
  /// adjoint and adds the resulting gradients onto the bound tensors, so
  /// repeated calls accumulate until zero_grad.
  void backward(int loss);

 private:
  struct Node {
    int op;
    int in0 = -1, in1 = -1, in2 = -1;
    ConvAttrs conv;
    double p0 = 0.0, p1 = 0.0;
    Tensor out;              // empty for bound params
    Tensor* bound = nullptr; // Param leaves
    std::vector<double> grad;
    std::vector<double> saved;
    bool rg = false;
  };

  int push(Node n);
  const Tensor& tensor_of(const Node& n) const;
  std::vector<double>& grad_of(int id);
  bool rg_of(int id) const { return nodes_[id].rg; }
  void check_id(int id) const;
  int unary(int opcode, int x, double p0 = 0.0, double p1 = 0.0);

  void backward_node(int id);

  std::vector<Node> nodes_;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. State is keyed by
/// parameter name so it survives checkpointing; updates are deterministic
/// given the state and gradients.
class Adam {
 public:
  struct Moments {
    std::vector<double> m, v;
  };

  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<std::pair<std::string, Tensor*>>& params);

  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::map<std::string, Moments>& state() const { return state_; }
  void restore(std::map<std::string, Moments> state, long t);

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace ppg2abp::ad
