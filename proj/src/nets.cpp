#include "ppg2abp/nets.hpp"

#include <utility>

#include "ppg2abp/errors.hpp"
#include "ppg2abp/rng.hpp"

namespace ppg2abp::nets {

namespace {

constexpr double kWeightStd = 0.02;

ConvBlock make_conv_block(int cout, int cin, int k) {
  ConvBlock cb;
  cb.w = ad::Tensor({cout, cin, k}, 0.0, true);
  cb.b = ad::Tensor({cout}, 0.0, true);
  cb.gain = ad::Tensor({cout}, 0.0, true);
  cb.shift = ad::Tensor({cout}, 0.0, true);
  return cb;
}

// Transposed-conv weights: [cin, cout, k]; norm params sized by cout.
ConvBlock make_tconv_block(int cin, int cout, int k) {
  ConvBlock cb;
  cb.w = ad::Tensor({cin, cout, k}, 0.0, true);
  cb.b = ad::Tensor({cout}, 0.0, true);
  cb.gain = ad::Tensor({cout}, 0.0, true);
  cb.shift = ad::Tensor({cout}, 0.0, true);
  return cb;
}

void visit_block(const std::string& name, ConvBlock& cb, const ParamVisitor& visit) {
  visit(name + ".w", cb.w);
  visit(name + ".b", cb.b);
  visit(name + ".gain", cb.gain);
  visit(name + ".shift", cb.shift);
}

// Fill rules for fresh weights: conv kernels N(0, kWeightStd^2), biases and
// norm shifts zero, norm gains one. Draw order follows visitation order, so
// a seed pins every value.
void init_visited(std::uint64_t seed, const std::function<void(const ParamVisitor&)>& each) {
  rng::Stream stream(seed);
  each([&stream](const std::string& name, ad::Tensor& t) {
    const bool is_weight = name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0;
    const bool is_gain =
        name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    for (double& v : t.data)
      v = is_weight ? stream.normal(0.0, kWeightStd) : (is_gain ? 1.0 : 0.0);
  });
}

long count_visited(const std::function<void(const ParamVisitor&)>& each) {
  long n = 0;
  each([&n](const std::string&, ad::Tensor& t) { n += t.size(); });
  return n;
}

// Conv -> instance norm -> optional activation, shared by both networks.
int norm_conv(ad::Graph& g, ConvBlock& cb, int x, const ad::ConvAttrs& attrs,
              bool transposed) {
  const int w = g.param(cb.w);
  const int b = g.param(cb.b);
  const int y = transposed ? g.conv1d_transposed(x, w, b, attrs) : g.conv1d(x, w, b, attrs);
  return g.instance_norm(y, g.param(cb.gain), g.param(cb.shift));
}

}  // namespace

GeneratorParams GeneratorParams::create(const GeneratorConfig& config, std::uint64_t seed) {
  if (config.base_width < 1) throw ArgumentError("generator base_width must be positive");
  if (config.res_blocks < 1) throw ArgumentError("generator needs at least one residual block");
  GeneratorParams p;
  p.config = config;
  const int w0 = config.base_width;
  p.stem = make_conv_block(w0, 1, 7);
  p.down1 = make_conv_block(2 * w0, w0, 3);
  p.down2 = make_conv_block(4 * w0, 2 * w0, 3);
  p.res.resize(static_cast<std::size_t>(config.res_blocks));
  for (ResBlock& rb : p.res) {
    rb.c1 = make_conv_block(4 * w0, 4 * w0, 3);
    rb.c2 = make_conv_block(4 * w0, 4 * w0, 3);
  }
  p.up1 = make_tconv_block(4 * w0, 2 * w0, 3);
  p.up2 = make_tconv_block(2 * w0, w0, 3);
  p.head_w = ad::Tensor({1, w0, 7}, 0.0, true);
  p.head_b = ad::Tensor({1}, 0.0, true);
  init_visited(seed, [&p](const ParamVisitor& v) { p.for_each_param("", v); });
  return p;
}

void GeneratorParams::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit_block(prefix + "stem", stem, visit);
  visit_block(prefix + "down1", down1, visit);
  visit_block(prefix + "down2", down2, visit);
  for (std::size_t i = 0; i < res.size(); ++i) {
    const std::string base = prefix + "res" + std::to_string(i);
    visit_block(base + ".c1", res[i].c1, visit);
    visit_block(base + ".c2", res[i].c2, visit);
  }
  visit_block(prefix + "up1", up1, visit);
  visit_block(prefix + "up2", up2, visit);
  visit(prefix + "head.w", head_w);
  visit(prefix + "head.b", head_b);
}

long GeneratorParams::param_count() {
  return count_visited([this](const ParamVisitor& v) { for_each_param("", v); });
}

DiscriminatorParams DiscriminatorParams::create(const DiscriminatorConfig& config,
                                                std::uint64_t seed) {
  if (config.base_width < 1)
    throw ArgumentError("discriminator base_width must be positive");
  DiscriminatorParams p;
  p.config = config;
  const int w0 = config.base_width;
  p.l1_w = ad::Tensor({w0, 1, 4}, 0.0, true);
  p.l1_b = ad::Tensor({w0}, 0.0, true);
  p.l2 = make_conv_block(2 * w0, w0, 4);
  p.l3 = make_conv_block(4 * w0, 2 * w0, 4);
  p.l4 = make_conv_block(8 * w0, 4 * w0, 4);
  p.out_w = ad::Tensor({1, 8 * w0, 4}, 0.0, true);
  p.out_b = ad::Tensor({1}, 0.0, true);
  init_visited(seed, [&p](const ParamVisitor& v) { p.for_each_param("", v); });
  return p;
}

void DiscriminatorParams::for_each_param(const std::string& prefix,
                                         const ParamVisitor& visit) {
  visit(prefix + "l1.w", l1_w);
  visit(prefix + "l1.b", l1_b);
  visit_block(prefix + "l2", l2, visit);
  visit_block(prefix + "l3", l3, visit);
  visit_block(prefix + "l4", l4, visit);
  visit(prefix + "out.w", out_w);
  visit(prefix + "out.b", out_b);
}

long DiscriminatorParams::param_count() {
  return count_visited([this](const ParamVisitor& v) { for_each_param("", v); });
}

int discriminator_receptive_field() {
  // Back-to-front over (k=4, s=2) x3, (k=4, s=1) x2.
  const int ks[] = {4, 4, 4, 4, 4};
  const int ss[] = {2, 2, 2, 1, 1};
  int rf = 1;
  int jump = 1;
  for (int i = 0; i < 5; ++i) {
    rf += (ks[i] - 1) * jump;
    jump *= ss[i];
  }
  return rf;
}

int generator_forward(ad::Graph& g, GeneratorParams& p, int x) {
  const ad::Shape& in_shape = g.value(x).shape;
  if (in_shape.size() != 3 || in_shape[1] != 1)
    throw ShapeError("generator input must be [batch, 1, len]");
  if (in_shape[2] % 4 != 0)
    throw ShapeError("generator input length must be divisible by 4");

  const ad::ConvAttrs stem_attrs{1, 3, 0, true};
  const ad::ConvAttrs down_attrs{2, 1, 0, false};
  const ad::ConvAttrs res_attrs{1, 1, 0, true};
  const ad::ConvAttrs up_attrs{2, 1, 1, false};

  int h = g.relu(norm_conv(g, p.stem, x, stem_attrs, false));
  h = g.relu(norm_conv(g, p.down1, h, down_attrs, false));
  h = g.relu(norm_conv(g, p.down2, h, down_attrs, false));
  for (ResBlock& rb : p.res) {
    int r = g.relu(norm_conv(g, rb.c1, h, res_attrs, false));
    r = norm_conv(g, rb.c2, r, res_attrs, false);
    h = g.add(h, r);
  }
  h = g.relu(norm_conv(g, p.up1, h, up_attrs, true));
  h = g.relu(norm_conv(g, p.up2, h, up_attrs, true));
  const int head = g.conv1d(h, g.param(p.head_w), g.param(p.head_b), stem_attrs);
  return g.tanh_(head);
}

int discriminator_forward(ad::Graph& g, DiscriminatorParams& p, int x) {
  const ad::Shape& in_shape = g.value(x).shape;
  if (in_shape.size() != 3 || in_shape[1] != 1)
    throw ShapeError("discriminator input must be [batch, 1, len]");

  const ad::ConvAttrs s2{2, 1, 0, false};
  const ad::ConvAttrs s1{1, 1, 0, false};

  int h = g.conv1d(x, g.param(p.l1_w), g.param(p.l1_b), s2);
  h = g.leaky_relu(h);
  h = g.leaky_relu(norm_conv(g, p.l2, h, s2, false));
  h = g.leaky_relu(norm_conv(g, p.l3, h, s2, false));
  h = g.leaky_relu(norm_conv(g, p.l4, h, s1, false));
  const int out = g.conv1d(h, g.param(p.out_w), g.param(p.out_b), s1);
  return g.sigmoid_(out);
}

}  // namespace ppg2abp::nets
