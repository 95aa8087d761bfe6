#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ppg2abp/autodiff.hpp"

namespace ppg2abp::nets {

/// Conv (or transposed conv) followed by instance normalization.
struct ConvBlock {
  ad::Tensor w, b, gain, shift;
};

struct ResBlock {
  ConvBlock c1, c2;
};

using ParamVisitor = std::function<void(const std::string&, ad::Tensor&)>;

struct GeneratorConfig {
  int base_width = 64;
  int res_blocks = 9;
};

/// Residual translator: 7-wide stem, two stride-2 encoders, a chain of
/// residual blocks at 4x width, two stride-2 decoders, 7-wide tanh head.
/// Reflection padding everywhere except the strided layers, so an input of
/// length divisible by 4 maps to the same length.
struct GeneratorParams {
  GeneratorConfig config;
  ConvBlock stem, down1, down2;
  std::vector<ResBlock> res;
  ConvBlock up1, up2;  // transposed, weights laid out [cin, cout, k]
  ad::Tensor head_w, head_b;

  static GeneratorParams create(const GeneratorConfig& config, std::uint64_t seed);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
  long param_count();
};

struct DiscriminatorConfig {
  int base_width = 64;
};

/// Patch critic: three stride-2 and one stride-1 downsampling convs, then a
/// 1-channel sigmoid head. Each output element judges a 70-sample patch of
/// the input; a length-256 input yields 30 patch scores.
struct DiscriminatorParams {
  DiscriminatorConfig config;
  ad::Tensor l1_w, l1_b;  // no normalization on the first layer
  ConvBlock l2, l3, l4;
  ad::Tensor out_w, out_b;

  static DiscriminatorParams create(const DiscriminatorConfig& config, std::uint64_t seed);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
  long param_count();
};

/// Receptive field of one discriminator output element, in input samples.
int discriminator_receptive_field();

/// x is a graph node of shape [batch, 1, len], len divisible by 4 and large
/// enough for the stem; returns a [batch, 1, len] node in (-1, 1).
int generator_forward(ad::Graph& g, GeneratorParams& p, int x);

/// x is a graph node of shape [batch, 1, len]; returns patch probabilities
/// [batch, 1, n_patches] in (0, 1).
int discriminator_forward(ad::Graph& g, DiscriminatorParams& p, int x);

}  // namespace ppg2abp::nets
