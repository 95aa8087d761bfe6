#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ppg2abp/autodiff.hpp"
#include "ppg2abp/cyclegan.hpp"
#include "ppg2abp/nets.hpp"

namespace ppg2abp::ckpt {

/// Everything needed to rebuild a trained model and audit its run: the four
/// parameter files plus a manifest holding the configs, seed, step count, and
/// loss history. Mid-run optimizer moments and replay-buffer contents are not
/// part of a checkpoint; it captures the model, not a resumable training
/// process.
struct Checkpoint {
  gan::PatModel model;
  nets::GeneratorConfig gen;
  nets::DiscriminatorConfig disc;
  gan::TrainConfig train;
  long step = 0;
  std::vector<gan::StepMetrics> history;
};

/// Writes G.params / F.params / D_X.params / D_Y.params and manifest.json
/// into dir (created if missing). Parameter files store 32-bit values under
/// a versioned header.
void save(const std::string& dir, gan::PatModel& model, const nets::GeneratorConfig& gen,
          const nets::DiscriminatorConfig& disc, const gan::TrainConfig& train, long step,
          const std::vector<gan::StepMetrics>& history);

/// Rebuilds the model from manifest.json + parameter files. Throws ParseError
/// on malformed files, ValidationError when stored shapes disagree with the
/// configured architecture.
Checkpoint load(const std::string& dir);

// Single-file layer, exposed for tests: named tensors under the versioned
// binary header.
void save_params(const std::string& path,
                 const std::vector<std::pair<std::string, const ad::Tensor*>>& params);
void load_params_into(const std::string& path,
                      const std::vector<std::pair<std::string, ad::Tensor*>>& params);

}  // namespace ppg2abp::ckpt
