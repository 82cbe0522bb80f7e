#pragma once

// Versioned binary checkpoint: magic, format version, a JSON blob echoing the
// model config plus training metadata, then named raw-double tensors
// (parameters and batch-norm buffers). Reload is bit-identical.

#include <map>
#include <string>
#include <vector>

#include "crvae/model.hpp"
#include "crvae/types.hpp"

namespace crvae {

struct CheckpointData {
  int version = 1;
  ModelConfig config;
  int epoch = 0;
  std::vector<LossBreakdown> curve;
  std::map<std::string, Matd> tensors;
};

void save_checkpoint(const std::string& path, CrvaeModel<double>& model,
                     const ModelConfig& config, int epoch,
                     const std::vector<LossBreakdown>& curve);

CheckpointData load_checkpoint(const std::string& path);

// Installs tensors into a model built from the checkpoint's config; throws
// StageError on any missing name or shape mismatch.
void restore_model(CrvaeModel<double>& model, const CheckpointData& data);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

void write_loss_curve_csv(const std::string& path, const std::vector<LossBreakdown>& curve,
                          const std::vector<std::string>& comments);

}  // namespace crvae
