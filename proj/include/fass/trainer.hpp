#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "fass/config.hpp"
#include "fass/fa.hpp"
#include "fass/losses.hpp"
#include "fass/optim.hpp"
#include "fass/unet.hpp"
#include "fass/volume.hpp"

namespace fass {
inline namespace FASS_MODEL_NS {

// Every volume in `dir`, standardized. Throws ConfigError when there are none.
std::vector<Volume> load_volumes(const std::filesystem::path& dir);

class Trainer {
 public:
  Trainer(RunConfig config, std::vector<Volume> volumes);

  // Restores weights, buffers, momentum, RNG state and iteration. The
  // checkpoint must come from the same configuration.
  void resume(const std::filesystem::path& checkpoint);

  // One SGD iteration; returns the logged loss record.
  LossBreakdown step();

  // Iterates until `until` (default: the configured count), appending one
  // JSON line per iteration to train_log.jsonl and per-epoch sampler
  // statistics to sampler_log.jsonl, checkpointing every checkpoint_every
  // iterations and at the end (model.ckpt). On a non-finite loss the
  // pre-step state is written to last_good.ckpt and NumericError rethrown.
  void run(std::optional<long> until = std::nullopt);

  void save(const std::filesystem::path& path) const;

  long iteration() const { return iteration_; }
  const RunConfig& config() const { return config_; }
  UNet3D& model() { return *model_; }
  const SamplerStats& sampler() const { return sampler_; }

 private:
  RunConfig config_;
  std::vector<Volume> volumes_;
  std::vector<std::size_t> volume_foreground_;
  std::unique_ptr<UNet3D> model_;
  StateRefs state_;
  Sgd optimizer_;
  std::mt19937_64 rng_;
  long iteration_ = 0;
  SamplerStats sampler_;
  std::size_t fa_no_foreground_ = 0;
};

// Model and configuration stored in a checkpoint.
struct LoadedModel {
  RunConfig config;
  std::unique_ptr<UNet3D> model;
  long iteration = 0;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

}  // namespace FASS_MODEL_NS
}  // namespace fass
