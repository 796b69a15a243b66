#pragma once

#include <filesystem>
#include <string>

#include "fass/edge.hpp"
#include "fass/fa.hpp"
#include "fass/optim.hpp"
#include "fass/unet.hpp"
#include "json.hpp"

namespace fass {
inline namespace FASS_MODEL_NS {

struct RunConfig {
  // Optimisation
  long iterations = 2000;
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  long checkpoint_every = 500;

  // Data and model
  Dims3 patch{64, 64, 64};
  int base_channels = 8;
  int num_classes = 3;
  bool augment = true;
  std::string wavelet = "db2";

  // Module switches
  bool fa = modules_compiled();
  bool flfe = modules_compiled();
  bool ec = modules_compiled();

  // FA
  double alpha = 0.1;
  Dims3 bg_size{32, 32, 32};
  int fa_max_attempts = 1000;
  bool fa_detach_bg = false;

  // EC
  int ec_radius = 5;
  int ec_k = 10;
  int ec_truth_radius = 2;
  std::string ec_edges = "mask";

  // Evaluation window stride; 0 means half the patch.
  int eval_stride = 0;

  std::uint64_t seed = 0;

  std::filesystem::path train_dir = "data/train";
  std::filesystem::path test_dir = "data/test";
  std::filesystem::path out_dir = "runs/default";

  void validate() const;

  UNetConfig unet() const;
  FAConfig fa_config() const;
  ECConfig ec_config() const;
  SgdConfig sgd() const;
  Dims3 stride() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& file);

  // Replaces one field from its command-line text. Switches accept on/off,
  // extents accept "n" or "d,h,w". Unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);

  // Hash of every field that shapes the training trajectory (paths excluded).
  std::string hash() const;
};

}  // namespace FASS_MODEL_NS
}  // namespace fass
