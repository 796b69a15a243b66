#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fass/config.hpp"
#include "fass/metrics.hpp"
#include "fass/unet.hpp"
#include "fass/volume.hpp"
#include "json.hpp"

namespace fass {
inline namespace FASS_MODEL_NS {

// Window origins along one axis: every multiple of `stride` that fits, plus a
// final window flush with the far edge.
std::vector<int> window_starts(int extent, int window, int stride);

// Mean of the segmentation logits of every window covering each voxel,
// computed in evaluation mode. Returns [num_classes, D, H, W].
Tensor sliding_window_logits(UNet3D& model, const Volume& volume, const Dims3& window, const Dims3& stride,
                             bool flfe);

std::vector<std::uint8_t> argmax_labels(const Tensor& logits);

std::vector<std::uint8_t> segment(UNet3D& model, const RunConfig& config, const Volume& volume);

struct EvaluationReport {
  int num_classes = 0;
  std::vector<std::string> names;
  std::vector<MetricsReport> per_volume;

  // Mean and std across volumes of one metric ("dice", "jaccard", "hd95_mm",
  // "asd_mm") for foreground class `c` (1-based).
  MeanStd aggregate(const std::string& metric, int c) const;
  nlohmann::json to_json() const;
};

// Scores predictions against the labels stored in each volume.
EvaluationReport evaluate_predictions(const std::vector<Volume>& volumes,
                                      const std::vector<std::vector<std::uint8_t>>& predictions, int num_classes,
                                      std::vector<std::string> names = {});

EvaluationReport evaluate_model(UNet3D& model, const RunConfig& config, const std::vector<Volume>& volumes,
                                std::vector<std::string> names = {});

// Standardized volumes of `dir` together with their file stems.
struct NamedVolumes {
  std::vector<std::string> names;
  std::vector<Volume> volumes;
};
NamedVolumes load_named_volumes(const std::filesystem::path& dir);

EvaluationReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& test_dir);

// Segments the volume at `input` and writes a copy holding the predicted
// labels to `output`.
void infer_volume(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                  const std::filesystem::path& output);

// Values swept when none are given.
std::vector<std::string> default_sweep_values(const std::string& parameter);

// Trains and evaluates one run per value, appending a CSV row after each.
// Rows already written survive a failure in a later run.
void sweep(const RunConfig& base, const std::string& parameter, const std::vector<std::string>& values,
           const std::filesystem::path& csv_path);

}  // namespace FASS_MODEL_NS
}  // namespace fass
