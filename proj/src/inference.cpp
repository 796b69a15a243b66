#include "fass/inference.hpp"

#include <fstream>

#include "fass/errors.hpp"
#include "fass/trainer.hpp"

namespace fass {
inline namespace FASS_MODEL_NS {

namespace {

using nlohmann::json;

constexpr ForwardMode kEval{false, false};

double metric_value(const PairMetrics& m, const std::string& metric) {
  if (metric == "dice") return m.dice;
  if (metric == "jaccard") return m.jaccard;
  if (metric == "hd95_mm") return m.hd95_mm;
  if (metric == "asd_mm") return m.asd_mm;
  throw ConfigError("unknown metric " + metric);
}

const std::array<const char*, 4> kMetrics{"dice", "jaccard", "hd95_mm", "asd_mm"};

std::string canonical_parameter(const std::string& p) {
  if (p == "alpha" || p == "wavelet") return p;
  if (p == "bg_size" || p == "bg-size") return "bg_size";
  throw ConfigError("sweep: parameter must be alpha, wavelet or bg_size, got '" + p + "'");
}

}  // namespace

std::vector<int> window_starts(int extent, int window, int stride) {
  if (window > extent) throw DimensionError("window larger than the volume");
  if (stride <= 0) throw ConfigError("window stride must be positive");
  std::vector<int> out;
  for (int s = 0; s + window <= extent; s += stride) out.push_back(s);
  if (out.back() + window < extent) out.push_back(extent - window);
  return out;
}

Tensor sliding_window_logits(UNet3D& model, const Volume& volume, const Dims3& window, const Dims3& stride,
                             bool flfe) {
  NoGradGuard no_grad;
  const int classes = model.config().num_classes;
  const std::size_t n = dims_volume(volume.dims);
  std::vector<double> sum(n * static_cast<std::size_t>(classes), 0.0);
  std::vector<int> hits(n, 0);
  const auto zs = window_starts(volume.dims[0], window[0], stride[0]);
  const auto ys = window_starts(volume.dims[1], window[1], stride[1]);
  const auto xs = window_starts(volume.dims[2], window[2], stride[2]);
  for (int z0 : zs) {
    for (int y0 : ys) {
      for (int x0 : xs) {
        const Volume w = crop(volume, {z0, y0, x0}, window);
        const Tensor input = Tensor::from({1, window[0], window[1], window[2]}, w.intensities);
        const Tensor out = model.forward(input, flfe, kEval).seg_logits;
        const auto logits = out.data();
        for (int z = 0; z < window[0]; ++z) {
          for (int y = 0; y < window[1]; ++y) {
            for (int x = 0; x < window[2]; ++x) {
              const std::size_t dst = flat_index(volume.dims, z0 + z, y0 + y, x0 + x);
              const std::size_t src = flat_index(window, z, y, x);
              ++hits[dst];
              for (int c = 0; c < classes; ++c) {
                sum[static_cast<std::size_t>(c) * n + dst] += logits[static_cast<std::size_t>(c) * dims_volume(window) + src];
              }
            }
          }
        }
      }
    }
  }
  std::vector<float> out(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) out[i] = static_cast<float>(sum[i] / hits[i % n]);
  return Tensor::from({classes, volume.dims[0], volume.dims[1], volume.dims[2]}, std::move(out));
}

std::vector<std::uint8_t> argmax_labels(const Tensor& logits) {
  const Shape& s = logits.shape();
  if (s.size() != 4) throw DimensionError("argmax_labels expects [C, D, H, W]");
  const std::size_t n = static_cast<std::size_t>(s[1]) * s[2] * s[3];
  const auto v = logits.data();
  std::vector<std::uint8_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    float best = v[i];
    for (int c = 1; c < s[0]; ++c) {
      const float x = v[static_cast<std::size_t>(c) * n + i];
      if (x > best) {
        best = x;
        out[i] = static_cast<std::uint8_t>(c);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> segment(UNet3D& model, const RunConfig& config, const Volume& volume) {
  return argmax_labels(sliding_window_logits(model, volume, config.patch, config.stride(), config.flfe));
}

MeanStd EvaluationReport::aggregate(const std::string& metric, int c) const {
  std::vector<double> values;
  for (const auto& r : per_volume) values.push_back(metric_value(r.per_class.at(static_cast<std::size_t>(c - 1)), metric));
  return mean_std(values);
}

json EvaluationReport::to_json() const {
  json per_class = json::object();
  json mean = json::object(), stdev = json::object();
  for (const char* m : kMetrics) {
    std::vector<double> class_means;
    for (int c = 1; c < num_classes; ++c) {
      const MeanStd a = aggregate(m, c);
      per_class[std::to_string(c)][m] = {{"mean", a.mean}, {"std", a.std}};
    }
    // Per-volume average over foreground classes, then across volumes.
    std::vector<double> per_volume_avg;
    for (const auto& r : per_volume) {
      double s = 0.0;
      for (const auto& pm : r.per_class) s += metric_value(pm, m);
      per_volume_avg.push_back(s / static_cast<double>(r.per_class.size()));
    }
    const MeanStd overall = mean_std(per_volume_avg);
    mean[m] = overall.mean;
    stdev[m] = overall.std;
  }
  json volumes = json::array();
  for (std::size_t k = 0; k < per_volume.size(); ++k) {
    json classes = json::object();
    for (std::size_t c = 0; c < per_volume[k].per_class.size(); ++c) {
      const PairMetrics& pm = per_volume[k].per_class[c];
      classes[std::to_string(c + 1)] = {{"dice", pm.dice},
                                        {"jaccard", pm.jaccard},
                                        {"hd95_mm", pm.hd95_mm},
                                        {"asd_mm", pm.asd_mm},
                                        {"degenerate", pm.degenerate}};
    }
    volumes.push_back({{"name", k < names.size() ? names[k] : std::to_string(k)}, {"per_class", classes}});
  }
  return {{"volumes", per_volume.size()}, {"per_class", per_class}, {"mean", mean}, {"std", stdev},
          {"per_volume", volumes}};
}

EvaluationReport evaluate_predictions(const std::vector<Volume>& volumes,
                                      const std::vector<std::vector<std::uint8_t>>& predictions, int num_classes,
                                      std::vector<std::string> names) {
  if (volumes.empty()) throw ConfigError("evaluate: empty test set");
  if (predictions.size() != volumes.size()) throw DimensionError("evaluate: one prediction per volume required");
  EvaluationReport report;
  report.num_classes = num_classes;
  report.names = std::move(names);
  for (std::size_t k = 0; k < volumes.size(); ++k) {
    report.per_volume.push_back(
        evaluate_metrics(predictions[k], volumes[k].labels, volumes[k].dims, volumes[k].spacing_mm, num_classes));
  }
  return report;
}

EvaluationReport evaluate_model(UNet3D& model, const RunConfig& config, const std::vector<Volume>& volumes,
                                std::vector<std::string> names) {
  if (volumes.empty()) throw ConfigError("evaluate: empty test set");
  std::vector<std::vector<std::uint8_t>> predictions;
  for (const Volume& v : volumes) predictions.push_back(segment(model, config, v));
  return evaluate_predictions(volumes, predictions, config.num_classes, std::move(names));
}

NamedVolumes load_named_volumes(const std::filesystem::path& dir) {
  NamedVolumes out;
  for (const auto& f : list_volumes(dir)) {
    out.names.push_back(f.stem().string());
    out.volumes.push_back(read_volume(f));
    standardize_intensities(out.volumes.back());
  }
  if (out.volumes.empty()) throw ConfigError("evaluate: no volumes found in " + dir.string());
  return out;
}

EvaluationReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& test_dir) {
  LoadedModel m = load_model(checkpoint);
  NamedVolumes test = load_named_volumes(test_dir);
  return evaluate_model(*m.model, m.config, test.volumes, std::move(test.names));
}

void infer_volume(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                  const std::filesystem::path& output) {
  LoadedModel m = load_model(checkpoint);
  Volume raw = read_volume(input);
  Volume standardized = raw;
  standardize_intensities(standardized);
  raw.labels = segment(*m.model, m.config, standardized);
  write_volume(raw, output);
}

std::vector<std::string> default_sweep_values(const std::string& parameter) {
  const std::string p = canonical_parameter(parameter);
  if (p == "alpha") return {"0.0", "0.1", "0.2", "0.3", "0.5"};
  if (p == "wavelet") return {"haar", "db2", "coif1", "bior2.4"};
  return {"18", "32", "48"};
}

void sweep(const RunConfig& base, const std::string& parameter, const std::vector<std::string>& values,
           const std::filesystem::path& csv_path) {
  const std::string p = canonical_parameter(parameter);
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<RunConfig> runs;
  for (const auto& v : values) {
    RunConfig c = base;
    c.set(p, v);
    c.out_dir = base.out_dir / (p + "_" + v);
    c.validate();
    runs.push_back(std::move(c));
  }
  const std::vector<Volume> train = load_volumes(base.train_dir);
  const NamedVolumes test = load_named_volumes(base.test_dir);

  if (!csv_path.parent_path().empty()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("sweep: cannot write " + csv_path.string());
  csv << "parameter,value";
  for (int c = 1; c < base.num_classes; ++c) csv << ",dice_mean_c" << c << ",dice_std_c" << c;
  csv << '\n';
  csv.flush();

  for (std::size_t k = 0; k < runs.size(); ++k) {
    Trainer trainer(runs[k], train);
    trainer.run();
    const EvaluationReport report = evaluate_model(trainer.model(), runs[k], test.volumes, test.names);
    std::ofstream(runs[k].out_dir / "evaluation.json") << report.to_json().dump(2) << '\n';
    csv << p << ',' << values[k];
    for (int c = 1; c < base.num_classes; ++c) {
      const MeanStd d = report.aggregate("dice", c);
      csv << ',' << d.mean << ',' << d.std;
    }
    csv << '\n';
    csv.flush();
  }
}

}  // namespace FASS_MODEL_NS
}  // namespace fass
