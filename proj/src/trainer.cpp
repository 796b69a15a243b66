#include "fass/trainer.hpp"

#include <fstream>
#include <sstream>

#include "fass/checkpoint.hpp"
#include "fass/edge.hpp"
#include "fass/errors.hpp"
#include "fass/ops.hpp"
#include "fass/wavelet.hpp"

namespace fass {
inline namespace FASS_MODEL_NS {

namespace {

using nlohmann::json;

constexpr ForwardMode kTrain{true, true};
constexpr ForwardMode kTrainFrozenStats{true, false};

std::mt19937_64 data_stream(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 3u};
  return std::mt19937_64(seq);
}

Tensor intensity_tensor(const Volume& v) {
  return Tensor::from({1, v.dims[0], v.dims[1], v.dims[2]}, v.intensities);
}

std::vector<NamedArray> snapshot(const StateRefs& state, const Sgd& optimizer) {
  std::vector<NamedArray> arrays;
  for (const auto& p : state.parameters) arrays.push_back({"param/" + p.name, p.tensor.shape(), p.tensor.to_vector()});
  for (const auto& b : state.buffers) {
    arrays.push_back({"buffer/" + b.name, {static_cast<int>(b.values->size())}, *b.values});
  }
  for (std::size_t k = 0; k < state.parameters.size(); ++k) {
    arrays.push_back({"momentum/" + state.parameters[k].name, state.parameters[k].tensor.shape(),
                      optimizer.momentum()[k]});
  }
  return arrays;
}

void copy_into(const NamedArray& a, std::span<float> dst) {
  if (a.values.size() != dst.size()) {
    throw FormatError("checkpoint: " + a.name + " holds " + std::to_string(a.values.size()) + " values, expected " +
                      std::to_string(dst.size()));
  }
  std::copy(a.values.begin(), a.values.end(), dst.begin());
}

void restore_model(const CheckpointFile& file, StateRefs& state) {
  for (auto& p : state.parameters) copy_into(file.array("param/" + p.name), p.tensor.mutable_data());
  for (auto& b : state.buffers) copy_into(file.array("buffer/" + b.name), *b.values);
}

std::string json_line(const LossBreakdown& b, long t) {
  return json{{"t", t},
              {"L_sup", b.sup},
              {"L_D", b.fa},
              {"L_EC", b.ec},
              {"lambda", b.lambda},
              {"L_total", b.total},
              {"fa_skipped", b.fa_skipped},
              {"ec_skipped", b.ec_skipped}}
      .dump();
}

// Keeps the log lines of iterations before `t`.
void truncate_log(const std::filesystem::path& path, long t) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (json::parse(line).at("t").get<long>() < t) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : kept) out << line << '\n';
}

}  // namespace

std::vector<Volume> load_volumes(const std::filesystem::path& dir) {
  const auto files = list_volumes(dir);
  if (files.empty()) throw ConfigError("no volumes found in " + dir.string());
  std::vector<Volume> out;
  for (const auto& f : files) {
    out.push_back(read_volume(f));
    standardize_intensities(out.back());
  }
  return out;
}

Trainer::Trainer(RunConfig config, std::vector<Volume> volumes)
    : config_((config.validate(), std::move(config))),
      volumes_(std::move(volumes)),
      model_(std::make_unique<UNet3D>(config_.unet())),
      state_(model_->state()),
      optimizer_(state_.parameters, config_.sgd()),
      rng_(data_stream(config_.seed)) {
  if (volumes_.empty()) throw ConfigError("train: no training volumes");
  for (const Volume& v : volumes_) {
    for (int a = 0; a < 3; ++a) {
      if (v.dims[a] < config_.patch[a]) throw ConfigError("train: volume smaller than the patch");
    }
    for (std::uint8_t l : v.labels) {
      if (l >= config_.num_classes) throw ConfigError("train: label " + std::to_string(l) + " exceeds num_classes");
    }
    volume_foreground_.push_back(v.foreground().count());
  }
}

LossBreakdown Trainer::step() {
  std::uniform_int_distribution<std::size_t> pick(0, volumes_.size() - 1);
  const Volume& source = volumes_[pick(rng_)];
  const std::size_t volume_fg = volume_foreground_[&source - volumes_.data()];
  Coord3 origin{};
  for (int a = 0; a < 3; ++a) {
    origin[static_cast<std::size_t>(a)] = std::uniform_int_distribution<int>(0, source.dims[a] - config_.patch[a])(rng_);
  }
  Volume patch = crop(source, origin, config_.patch);
  if (config_.augment) {
    const Rotation r = draw_rotation(rng_);
    patch = rotate90(patch, r.axis, r.quarter_turns);
  }

  const std::vector<Tensor> features = model_->encode(intensity_tensor(patch), config_.flfe, kTrain);
  const SegOutput out = model_->decode(features, kTrain);
  const Tensor sup = supervised_loss(out.seg_logits, patch.labels);

  LossTerm fa{Tensor::scalar(0.0f), false};
  LossTerm ec{Tensor::scalar(0.0f), false};
#ifndef FASS_BASELINE_ONLY
  if (config_.fa) {
    const Mask fg = patch.foreground();
    const double omega = adaptive_weight(fg.count(), volume_fg);
    fa.skipped = true;
    if (omega == 0.0) {
      ++fa_no_foreground_;
    } else {
      const FAConfig fa_cfg = config_.fa_config();
      try {
        const BackgroundPatch bg = sample_background(BoxCounter(fg), fa_cfg, rng_);
        sampler_.record(bg);
        const int min_slice = config_.flfe ? 4 * WaveletBasis::named(config_.wavelet).length() : 0;
        const Tensor bg_input = background_tensor(patch, bg, 8, min_slice);
        const std::vector<Tensor> bg_features = model_->encode(bg_input, config_.flfe, kTrainFrozenStats);
        fa = LossTerm{fa_loss(features.back(), bg_features.back(), omega, fa_cfg.detach_background), false};
      } catch (const SamplingExhausted&) {
        sampler_.record_exhausted(fa_cfg.max_attempts);
      }
    }
  }
  if (config_.ec) {
    const ECConfig ec_cfg = config_.ec_config();
    const GroundTruthKeypoints gt = ground_truth_keypoints(patch, config_.num_classes, ec_cfg);
    const Tensor m_pred = sigmoid(out.boundary_logits);
    std::vector<Coord3> truth_points;
    for (const auto& p : gt.retained) truth_points.push_back(p.pos);
    const LossTerm match = match_loss(m_pred, gt.truth);
    const LossTerm cont = continuity_loss(m_pred, predicted_keypoints(m_pred, ec_cfg), truth_points, ec_cfg.epsilon);
    ec = LossTerm{ec_loss(match, cont), match.skipped && cont.skipped};
  }
#else
  (void)volume_fg;
#endif
  const double lambda = ramp_lambda(iteration_, config_.iterations);
  const TotalLoss total = total_loss(sup, config_.fa ? fa : LossTerm{fa.value, true},
                                     config_.ec ? ec : LossTerm{ec.value, true}, lambda);
  LossBreakdown record = total.breakdown;
  // A switched-off module is not a skipped term.
  record.fa_skipped = config_.fa && fa.skipped;
  record.ec_skipped = config_.ec && ec.skipped;

  optimizer_.zero_grad();
  backward(total.total);
  optimizer_.step();
  ++iteration_;
  return record;
}

void Trainer::run(std::optional<long> until) {
  const long stop = std::min(until.value_or(config_.iterations), config_.iterations);
  std::filesystem::create_directories(config_.out_dir);
  const auto log_path = config_.out_dir / "train_log.jsonl";
  const auto sampler_path = config_.out_dir / "sampler_log.jsonl";
  truncate_log(log_path, iteration_);
  if (iteration_ == 0) std::ofstream(sampler_path, std::ios::trunc);
  std::ofstream log(log_path, std::ios::app);
  std::ofstream sampler_log(sampler_path, std::ios::app);
  const long epoch = static_cast<long>(volumes_.size());

  auto flush_sampler = [&](long t) {
    if (!config_.fa) return;
    sampler_log << json{{"epoch", (t - 1) / epoch},
                        {"iterations_through", t},
                        {"draws", sampler_.draws},
                        {"accepted", sampler_.accepted},
                        {"exhausted", sampler_.exhausted},
                        {"no_foreground", fa_no_foreground_},
                        {"acceptance_rate", sampler_.acceptance_rate()},
                        {"mean_overlap", sampler_.mean_overlap()}}
                       .dump()
                << '\n';
    sampler_ = SamplerStats{};
    fa_no_foreground_ = 0;
  };

  while (iteration_ < stop) {
    const long t = iteration_;
    const std::string rng_before = [&] {
      std::ostringstream s;
      s << rng_;
      return s.str();
    }();
    LossBreakdown record;
    try {
      record = step();
    } catch (const NumericError&) {
      std::istringstream(rng_before) >> rng_;
      save(config_.out_dir / "last_good.ckpt");
      throw;
    }
    log << json_line(record, t) << '\n';
    log.flush();
    if (iteration_ % epoch == 0) flush_sampler(iteration_);
    if (iteration_ % config_.checkpoint_every == 0) {
      save(config_.out_dir / ("checkpoint_" + std::to_string(iteration_) + ".ckpt"));
    }
  }
  if (iteration_ % epoch != 0) flush_sampler(iteration_);
  if (iteration_ == config_.iterations) save(config_.out_dir / "model.ckpt");
}

void Trainer::save(const std::filesystem::path& path) const {
  std::ostringstream rng_text;
  rng_text << rng_;
  const json header{{"iteration", iteration_},
                    {"rng_state", rng_text.str()},
                    {"config_hash", config_.hash()},
                    {"config", config_.to_json()}};
  write_checkpoint(path, header, snapshot(state_, optimizer_));
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const CheckpointFile file = read_checkpoint(checkpoint);
  if (file.header.value("config_hash", "") != config_.hash()) {
    throw ConfigError("resume: checkpoint " + checkpoint.string() + " was written by a different configuration");
  }
  StateRefs state = state_;
  restore_model(file, state);
  for (std::size_t k = 0; k < state_.parameters.size(); ++k) {
    copy_into(file.array("momentum/" + state_.parameters[k].name), optimizer_.momentum()[k]);
  }
  std::istringstream(file.header.at("rng_state").get<std::string>()) >> rng_;
  iteration_ = file.header.at("iteration").get<long>();
  sampler_ = SamplerStats{};
  fa_no_foreground_ = 0;
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const CheckpointFile file = read_checkpoint(checkpoint);
  LoadedModel out;
  out.config = RunConfig::from_json(file.header.at("config"));
  if (!modules_compiled()) out.config.fa = out.config.flfe = out.config.ec = false;
  out.model = std::make_unique<UNet3D>(out.config.unet());
  StateRefs state = out.model->state();
  if (!modules_compiled()) {
    // Optional-module arrays are simply not read.
  }
  restore_model(file, state);
  out.iteration = file.header.at("iteration").get<long>();
  return out;
}

}  // namespace FASS_MODEL_NS
}  // namespace fass
