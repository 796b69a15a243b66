#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "fass/edge.hpp"
#include "fass/errors.hpp"
#include "fass/inference.hpp"
#include "fass/phantom.hpp"
#include "fass/trainer.hpp"
#include "fass/wavelet.hpp"

namespace fs = std::filesystem;
using namespace fass;

namespace {

// Applies trailing `--key value` / `--key=value` arguments to the config.
void apply_overrides(RunConfig& cfg, std::vector<std::string> extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string arg = extras[i];
    if (!arg.starts_with("--")) throw ConfigError("unexpected argument '" + arg + "'");
    arg = arg.substr(2);
    std::string value;
    if (const auto eq = arg.find('='); eq != std::string::npos) {
      value = arg.substr(eq + 1);
      arg = arg.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("--" + arg + " needs a value");
      value = extras[++i];
    }
    cfg.set(arg, value);
  }
}

RunConfig build_config(const std::string& config_file, const std::vector<std::string>& extras) {
  RunConfig cfg = config_file.empty() ? RunConfig{} : RunConfig::load(config_file);
  apply_overrides(cfg, extras);
  cfg.validate();
  return cfg;
}

void write_pgm(const fs::path& path, const std::vector<float>& values, int rows, int cols) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const float span = *hi - *lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (float v : values) {
    const float t = span > 0.0f ? (v - *lo) / span : 0.0f;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0f * t))));
  }
}

std::uint64_t volume_seed(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{modules_compiled() ? "Phantom segmentation with feature adversarial, wavelet and edge modules"
                                  : "Phantom segmentation, plain U-Net build"};
  app.require_subcommand(1);
  app.failure_message([](const CLI::App*, const CLI::Error& e) { return std::string(e.what()) + "\n"; });

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic phantom volumes");
  int gen_count = 1;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_prefix = "phantom";
  int gen_dims = 96;
  gen->add_option("--count", gen_count, "Number of volumes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Base seed");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--dims", gen_dims, "Cubic extent in voxels")->check(CLI::PositiveNumber);
  gen->add_option("--prefix", gen_prefix, "File name prefix");

  // train
  auto* train = app.add_subcommand("train", "Train a model; other --key value pairs override the config");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "JSON config file")->check(CLI::ExistingFile);
  train->add_option("--resume", train_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->allow_extras();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a test directory");
  std::string eval_ckpt, eval_dir, eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--test-dir", eval_dir, "Directory of labelled volumes")->required();
  eval->add_option("--out", eval_out, "Also write the report here");

  // infer
  auto* infer = app.add_subcommand("infer", "Segment one volume");
  std::string infer_ckpt, infer_in, infer_out;
  infer->add_option("--checkpoint", infer_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", infer_in, "Input volume (path without extension)")->required();
  infer->add_option("--output", infer_out, "Output volume (path without extension)")->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train and evaluate one run per parameter value");
  std::string sw_param, sw_config, sw_csv;
  std::vector<std::string> sw_values;
  sw->add_option("--param", sw_param, "alpha, wavelet or bg_size")->required();
  sw->add_option("--values", sw_values, "Values to sweep (default depends on the parameter)")->delimiter(',');
  sw->add_option("--config", sw_config, "JSON config file")->check(CLI::ExistingFile);
  sw->add_option("--csv", sw_csv, "CSV output (default <out_dir>/sweep_<param>.csv)");
  sw->allow_extras();

  // dwt
  auto* dwt = app.add_subcommand("dwt", "Dump the subbands of one axial slice as PGM images");
  std::string dwt_in, dwt_out, dwt_wavelet = "db2";
  int dwt_slice = -1;
  dwt->add_option("--input", dwt_in, "Input volume")->required();
  dwt->add_option("--out", dwt_out, "Output directory")->required();
  dwt->add_option("--wavelet", dwt_wavelet, "haar, db2, coif1 or bior2.4");
  dwt->add_option("--slice", dwt_slice, "Axial slice index (default: middle)");

  // keypoints
  auto* kp = app.add_subcommand("keypoints", "Write the retained boundary keypoints as CSV (x,y,z,p,s)");
  std::string kp_in, kp_out, kp_edges = "mask";
  int kp_classes = 3;
  ECConfig kp_cfg;
  kp->add_option("--input", kp_in, "Input volume")->required();
  kp->add_option("--out", kp_out, "CSV output (default: stdout)");
  kp->add_option("--num-classes", kp_classes, "Label classes including background");
  kp->add_option("--ec-radius", kp_cfg.radius, "Ball radius for p");
  kp->add_option("--ec-k", kp_cfg.k, "NMS neighbourhood size");
  kp->add_option("--ec-edges", kp_edges, "mask or image")->check(CLI::IsMember({"mask", "image"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      fs::create_directories(gen_out);
      for (int i = 0; i < gen_count; ++i) {
        PhantomSpec spec;
        spec.dims = {gen_dims, gen_dims, gen_dims};
        spec.seed = volume_seed(gen_seed, i);
        char name[32];
        std::snprintf(name, sizeof name, "_%03d", i);
        write_volume(generate_phantom(spec), fs::path(gen_out) / (gen_prefix + name));
      }
    } else if (*train) {
      const RunConfig cfg = build_config(train_config, train->remaining());
      Trainer trainer(cfg, load_volumes(cfg.train_dir));
      if (!train_resume.empty()) trainer.resume(train_resume);
      fs::create_directories(cfg.out_dir);
      std::ofstream(cfg.out_dir / "config.json") << cfg.to_json().dump(2) << '\n';
      trainer.run();
    } else if (*eval) {
      const auto report = evaluate_checkpoint(eval_ckpt, eval_dir).to_json().dump(2);
      std::cout << report << '\n';
      if (!eval_out.empty()) std::ofstream(eval_out) << report << '\n';
    } else if (*infer) {
      infer_volume(infer_ckpt, infer_in, infer_out);
    } else if (*sw) {
      const RunConfig cfg = build_config(sw_config, sw->remaining());
      const auto values = sw_values.empty() ? default_sweep_values(sw_param) : sw_values;
      const fs::path csv = sw_csv.empty() ? cfg.out_dir / ("sweep_" + sw_param + ".csv") : fs::path(sw_csv);
      sweep(cfg, sw_param, values, csv);
    } else if (*dwt) {
      const Volume v = read_volume(dwt_in);
      const int z = dwt_slice < 0 ? v.dims[0] / 2 : dwt_slice;
      if (z >= v.dims[0]) throw DimensionError("slice " + std::to_string(z) + " outside the volume");
      const std::size_t plane = static_cast<std::size_t>(v.dims[1]) * v.dims[2];
      std::vector<float> slice(v.intensities.begin() + static_cast<std::ptrdiff_t>(z * plane),
                               v.intensities.begin() + static_cast<std::ptrdiff_t>((z + 1) * plane));
      const Tensor t = Tensor::from({1, 1, v.dims[1], v.dims[2]}, std::move(slice));
      const SubbandSet bands = dwt_slicewise(t, WaveletBasis::named(dwt_wavelet));
      fs::create_directories(dwt_out);
      for (auto [b, tag] : {std::pair{Subband::L, "L"}, {Subband::H, "H"}, {Subband::V, "V"}, {Subband::D, "D"}}) {
        const Tensor& band = bands.band(b);
        write_pgm(fs::path(dwt_out) / (std::string(tag) + ".pgm"), band.to_vector(), band.shape()[2], band.shape()[3]);
      }
    } else if (*kp) {
      kp_cfg.source = kp_edges == "image" ? EdgeSource::Image : EdgeSource::Mask;
      kp_cfg.validate();
      const GroundTruthKeypoints gt = ground_truth_keypoints(read_volume(kp_in), kp_classes, kp_cfg);
      std::ofstream file;
      if (!kp_out.empty()) {
        file.open(kp_out);
        if (!file) throw std::runtime_error("cannot write " + kp_out);
      }
      std::ostream& out = kp_out.empty() ? std::cout : file;
      out << "x,y,z,p,s\n";
      for (const auto& p : gt.retained) {
        out << p.pos[2] << ',' << p.pos[1] << ',' << p.pos[0] << ',' << p.ratio << ',' << p.score << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << fs::path(argv[0]).filename().string() << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
