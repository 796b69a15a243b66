#include "fass/config.hpp"

#include <fstream>
#include <sstream>

#include "fass/checkpoint.hpp"
#include "fass/errors.hpp"
#include "fass/wavelet.hpp"

namespace fass {
inline namespace FASS_MODEL_NS {

namespace {

using nlohmann::json;

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected on or off, got '" + v + "'");
}

Dims3 parse_extent(const std::string& key, const std::string& v) {
  std::vector<int> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected n or d,h,w, got '" + v + "'");
    }
  }
  if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
  if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
  throw ConfigError(key + ": expected n or d,h,w, got '" + v + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(std::stod(v, &used));
    } else if constexpr (std::is_unsigned_v<T>) {
      out = static_cast<T>(std::stoull(v, &used));
    } else {
      out = static_cast<T>(std::stoll(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + v + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(iterations > 0, "iterations must be positive");
  require(lr > 0.0f, "lr must be positive");
  require(momentum >= 0.0f && momentum < 1.0f, "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0f, "weight_decay must be non-negative");
  require(checkpoint_every > 0, "checkpoint_every must be positive");
  for (int a = 0; a < 3; ++a) {
    require(patch[a] > 0 && patch[a] % 8 == 0, "patch extents must be positive multiples of 8");
    require(bg_size[a] > 0 && bg_size[a] <= patch[a], "bg_size must fit inside the patch");
  }
  require(base_channels >= 1, "base_channels must be positive");
  require(num_classes >= 2 && num_classes <= 255, "num_classes must lie in [2, 255]");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(fa_max_attempts >= 1, "fa_max_attempts must be positive");
  require(ec_edges == "mask" || ec_edges == "image", "ec_edges must be mask or image");
  require(eval_stride >= 0, "eval_stride must be non-negative");
  WaveletBasis::named(wavelet);
  ec_config().validate();
  if (!modules_compiled() && (fa || flfe || ec)) {
    throw ConfigError("config: FA, FLFE and EC are not compiled into this build");
  }
}

UNetConfig RunConfig::unet() const {
  UNetConfig u;
  u.base_channels = base_channels;
  u.num_classes = num_classes;
  u.wavelet = wavelet;
  u.seed = seed;
  return u;
}

FAConfig RunConfig::fa_config() const {
  FAConfig f;
  f.alpha = alpha;
  f.bg_size = bg_size;
  f.max_attempts = fa_max_attempts;
  f.detach_background = fa_detach_bg;
  return f;
}

ECConfig RunConfig::ec_config() const {
  ECConfig e;
  e.radius = ec_radius;
  e.k = ec_k;
  e.truth_radius = ec_truth_radius;
  e.source = ec_edges == "image" ? EdgeSource::Image : EdgeSource::Mask;
  return e;
}

SgdConfig RunConfig::sgd() const { return SgdConfig{lr, momentum, weight_decay}; }

Dims3 RunConfig::stride() const {
  if (eval_stride > 0) return {eval_stride, eval_stride, eval_stride};
  return {patch[0] / 2, patch[1] / 2, patch[2] / 2};
}

json RunConfig::to_json() const {
  return json{{"iterations", iterations},
              {"lr", lr},
              {"momentum", momentum},
              {"weight_decay", weight_decay},
              {"checkpoint_every", checkpoint_every},
              {"patch", patch},
              {"base_channels", base_channels},
              {"num_classes", num_classes},
              {"augment", augment},
              {"wavelet", wavelet},
              {"fa", fa},
              {"flfe", flfe},
              {"ec", ec},
              {"alpha", alpha},
              {"bg_size", bg_size},
              {"fa_max_attempts", fa_max_attempts},
              {"fa_detach_bg", fa_detach_bg},
              {"ec_radius", ec_radius},
              {"ec_k", ec_k},
              {"ec_truth_radius", ec_truth_radius},
              {"ec_edges", ec_edges},
              {"eval_stride", eval_stride},
              {"seed", seed},
              {"train_dir", train_dir.string()},
              {"test_dir", test_dir.string()},
              {"out_dir", out_dir.string()}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  const json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("iterations", c.iterations);
    get("lr", c.lr);
    get("momentum", c.momentum);
    get("weight_decay", c.weight_decay);
    get("checkpoint_every", c.checkpoint_every);
    get("patch", c.patch);
    get("base_channels", c.base_channels);
    get("num_classes", c.num_classes);
    get("augment", c.augment);
    get("wavelet", c.wavelet);
    get("fa", c.fa);
    get("flfe", c.flfe);
    get("ec", c.ec);
    get("alpha", c.alpha);
    get("bg_size", c.bg_size);
    get("fa_max_attempts", c.fa_max_attempts);
    get("fa_detach_bg", c.fa_detach_bg);
    get("ec_radius", c.ec_radius);
    get("ec_k", c.ec_k);
    get("ec_truth_radius", c.ec_truth_radius);
    get("ec_edges", c.ec_edges);
    get("eval_stride", c.eval_stride);
    get("seed", c.seed);
    std::string path;
    if (j.contains("train_dir")) c.train_dir = j.at("train_dir").get<std::string>();
    if (j.contains("test_dir")) c.test_dir = j.at("test_dir").get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot open " + file.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + file.string() + ": " + e.what());
  }
}

void RunConfig::set(const std::string& raw_key, const std::string& v) {
  std::string key = raw_key;
  for (char& ch : key)
    if (ch == '-') ch = '_';
  if (key == "iterations") iterations = parse_number<long>(key, v);
  else if (key == "lr") lr = parse_number<float>(key, v);
  else if (key == "momentum") momentum = parse_number<float>(key, v);
  else if (key == "weight_decay") weight_decay = parse_number<float>(key, v);
  else if (key == "checkpoint_every") checkpoint_every = parse_number<long>(key, v);
  else if (key == "patch") patch = parse_extent(key, v);
  else if (key == "base_channels") base_channels = parse_number<int>(key, v);
  else if (key == "num_classes") num_classes = parse_number<int>(key, v);
  else if (key == "augment") augment = parse_switch(key, v);
  else if (key == "wavelet") wavelet = v;
  else if (key == "fa") fa = parse_switch(key, v);
  else if (key == "flfe") flfe = parse_switch(key, v);
  else if (key == "ec") ec = parse_switch(key, v);
  else if (key == "alpha") alpha = parse_number<double>(key, v);
  else if (key == "bg_size") bg_size = parse_extent(key, v);
  else if (key == "fa_max_attempts") fa_max_attempts = parse_number<int>(key, v);
  else if (key == "fa_detach_bg") fa_detach_bg = parse_switch(key, v);
  else if (key == "ec_radius") ec_radius = parse_number<int>(key, v);
  else if (key == "ec_k") ec_k = parse_number<int>(key, v);
  else if (key == "ec_truth_radius") ec_truth_radius = parse_number<int>(key, v);
  else if (key == "ec_edges") ec_edges = v;
  else if (key == "eval_stride") eval_stride = parse_number<int>(key, v);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "train_dir") train_dir = v;
  else if (key == "test_dir") test_dir = v;
  else if (key == "out_dir") out_dir = v;
  else throw ConfigError("config: unknown key '" + raw_key + "'");
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("train_dir");
  j.erase("test_dir");
  j.erase("out_dir");
  return fnv1a_hex(j.dump());
}

}  // namespace FASS_MODEL_NS
}  // namespace fass
