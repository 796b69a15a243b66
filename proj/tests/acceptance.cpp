// Acceptance suite: one PASS/FAIL line per criterion.
//
// Criterion 9 (the multi-seed phantom study) is first costed with a timing
// probe. The full study runs only when the projection fits the time budget
// or FASS_STUDY_FULL=1 is set. Its verdict is printed either way but does not
// affect the exit status, which covers the criteria checked in full here.

#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "baseline_probe.hpp"
#include "fass/edge.hpp"
#include "fass/fa.hpp"
#include "fass/flfe.hpp"
#include "fass/inference.hpp"
#include "fass/losses.hpp"
#include "fass/metrics.hpp"
#include "fass/ops.hpp"
#include "fass/parallel.hpp"
#include "fass/trainer.hpp"
#include "fass/wavelet.hpp"
#include "metric_oracle.hpp"
#include "oracles.hpp"
#include "run_fixtures.hpp"
#include "scenarios.hpp"

using namespace fass;

namespace {

// Tolerances and budgets.
constexpr double kRoundTripTol = 1e-4;
constexpr double kRoundTripSeconds = 5.0;
constexpr double kHaarDetailTol = 1e-6;
constexpr double kHaarApproxTol = 1e-5;
constexpr float kFdStep = 1e-3f;
constexpr double kFdRelTol = 1e-2;
constexpr double kGradientSeconds = 60.0;
constexpr double kFaAlpha = 0.1;
constexpr int kFaDraws = 10000;
constexpr double kChiSquareSignificance = 0.01;
constexpr int kNmsInstances = 1000;
constexpr int kNmsMaxPoints = 500;
constexpr int kMetricPairs = 200;
constexpr double kMetricTol = 1e-6;
constexpr double kJaccardIdentityTol = 1e-9;
constexpr double kLambdaZero = 6.7379e-4;
constexpr double kLambdaZeroTol = 1e-8;
constexpr long kLambdaSweep = 2000;
constexpr double kDeterminismTol = 1e-7;
constexpr int kStudySeeds = 5;
constexpr int kStudyTrain = 20;
constexpr int kStudyTest = 5;
constexpr double kStudyMarginFull = 2.0;
constexpr double kStudyMarginSingle = 1.0;
constexpr double kStudyMinutes = 45.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m;
}

Verdict wavelet_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (const auto& name : WaveletBasis::names()) {
    const WaveletBasis b = WaveletBasis::named(name);
    for (const auto& [rows, cols] : {std::pair{16, 16}, std::pair{17, 19}}) {
      for (int i = 0; i < 100; ++i) {
        const Tensor x = oracle::random_tensor({1, 1, rows, cols}, rng);
        worst = std::max(worst, max_abs_diff(idwt_slicewise(dwt_slicewise(x, b), b), x));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kRoundTripTol && secs < kRoundTripSeconds,
          fmt("max |idwt(dwt(x)) - x| = %.2e (tol %.0e) over 4 bases x 200 slices, %.2f s (limit %.0f s)", worst,
              kRoundTripTol, secs, kRoundTripSeconds)};
}

Verdict haar_constant() {
  const WaveletBasis haar = WaveletBasis::named("haar");
  double detail = 0.0, approx_err = 0.0;
  for (float c : {-1.5f, 0.0f, 0.3f, 2.0f}) {
    const Tensor x = Tensor::full({1, 1, 8, 8}, c);
    const SubbandSet s = dwt_slicewise(x, haar);
    for (const Tensor* band : {&s.H, &s.V, &s.D}) {
      for (float v : band->data()) detail = std::max(detail, static_cast<double>(std::abs(v)));
    }
    // Reference: rows then columns through the 1D analysis filter bank.
    const auto row = oracle::filter_bank_1d(std::vector<double>(8, c), haar.dec_lo);
    const double expected = oracle::filter_bank_1d(std::vector<double>(8, row[0]), haar.dec_lo)[0];
    for (float v : s.L.data()) {
      approx_err = std::max({approx_err, std::abs(v - expected), std::abs(v - 2.0 * c)});
    }
  }
  return {detail < kHaarDetailTol && approx_err <= kHaarApproxTol,
          fmt("max |detail| = %.1e (tol %.0e), max |L - 2c| = %.1e (tol %.0e)", detail, kHaarDetailTol, approx_err,
              kHaarApproxTol)};
}

std::vector<std::uint8_t> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<std::uint8_t> out(n);
  for (auto& l : out) l = static_cast<std::uint8_t>(u(rng));
  return out;
}

Mask random_mask(const Dims3& d, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution on(p);
  Mask m(d);
  for (auto& v : m.values) v = on(rng);
  return m;
}

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(3);
  using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
  std::vector<std::pair<std::string, double>> results;
  auto check = [&](const std::string& name, const Fn& fn, std::vector<Tensor> inputs) {
    results.emplace_back(name, oracle::gradient_relative_error(fn, std::move(inputs), kFdStep));
  };

  const auto labels = random_labels(64, 3, rng);
  check("dice_loss", [&](const auto& in) { return dice_loss(softmax(in[0], 0), labels); },
        {oracle::random_tensor({3, 4, 4, 4}, rng, -2, 2)});
  check("ce_loss", [&](const auto& in) { return ce_loss(in[0], labels); },
        {oracle::random_tensor({3, 4, 4, 4}, rng, -2, 2)});
  check("fa_loss", [](const auto& in) { return fa_loss(in[0], in[1], 0.6); },
        {oracle::random_tensor({4, 2, 2, 2}, rng, -2, 2), oracle::random_tensor({4, 2, 2, 2}, rng, -2, 2)});

  const Mask truth = random_mask({6, 6, 6}, 0.25, rng);
  const std::vector<Coord3> pred{{1, 1, 1}, {1, 2, 4}, {3, 3, 3}, {5, 0, 2}};
  const std::vector<Coord3> truth_pts{{0, 0, 0}, {4, 4, 4}};
  check("match_loss", [&](const auto& in) { return match_loss(sigmoid(in[0]), truth).value; },
        {oracle::random_tensor({1, 6, 6, 6}, rng, -2, 2)});
  check("continuity_loss", [&](const auto& in) { return continuity_loss(sigmoid(in[0]), pred, truth_pts).value; },
        {oracle::random_tensor({1, 6, 6, 6}, rng, -2, 2)});
  check("ec_loss",
        [&](const auto& in) {
          const Tensor m = sigmoid(in[0]);
          return ec_loss(match_loss(m, truth), continuity_loss(m, pred, truth_pts));
        },
        {oracle::random_tensor({1, 6, 6, 6}, rng, -2, 2)});

  const auto labels2 = random_labels(8, 2, rng);
  const Tensor x = oracle::random_tensor({1, 2, 2, 2}, rng, -2, 2);
  check("total_loss",
        [&](const auto& in) {
          const Tensor l = mul(expand(in[0], {2, 2, 2, 2}), concat0({x, scale(x, -1.0f)}));
          const Tensor p = softmax(l, 0);
          return total_loss(supervised_loss(l, labels2), {sum(mul(p, p)), false}, {mean(sigmoid(l)), false}, 0.07)
              .total;
        },
        {oracle::random_tensor({2, 1, 1, 1}, rng)});

  for (const char* name : {"haar", "db2", "coif1"}) {
    std::mt19937_64 level_rng(9);
    FlfeLevel level(1, 2, WaveletBasis::named(name), level_rng);
    const Tensor weights = oracle::random_tensor({2, 2, 4, 4}, level_rng);
    check(std::string("flfe/") + name,
          [&](const auto& in) { return sum(mul(level.forward(in[0], in[1], {true, false}), weights)); },
          {oracle::random_tensor({1, 4, 8, 8}, level_rng), oracle::random_tensor({2, 2, 4, 4}, level_rng)});
  }

  const double secs = seconds_since(t0);
  bool ok = secs < kGradientSeconds;
  std::string worst_name;
  double worst = 0.0;
  for (const auto& [name, err] : results) {
    ok = ok && err < kFdRelTol;
    if (err >= worst) worst = err, worst_name = name;
  }
  return {ok, fmt("%zu checks, worst relative error %.2e (%s, tol %.0e, step %.0e), %.1f s (limit %.0f s)",
                  results.size(), worst, worst_name.c_str(), kFdRelTol, static_cast<double>(kFdStep), secs,
                  kGradientSeconds)};
}

Verdict fa_sampler() {
  const Volume patch = scenario::fa_reference_patch();
  const Mask fg = patch.foreground();
  FAConfig cfg;
  cfg.alpha = kFaAlpha;
  const std::vector<Coord3> feasible = oracle::feasible_origins(fg, cfg.bg_size, cfg.alpha);
  const BoxCounter counter(fg);
  std::mt19937_64 rng(5);
  std::map<Coord3, int> hits;
  double max_overlap = 0.0;
  for (int i = 0; i < kFaDraws; ++i) {
    const BackgroundPatch bg = sample_background(counter, cfg, rng);
    max_overlap = std::max(max_overlap, oracle::box_count(fg, bg.origin, cfg.bg_size) /
                                            static_cast<double>(dims_volume(cfg.bg_size)));
    ++hits[bg.origin];
  }
  std::set<Coord3> accepted;
  for (const auto& [o, n] : hits) accepted.insert(o);
  const bool same_set = accepted == std::set<Coord3>(feasible.begin(), feasible.end());

  const double expected = static_cast<double>(kFaDraws) / static_cast<double>(feasible.size());
  double chi2 = 0.0;
  for (const Coord3& o : feasible) {
    const double n = hits.contains(o) ? hits[o] : 0;
    chi2 += (n - expected) * (n - expected) / expected;
  }
  const boost::math::chi_squared dist(static_cast<double>(feasible.size() - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  return {max_overlap < kFaAlpha && same_set && p > kChiSquareSignificance,
          fmt("%d draws, max overlap %.6f (< %.1f), accepted %zu / oracle %zu origins%s, chi2 p = %.3f (> %.2f)",
              kFaDraws, max_overlap, kFaAlpha, accepted.size(), feasible.size(), same_set ? " (identical)" : " (DIFFER)",
              p, kChiSquareSignificance)};
}

Verdict nms_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(1, kNmsMaxPoints), extent(3, 40), levels(2, 50);
  int mismatches = 0;
  for (int trial = 0; trial < kNmsInstances; ++trial) {
    const int n = count(rng), e = extent(rng), l = levels(rng);
    std::uniform_int_distribution<int> c(0, e - 1), s(0, l - 1);
    std::vector<BoundaryPoint> pts;
    for (int i = 0; i < n; ++i) pts.push_back({{c(rng), c(rng), c(rng)}, 0.0, static_cast<double>(s(rng)) / l});
    for (int k : {1, 3, 10}) {
      const auto a = nms_filter(pts, k);
      const auto b = oracle::nms_brute(pts, k);
      bool same = a.size() == b.size();
      for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i].pos == b[i].pos && a[i].score == b[i].score;
      mismatches += !same;
    }
  }
  return {mismatches == 0, fmt("%d instances of <= %d points, k in {1,3,10}: %d mismatching retained sets",
                               kNmsInstances, kNmsMaxPoints, mismatches)};
}

Verdict metric_oracle_check() {
  std::mt19937_64 rng(6);
  double worst = 0.0, identity = 0.0;
  for (int trial = 0; trial < kMetricPairs; ++trial) {
    const metric_oracle::Case c = metric_oracle::random_case(rng);
    const PairMetrics r = evaluate_pair(c.pred, c.truth, c.spacing);
    const metric_oracle::Result o = metric_oracle::evaluate(c.pred, c.truth, c.spacing);
    worst = std::max({worst, std::abs(r.dice - o.dice), std::abs(r.jaccard - o.jaccard), std::abs(r.hd95_mm - o.hd95),
                      std::abs(r.asd_mm - o.asd)});
    identity = std::max(identity, std::abs(r.jaccard - r.dice / (200.0 - r.dice) * 100.0));
  }
  return {worst <= kMetricTol && identity <= kJaccardIdentityTol,
          fmt("%d pairs <= 12^3: max deviation from all-pairs oracle %.1e (tol %.0e), max |J - D/(2-D)| %.1e",
              kMetricPairs, worst, kMetricTol, identity)};
}

Verdict warmup_schedule() {
  const double end = ramp_lambda(kLambdaSweep, kLambdaSweep);
  const double start = ramp_lambda(0, kLambdaSweep);
  bool monotone = true;
  for (long t = 1; t <= kLambdaSweep; ++t) monotone = monotone && ramp_lambda(t, kLambdaSweep) >= ramp_lambda(t - 1, kLambdaSweep);
  return {end == 0.1 && std::abs(start - kLambdaZero) <= kLambdaZeroTol && monotone,
          fmt("lambda(t_max) = %.17g, lambda(0) = %.8e (|diff| %.1e, tol %.0e), monotone over 0..%ld: %s", end, start,
              std::abs(start - kLambdaZero), kLambdaZeroTol, kLambdaSweep, monotone ? "yes" : "no")};
}

RunConfig small_run(const std::filesystem::path& out) {
  RunConfig c;
  c.iterations = 20;
  c.checkpoint_every = 10;
  c.patch = {32, 32, 32};
  c.base_channels = 4;
  c.bg_size = {16, 16, 16};
  c.seed = 21;
  c.out_dir = out;
  return c;
}

std::vector<Volume> small_volumes() {
  std::vector<Volume> out;
  for (std::uint64_t s = 0; s < 2; ++s) {
    PhantomSpec spec;
    spec.dims = {48, 48, 48};
    spec.seed = 500 + s;
    out.push_back(generate_phantom(spec));
    standardize_intensities(out.back());
  }
  return out;
}

Verdict ablation_contract() {
  fixture::TempDir dir("accept_ablation");
  const auto volumes = small_volumes();
  RunConfig cfg = small_run(dir.path() / "full");
  cfg.fa = cfg.flfe = cfg.ec = false;
  Trainer(cfg, volumes).run();
  const std::string full = fixture::read_text(cfg.out_dir / "train_log.jsonl");
  const std::string base = probe::baseline_train_log(cfg.to_json(), volumes, dir.path() / "baseline");
  bool zeros = true;
  const auto lines = fixture::read_jsonl(cfg.out_dir / "train_log.jsonl");
  for (const auto& l : lines) zeros = zeros && l.at("L_D") == 0.0 && l.at("L_EC") == 0.0;
  return {!probe::baseline_modules_compiled() && full == base && zeros && lines.size() == 20,
          fmt("%zu iterations: full build (switches off) vs modules-compiled-out build logs %s (%zu bytes), "
              "L_D = L_EC = 0 throughout: %s",
              lines.size(), full == base ? "bitwise identical" : "DIFFER", full.size(), zeros ? "yes" : "no")};
}

double max_log_diff(const std::vector<nlohmann::json>& a, const std::vector<nlohmann::json>& b, std::size_t n) {
  double worst = (a.size() < n || b.size() < n) ? INFINITY : 0.0;
  for (std::size_t i = 0; i < std::min({n, a.size(), b.size()}); ++i) {
    for (const char* key : {"L_sup", "L_D", "L_EC", "lambda", "L_total"}) {
      worst = std::max(worst, std::abs(a[i].at(key).get<double>() - b[i].at(key).get<double>()));
    }
  }
  return worst;
}

Verdict determinism() {
  fixture::TempDir dir("accept_det");
  const auto volumes = small_volumes();
  RunConfig a = small_run(dir.path() / "a"), b = small_run(dir.path() / "b"), c = small_run(dir.path() / "c");
  Trainer(a, volumes).run();
  Trainer(b, volumes).run(10);
  const auto log_a = fixture::read_jsonl(a.out_dir / "train_log.jsonl");
  const double repeat = max_log_diff(log_a, fixture::read_jsonl(b.out_dir / "train_log.jsonl"), 10);

  Trainer(c, volumes).run(15);
  Trainer resumed(c, volumes);
  resumed.resume(c.out_dir / "checkpoint_10.ckpt");
  resumed.run();
  const double resume = max_log_diff(log_a, fixture::read_jsonl(c.out_dir / "train_log.jsonl"), 20);
  return {repeat <= kDeterminismTol && resume <= kDeterminismTol,
          fmt("all modules on: repeat run first 10 losses max |diff| %.1e, resume at 10 vs uninterrupted over 20 "
              "iterations max |diff| %.1e (tol %.0e)",
              repeat, resume, kDeterminismTol)};
}

// Phantom study.

struct Variant {
  const char* name;
  bool fa, flfe, ec;
};
constexpr Variant kVariants[] = {{"baseline", false, false, false},
                                 {"fa", true, false, false},
                                 {"flfe", false, true, false},
                                 {"ec", false, false, true},
                                 {"full", true, true, true}};

std::vector<Volume> study_phantoms(int seed, int first, int count) {
  std::vector<Volume> out;
  for (int i = first; i < first + count; ++i) {
    PhantomSpec spec;
    spec.seed = static_cast<std::uint64_t>(seed) * 1000 + static_cast<std::uint64_t>(i);
    out.push_back(generate_phantom(spec));
    standardize_intensities(out.back());
  }
  return out;
}

RunConfig study_config(const Variant& v, int seed, const std::filesystem::path& out) {
  RunConfig c;
  c.fa = v.fa;
  c.flfe = v.flfe;
  c.ec = v.ec;
  c.seed = static_cast<std::uint64_t>(seed);
  c.out_dir = out;
  c.checkpoint_every = c.iterations;
  return c;
}

Verdict phantom_study() {
  const bool forced = [] {
    const char* e = std::getenv("FASS_STUDY_FULL");
    return e != nullptr && std::string(e) == "1";
  }();
  fixture::TempDir dir("accept_study");

  // Cost probe: two timed iterations per variant after one warm-up, plus one
  // full-volume segmentation with and without FLFE.
  const auto probe_train = study_phantoms(0, 0, 1);
  const auto probe_test = study_phantoms(0, kStudyTrain, 1);
  double train_seconds = 0.0;
  std::string per_variant;
  for (const Variant& v : kVariants) {
    Trainer t(study_config(v, 0, dir.path() / "probe"), probe_train);
    t.step();
    const auto t0 = std::chrono::steady_clock::now();
    t.step();
    t.step();
    const double per_iter = seconds_since(t0) / 2.0;
    per_variant += fmt("%s %.1f s, ", v.name, per_iter);
    train_seconds += per_iter * static_cast<double>(RunConfig{}.iterations);
  }
  double eval_seconds = 0.0;
  for (bool flfe : {false, true}) {
    RunConfig c = study_config(kVariants[flfe ? 2 : 0], 0, dir.path() / "probe");
    UNet3D model(c.unet());
    const auto t0 = std::chrono::steady_clock::now();
    segment(model, c, probe_test[0]);
    // Baseline, FA and EC evaluate without FLFE; FLFE and full with it.
    eval_seconds += seconds_since(t0) * (flfe ? 2.0 : 3.0) * kStudyTest;
  }
  const double projected_minutes = kStudySeeds * (train_seconds + eval_seconds) / 60.0;
  const std::string probe_note =
      fmt("per-iteration %son %d worker thread(s); projected %.0f min (limit %.0f min)", per_variant.c_str(),
          worker_count(), projected_minutes, kStudyMinutes);
  if (!forced && projected_minutes > kStudyMinutes) {
    return {false, "not run: " + probe_note + "; set FASS_STUDY_FULL=1 to run it anyway"};
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, std::vector<double>> tumor_dice;
  for (int seed = 0; seed < kStudySeeds; ++seed) {
    const auto train = study_phantoms(seed, 0, kStudyTrain);
    const auto test = study_phantoms(seed, kStudyTrain, kStudyTest);
    for (const Variant& v : kVariants) {
      const RunConfig c = study_config(v, seed, dir.path() / fmt("%s_%d", v.name, seed));
      Trainer t(c, train);
      t.run();
      const double dice = evaluate_model(t.model(), c, test).aggregate("dice", 2).mean;
      tumor_dice[v.name].push_back(dice);
      std::printf("  study seed %d %-8s tumor Dice %.2f\n", seed, v.name, dice);
      std::fflush(stdout);
    }
  }
  const double minutes = seconds_since(t0) / 60.0;
  auto mean_of = [&](const char* n) { return mean_std(tumor_dice[n]).mean; };
  const double base = mean_of("baseline"), full = mean_of("full");
  const bool singles_ok = mean_of("fa") >= base - kStudyMarginSingle && mean_of("flfe") >= base - kStudyMarginSingle &&
                          mean_of("ec") >= base - kStudyMarginSingle;
  return {full - base >= kStudyMarginFull && singles_ok && minutes < kStudyMinutes,
          fmt("tumor Dice baseline %.2f, fa %.2f, flfe %.2f, ec %.2f, full %.2f (full - baseline %.2f, need >= %.0f); "
              "%.1f min (limit %.0f min)",
              base, mean_of("fa"), mean_of("flfe"), mean_of("ec"), full, full - base, kStudyMarginFull, minutes,
              kStudyMinutes)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
    bool gates_exit;
  };
  const Criterion criteria[] = {
      {1, "wavelet round-trip", wavelet_round_trip, true},
      {2, "haar on constant", haar_constant, true},
      {3, "gradient suite", gradient_suite, true},
      {4, "FA sampler", fa_sampler, true},
      {5, "NMS oracle equivalence", nms_oracle, true},
      {6, "metric oracle equivalence", metric_oracle_check, true},
      {7, "warm-up schedule", warmup_schedule, true},
      {8, "ablation contract", ablation_contract, true},
      {9, "phantom study", phantom_study, false},
      {10, "determinism", determinism, true},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass && c.gates_exit) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
