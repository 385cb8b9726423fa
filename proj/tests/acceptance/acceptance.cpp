// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails. Training artefacts (logs, final
// checkpoints, metric reports) are left in the work directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dic/collaboration.hpp"
#include "dic/dataset.hpp"
#include "dic/fusion.hpp"
#include "dic/losses.hpp"
#include "dic/metrics.hpp"
#include "dic/synthetic.hpp"
#include "dic/train.hpp"
#include "support/scenarios.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dic;

// Pinned tolerances and budgets.
constexpr double kPartitionTol = 1e-6;
constexpr double kFusionIdentityTol = 1e-5;
constexpr double kRoundTripNrmse = 0.01;
constexpr double kInvariantSeconds = 60;
constexpr double kGradPassFraction = 0.95;
constexpr double kGradSeconds = 300;
constexpr double kPsnrGolden = 20.0, kPsnrTol = 0.01;
constexpr double kDLossGolden = 1.3863, kDLossTol = 1e-4;
constexpr double kNrmseGolden = 0.03906, kNrmseTol = 1e-5;
constexpr double kSoftmaxTol = 1e-6;
constexpr double kOverfitGainDb = 3.0;
constexpr double kAlignDrop = 10.0;
constexpr int kOverfitIters = 3000;
constexpr int kOverfitImages = 4;
constexpr double kOverfitSeconds = 4 * 3600;
constexpr int kAblationImages = 20;
constexpr int kAblationIters = 1000;
constexpr double kAblationBandDb = 0.1;
constexpr int kDeterminismIters = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Desk-scale network and schedule shared by the training criteria.
TrainConfig desk_config(const fs::path& out) {
  TrainConfig c;
  c.network.channels = 8;
  c.network.groups = 2;
  c.network.align_width = 64;
  c.network.hourglass_depth = 4;
  c.n_steps = 4;
  c.variant = Variant::DIC;
  c.lr = 1e-3;
  c.batch_size = 4;
  c.max_iters = kOverfitIters;
  c.augment = false;
  c.seed = 7;
  c.output_dir = out.string();
  return c;
}

std::vector<Sample> synthetic_split(const fs::path& dir, int count, std::uint64_t seed) {
  const fs::path manifest = write_synthetic_set(dir, {count, 0, 160, seed});
  std::vector<Sample> samples;
  for (const auto& e : Manifest::load(manifest).split(Split::Train)) samples.push_back(prepare_sample(e, {}));
  return samples;
}

struct TrainedRun {
  std::vector<IterationLog> log;
  std::unique_ptr<Trainer> trainer;
  double seconds = 0;
};

TrainedRun train(const TrainConfig& config, const std::vector<Sample>& samples, const std::string& tag) {
  fs::create_directories(config.output_dir);
  TrainedRun run;
  run.trainer = std::make_unique<Trainer>(config, samples);
  std::ofstream log(fs::path(config.output_dir) / "train_log.jsonl");
  const auto t0 = std::chrono::steady_clock::now();
  run.trainer->run(log, [&](const IterationLog& it) {
    run.log.push_back(it);
    if (it.iter % 250 == 0) {
      std::cerr << "  [" << tag << "] iter " << it.iter << " pixel " << fmt(it.pixel) << " align " << fmt(it.align)
                << " (" << fmt(seconds_since(t0), 3) << " s)\n";
    }
  });
  run.seconds = seconds_since(t0);
  return run;
}

void save_report(const fs::path& path, const EvalResult& r) {
  json reports = json::array();
  for (const auto& rep : r.reports) reports.push_back(to_json(rep));
  std::ofstream(path) << json{{"reports", reports}, {"mean", to_json(r.mean)}, {"bicubic", to_json(r.bicubic)}}.dump(2)
                      << '\n';
}

// ---------------------------------------------------------------------------

Outcome invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> failures;

  double partition_err = 0;
  bool nonnegative = true;
  const auto heat = testing::random_tensor<double>({3, kNumLandmarks, 32, 32}, 1, 0.0, 1.0);
  const Var<double> m = attention_softmax(group_components(Var<double>(heat)));
  const int hw = 32 * 32;
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < hw; ++i) {
      double s = 0;
      for (int p = 0; p < kNumComponents; ++p) {
        const double v = m.value()[(n * kNumComponents + p) * hw + i];
        nonnegative &= v >= 0;
        s += v;
      }
      partition_err = std::max(partition_err, std::abs(s - 1));
    }
  // The all-zero heatmap of the first step gives uniform weights.
  const Var<double> flat = attention_softmax(group_components(Var<double>(Tensor<double>({1, kNumLandmarks, 4, 4}))));
  for (double v : flat.value().vec()) partition_err = std::max(partition_err, std::abs(v - 0.2));
  if (partition_err > kPartitionTol || !nonnegative) failures.push_back("partition " + fmt(partition_err));

  const int c = 6;
  const auto f = testing::random_tensor<double>({2, c, 8, 8}, 2);
  std::vector<Var<double>> vars;
  for (int p = 0; p < kNumComponents; ++p) vars.emplace_back(f);
  const Var<double> groups = ag::concat_channels<double>(vars);
  const Var<double> att = attention_softmax(group_components(Var<double>(testing::random_tensor<double>({2, 68, 8, 8}, 3, 0, 1))));
  double identity_err = 0;
  const Var<double> fused = fuse_groups(groups, att);
  for (std::size_t i = 0; i < f.size(); ++i) identity_err = std::max(identity_err, std::abs(fused.value()[i] - f[i]));
  if (identity_err > kFusionIdentityTol) failures.push_back("fusion identity " + fmt(identity_err));

  const Var<double> all = mask_components(att, ComponentSet().set());
  const Var<double> none = fuse_groups(groups, mask_components(att, ComponentSet{}));
  std::vector<std::string> masking;
  if (all.value().vec() != att.value().vec()) masking.push_back("keep-all");
  for (double v : none.value().vec())
    if (v != 0.0) {
      masking.push_back("keep-none");
      break;
    }
  Rng rng(4);
  AttentiveFusion<double> fusion(c, 2, rng);
  const Var<double> heat8(testing::random_tensor<double>({2, 68, 8, 8}, 5, 0, 1));
  const Var<double> kept = fusion(Var<double>(f), heat8, ComponentSet().set());
  const Var<double> dropped = fusion(Var<double>(f), heat8, ComponentSet{});
  if (kept.value().vec() != fusion(Var<double>(f), heat8).value().vec()) masking.push_back("module keep-all");
  for (double v : dropped.value().vec())
    if (v != 0.0) {
      masking.push_back("module keep-none");
      break;
    }
  for (const auto& m : masking) failures.push_back("masking " + m);

  bool flip_ok = true;
  const auto& perm = flip_permutation();
  for (int k = 0; k < kNumLandmarks; ++k) flip_ok &= perm[perm[k]] == k;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const SyntheticFace face = synthesize_face(100 + seed);
    const CropResult crop = crop_and_resize(face.image, face.landmarks, 0.25);
    const Sample s = make_sample(crop.image, crop.landmarks, 1.0, "s");
    const Sample twice = augment(augment(s, Augmentation::HFlip), Augmentation::HFlip);
    flip_ok &= twice.hr.vec() == s.hr.vec() && twice.lr.vec() == s.lr.vec();
    for (int k = 0; k < kNumLandmarks; ++k)
      flip_ok &= std::abs(twice.landmarks[k].x - s.landmarks[k].x) < 1e-9 &&
                 std::abs(twice.landmarks[k].y - s.landmarks[k].y) < 1e-9;
    for (std::size_t i = 0; i < s.heatmaps.size(); ++i) flip_ok &= std::abs(twice.heatmaps[i] - s.heatmaps[i]) < 1e-6f;
  }
  if (!flip_ok) failures.push_back("flip involution");

  double worst_rt = 0;
  std::mt19937_64 g(6);
  std::uniform_real_distribution<double> u(2, 124);
  for (int trial = 0; trial < 50; ++trial) {
    LandmarkSet lm;
    for (auto& p : lm) p = {u(g), u(g)};
    worst_rt = std::max(worst_rt, nrmse(heatmaps_to_landmarks(render_heatmaps(lm)).points, lm, face_width(lm)));
  }
  if (worst_rt >= kRoundTripNrmse) failures.push_back("heatmap round trip " + fmt(worst_rt));

  const double secs = seconds_since(t0);
  if (secs >= kInvariantSeconds) failures.push_back("took " + fmt(secs) + " s");
  std::string detail = "partition err " + fmt(partition_err, 2) + ", fusion identity err " + fmt(identity_err, 2) +
                       ", round-trip NRMSE max " + fmt(worst_rt, 3) + ", " + fmt(secs, 3) + " s";
  for (const auto& f2 : failures) detail += "; failed: " + f2;
  return {failures.empty(), detail};
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    const char* name;
    std::function<testing::GradCheckResult()> run;
  };
  const Case cases[] = {
      {"attentive_fuse", [] { return testing::fusion_gradcheck(); }},
      {"sr_step", [] { return testing::sr_step_gradcheck(); }},
      {"align_step", [] { return testing::align_step_gradcheck(); }},
      {"total_g_loss", [] { return testing::total_loss_gradcheck(); }},
  };
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    const testing::GradCheckResult r = c.run();
    pass &= r.pass_fraction() >= kGradPassFraction;
    detail += std::string(detail.empty() ? "" : ", ") + c.name + " " + std::to_string(r.passed) + "/" +
              std::to_string(r.checked);
  }
  const double secs = seconds_since(t0);
  pass &= secs < kGradSeconds;
  return {pass, detail + " within 1e-3 relative, " + fmt(secs, 3) + " s"};
}

Outcome shapes() {
  DicNetwork<float> net(NetworkConfig{}, 1);
  NoGradGuard guard;
  const Var<float> lr(testing::random_tensor<float>({1, 3, 16, 16}, 2, 0, 1));
  const Var<float> feat = net.sr_branch().extract_lr_features(lr);
  const StepTrace<float> trace = net.forward(lr, 1, Variant::DIC);
  const Var<float> stem = net.align_branch().stem(trace.final_sr());
  const Var<float> trunk = net.align_branch().recur(stem, net.align_branch().init(trace.final_sr()));
  const std::pair<Shape, Shape> rows[] = {
      {feat.shape(), {1, 48, 32, 32}},
      {trunk.shape(), {1, 512, 32, 32}},
      {trace.final_sr().shape(), {1, 3, 128, 128}},
      {trace.heatmaps[0].shape(), {1, 68, 32, 32}},
  };
  bool pass = true;
  std::string detail;
  for (const auto& [got, want] : rows) {
    pass &= got == want;
    detail += std::string(detail.empty() ? "" : ", ") + std::to_string(got.h) + "x" + std::to_string(got.w) + "x" +
              std::to_string(got.c);
  }
  return {pass, detail};
}

Outcome goldens() {
  Image hr(Shape{1, 3, 16, 16});
  std::mt19937_64 g(1);
  std::uniform_real_distribution<float> u(0.1f, 0.8f);
  for (auto& v : hr.vec()) v = u(g);
  Image sr = hr;
  // An RGB offset d moves Y by d·219/255.
  for (auto& v : sr.vec()) v += static_cast<float>(0.1 * 255.0 / 219.0);
  const double p = psnr_y(sr, hr);

  const Var<double> half(Tensor<double>({1, 1, 1, 1}, 0.5));
  const double d = d_loss_from_probs(half, half).item();

  LandmarkSet gt, off;
  for (int k = 0; k < kNumLandmarks; ++k) {
    gt[k] = {static_cast<double>(k), static_cast<double>(2 * k)};
    off[k] = {gt[k].x + 3, gt[k].y + 4};
  }
  const double e = nrmse(off, gt, 128.0);

  const Var<double> comps(Tensor<double>({1, 5, 1, 1}, std::vector<double>{std::log(2.0), 0, 0, 0, 0}));
  const auto att = attention_softmax(comps).value();
  double softmax_err = std::abs(att[0] - 1.0 / 3);
  for (int i = 1; i < 5; ++i) softmax_err = std::max(softmax_err, std::abs(att[i] - 1.0 / 6));

  const bool pass = std::abs(p - kPsnrGolden) <= kPsnrTol && std::abs(d - kDLossGolden) <= kDLossTol &&
                    std::abs(e - kNrmseGolden) <= kNrmseTol && softmax_err <= kSoftmaxTol;
  return {pass, "psnr " + fmt(p, 6) + " dB, d_loss " + fmt(d, 6) + ", nrmse " + fmt(e, 6) + ", softmax err " +
                    fmt(softmax_err, 2)};
}

struct OverfitState {
  TrainedRun run;
  std::vector<Sample> samples;
  TrainConfig config;
};

Outcome overfit(const fs::path& work, OverfitState& state) {
  state.samples = synthetic_split(work / "faces4", kOverfitImages, 11);
  state.config = desk_config(work / "overfit");
  state.run = train(state.config, state.samples, "overfit");
  EvalOptions opt;
  opt.n_steps = state.config.n_steps;
  opt.per_step = true;
  const EvalResult r = evaluate(state.run.trainer->network(), state.samples, opt);
  save_report(work / "overfit" / "metrics.json", r);
  const double gain = r.mean.psnr_db - r.bicubic.psnr_db;
  const double a10 = state.run.log.at(9).align;
  const double a_end = state.run.log.back().align;
  const double drop = a10 / a_end;
  const bool pass = gain >= kOverfitGainDb && drop >= kAlignDrop &&
                    static_cast<int>(state.run.log.size()) <= kOverfitIters && state.run.seconds <= kOverfitSeconds;
  return {pass, "train PSNR " + fmt(r.mean.psnr_db) + " dB vs bicubic " + fmt(r.bicubic.psnr_db) + " dB (+" + fmt(gain, 3) +
                    "), align " + fmt(a10, 3) + " at iter 10 -> " + fmt(a_end, 3) + " at iter " +
                    std::to_string(state.run.log.back().iter) + " (" + fmt(drop, 3) + "x), " +
                    fmt(state.run.seconds / 60, 3) + " min"};
}

Outcome step_trend(const OverfitState& state) {
  EvalOptions opt;
  opt.n_steps = state.config.n_steps;
  opt.per_step = true;
  const EvalResult r = evaluate(state.run.trainer->network(), state.samples, opt);
  const auto& steps = r.mean.per_step;
  std::string detail = "PSNR/NRMSE by step:";
  for (const auto& s : steps) detail += " " + fmt(s.psnr_db) + "/" + (s.nrmse ? fmt(*s.nrmse, 3) : "null");
  const bool have_nrmse = steps.front().nrmse && steps.back().nrmse;
  const bool pass = steps.back().psnr_db >= steps.front().psnr_db && have_nrmse && *steps.back().nrmse <= *steps.front().nrmse;
  return {pass, detail};
}

Outcome ablation(const fs::path& work) {
  const std::vector<Sample> samples = synthetic_split(work / "faces20", kAblationImages, 21);
  double psnr[3] = {0, 0, 0};
  const Variant order[3] = {Variant::DIC, Variant::DIC_CL, Variant::DIC_NL};
  for (int i = 0; i < 3; ++i) {
    TrainConfig c = desk_config(work / "ablation" / to_string(order[i]));
    c.variant = order[i];
    c.max_iters = kAblationIters;
    TrainedRun run = train(c, samples, to_string(order[i]));
    EvalOptions opt;
    opt.n_steps = c.n_steps;
    opt.variant = c.variant;
    const EvalResult r = evaluate(run.trainer->network(), samples, opt);
    save_report(fs::path(c.output_dir) / "metrics.json", r);
    psnr[i] = r.mean.psnr_db;
  }
  const bool pass = psnr[0] >= psnr[1] - kAblationBandDb && psnr[1] >= psnr[2] - kAblationBandDb;
  return {pass, "train PSNR dic " + fmt(psnr[0], 5) + ", dic-cl " + fmt(psnr[1], 5) + ", dic-nl " + fmt(psnr[2], 5) +
                    " dB after " + std::to_string(kAblationIters) + " iterations each on " +
                    std::to_string(kAblationImages) + " images"};
}

Outcome determinism(const fs::path& work, const OverfitState* state) {
  std::vector<Sample> samples;
  std::vector<IterationLog> reference;
  if (state != nullptr && !state->run.log.empty()) {
    samples = state->samples;
    reference.assign(state->run.log.begin(), state->run.log.begin() + kDeterminismIters);
  } else {
    samples = synthetic_split(work / "faces4", kOverfitImages, 11);
    TrainConfig c = desk_config(work / "determinism_a");
    c.max_iters = kDeterminismIters;
    reference = train(c, samples, "determinism a").log;
  }
  TrainConfig c = desk_config(work / "determinism_b");
  c.max_iters = kDeterminismIters;
  const std::vector<IterationLog> again = train(c, samples, "determinism b").log;
  int first_diff = -1;
  for (int i = 0; i < kDeterminismIters && first_diff < 0; ++i)
    if (to_json(reference[i]).dump() != to_json(again[i]).dump()) first_diff = i + 1;
  if (first_diff > 0) return {false, "logs diverge at iteration " + std::to_string(first_diff)};
  return {true, "identical loss logs through iteration " + std::to_string(kDeterminismIters)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DIC-SR acceptance runner"};
  std::vector<int> only;
  std::string work_dir = "acceptance_work";
  app.add_option("--only", only, "Run just these criteria (1-8)")->delimiter(',')->check(CLI::Range(1, 8));
  app.add_option("--work-dir", work_dir, "Directory for training runs and reports");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8} : std::set<int>(only.begin(), only.end());
  const fs::path work(work_dir);
  fs::create_directories(work);

  int failed = 0;
  OverfitState overfit_state;
  bool have_overfit = false;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!selected.count(id)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "CRITERION " << id << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << name << ": " << o.detail << std::endl;
  };

  report(1, "invariants", invariants);
  report(2, "gradient oracle", gradients);
  report(3, "shape conformance", shapes);
  report(4, "metric goldens", goldens);
  if (selected.count(5) || selected.count(6)) {
    report(5, "overfit", [&] {
      Outcome o = overfit(work, overfit_state);
      have_overfit = true;
      return o;
    });
    if (!selected.count(5)) {
      overfit_state.samples = synthetic_split(work / "faces4", kOverfitImages, 11);
      overfit_state.config = desk_config(work / "overfit");
      overfit_state.run = train(overfit_state.config, overfit_state.samples, "overfit");
      have_overfit = true;
    }
  }
  report(6, "step trend", [&] {
    if (!have_overfit) throw std::runtime_error("overfit model unavailable");
    return step_trend(overfit_state);
  });
  report(7, "ablation ordering", [&] { return ablation(work); });
  report(8, "determinism", [&] { return determinism(work, have_overfit ? &overfit_state : nullptr); });

  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
