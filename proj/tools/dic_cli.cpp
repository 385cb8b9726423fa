// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// dic: data preparation, training, evaluation and inference front end.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dic/collaboration.hpp"
#include "dic/dataset.hpp"
#include "dic/fusion.hpp"
#include "dic/image.hpp"
#include "dic/metrics.hpp"
#include "dic/synthetic.hpp"
#include "dic/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage errors are reported by CLI11 and exit with 2; everything else exits with 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_json(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << j.dump(2) << '\n';
}

json eval_json(const dic::EvalResult& r) {
  json reports = json::array();
  for (const auto& rep : r.reports) reports.push_back(dic::to_json(rep));
  return {{"reports", reports}, {"mean", dic::to_json(r.mean)}, {"bicubic", dic::to_json(r.bicubic)}};
}

std::vector<dic::Sample> samples_for_split(const std::string& manifest, const std::string& split,
                                           const dic::PrepareOptions& prep) {
  const dic::Manifest m = dic::Manifest::load(manifest);
  std::vector<dic::ManifestEntry> entries;
  if (split == "all") {
    entries = m.entries;
  } else {
    entries = m.split(dic::parse_split(split));
  }
  if (entries.empty()) throw std::runtime_error("split '" + split + "' of " + manifest + " is empty");
  std::vector<dic::Sample> samples;
  for (const auto& e : entries) samples.push_back(dic::prepare_sample(e, prep));
  return samples;
}

dic::Image lr_from_file(const std::string& path) {
  dic::Image img = dic::read_png(path);
  if (img.h() == dic::kLrSize && img.w() == dic::kLrSize) return img;
  // Anything else is treated as an HR face crop and degraded first.
  if (img.h() != dic::kHrSize || img.w() != dic::kHrSize) img = dic::bicubic_resize(img, dic::kHrSize, dic::kHrSize);
  return dic::degrade(img);
}

// Sum of the kept attention maps, replicated to an RGB image at HR size.
dic::Image attention_image(const dic::Tensor<float>& attention) {
  const int h = attention.h();
  const int w = attention.w();
  const int scale = dic::kHrSize / h;
  dic::Image out({1, 3, h * scale, w * scale});
  for (int y = 0; y < h * scale; ++y)
    for (int x = 0; x < w * scale; ++x) {
      float v = 0;
      for (int p = 0; p < attention.c(); ++p) v += attention.at(0, p, y / scale, x / scale);
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = v;
    }
  return out;
}

int cmd_prepare(const std::string& manifest_path, const std::string& out, double margin, double sigma) {
  const dic::Manifest manifest = dic::Manifest::load(manifest_path);
  if (manifest.entries.empty()) throw std::runtime_error("manifest " + manifest_path + " has no entries");
  const dic::PrepareOptions prep{margin, sigma};
  fs::create_directories(out);
  json index = json::array();
  std::map<std::string, int> seen;
  for (const auto& entry : manifest.entries) {
    dic::Sample s = dic::prepare_sample(entry, prep);
    std::string dir = s.id;
    if (const int n = seen[s.id]++; n > 0) dir += "_" + std::to_string(n);
    dic::save_sample_cache(fs::path(out) / dir, s);
    index.push_back({{"id", s.id}, {"split", dic::to_string(entry.split)}, {"dir", dir}});
  }
  std::ofstream f(fs::path(out) / "index.json");
  f << json{{"samples", index}, {"margin", margin}, {"sigma", sigma}}.dump(2) << '\n';
  std::cout << "prepared " << index.size() << " samples in " << out << '\n';
  return 0;
}

int run_training(dic::TrainConfig config, const std::string& resume) {
  std::vector<dic::Sample> samples = dic::load_training_samples(config);
  fs::create_directories(config.output_dir);
  dic::Trainer trainer(config, std::move(samples));
  if (!resume.empty()) trainer.resume(resume);
  const fs::path log_path = fs::path(config.output_dir) / "train_log.jsonl";
  std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  trainer.run(log);
  std::cout << "trained " << dic::to_string(config.variant) << " (" << dic::to_string(config.phase)
            << ") to iteration " << trainer.iteration() << "; checkpoint "
            << trainer.last_checkpoint()->string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep iterative collaboration face super-resolution"};
  app.require_subcommand(1);

  std::string manifest, out, config_path, init_ckpt, resume, ckpt, in, out_dir, nrmse_source = "branch";
  std::string external_dir, split = "test", variant_name;
  std::vector<std::string> keeps;
  double margin = 0.25, sigma = 1.0;
  std::string phase_name;
  bool per_step = false;
  int train_count = 4, test_count = 0, size = 160;
  std::uint64_t seed = 1;

  auto* prepare = app.add_subcommand("prepare-data", "Crop, degrade and cache a manifest");
  prepare->add_option("--manifest", manifest, "Manifest file")->required();
  prepare->add_option("--out", out, "Output directory")->required();
  prepare->add_option("--margin", margin, "Crop margin as a fraction of the landmark box side");
  prepare->add_option("--sigma", sigma, "Heatmap Gaussian width in heatmap cells");

  auto* train = app.add_subcommand("train", "Train the psnr or gan phase");
  train->add_option("--config", config_path, "JSON config")->required();
  train->add_option("--phase", phase_name, "psnr or gan")->required()->check(CLI::IsMember({"psnr", "gan"}));
  train->add_option("--init-ckpt", init_ckpt, "psnr-phase checkpoint that seeds the gan phase");
  train->add_option("--resume", resume, "Continue from a checkpoint of the same run");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a manifest split");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--manifest", manifest, "Manifest file")->required();
  eval->add_flag("--per-step", per_step, "Report every collaboration step");
  eval->add_option("--nrmse-source", nrmse_source, "branch or gt-detector")
      ->check(CLI::IsMember({"branch", "gt-detector"}));
  eval->add_option("--detections", external_dir, "Directory of <id>.txt detector landmarks (gt-detector)");
  eval->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  eval->add_option("--margin", margin, "Crop margin");
  eval->add_option("--sigma", sigma, "Heatmap width");
  eval->add_option("--out", out, "Write the report here instead of stdout");

  auto* infer = app.add_subcommand("infer", "Super-resolve one image");
  infer->add_option("--ckpt", ckpt, "Checkpoint")->required();
  infer->add_option("--in", in, "16×16 LR image, or a face crop that is degraded first")->required();
  infer->add_option("--out", out, "Output PNG")->required();

  auto* render = app.add_subcommand("render-components", "Render with component attention masked");
  render->add_option("--ckpt", ckpt, "Checkpoint")->required();
  render->add_option("--in", in, "Input image")->required();
  render->add_option("--out-dir", out_dir, "Output directory")->required();
  render->add_option("--keep", keeps, "Component set to keep (all, none or a comma list); repeatable")
      ->required();

  auto* ablate = app.add_subcommand("ablate", "Train and score one model variant");
  ablate->add_option("--variant", variant_name, "dic, dic-nl or dic-cl")
      ->required()
      ->check(CLI::IsMember({"dic", "dic-nl", "dic-cl"}));
  ablate->add_option("--config", config_path, "JSON config")->required();
  ablate->add_option("--out", out, "Metrics report path (default <output_dir>/metrics.json)");

  auto* synth = app.add_subcommand("synth-faces", "Write a procedural face set with a manifest");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--train", train_count, "Training images");
  synth->add_option("--test", test_count, "Test images");
  synth->add_option("--size", size, "Image side in pixels");
  synth->add_option("--seed", seed, "Generator seed");

  auto* groups = app.add_subcommand("export-groups", "Write the landmark-to-component table");
  groups->add_option("--out", out, "Output JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << '\n';
    const auto parsed = app.get_subcommands();
    std::cerr << (parsed.empty() ? app.help() : parsed.back()->help());
    return 2;
  }

  try {
    if (*prepare) return cmd_prepare(manifest, out, margin, sigma);

    if (*train) {
      dic::TrainConfig config = dic::load_train_config(config_path);
      config.phase = dic::parse_phase(phase_name);
      if (!init_ckpt.empty()) config.init_ckpt = init_ckpt;
      return run_training(config, resume);
    }

    if (*eval) {
      const dic::LoadedModel model = dic::load_model(ckpt);
      dic::EvalOptions options;
      options.n_steps = model.config.n_steps;
      options.variant = model.config.variant;
      options.per_step = per_step;
      options.nrmse_source = dic::parse_nrmse_source(nrmse_source);
      if (options.nrmse_source == dic::NrmseSource::External) {
        if (external_dir.empty()) throw UsageError("--nrmse-source gt-detector needs --detections <dir>");
        options.external_dir = external_dir;
      }
      const auto samples = samples_for_split(manifest, split, {margin, sigma});
      write_json(eval_json(dic::evaluate(*model.network, samples, options)), out);
      return 0;
    }

    if (*infer) {
      const dic::LoadedModel model = dic::load_model(ckpt);
      const dic::Image lr = lr_from_file(in);
      dic::write_png(out, model.network->infer(lr, model.config.n_steps, model.config.variant));
      return 0;
    }

    if (*render) {
      const dic::LoadedModel model = dic::load_model(ckpt);
      if (model.config.variant != dic::Variant::DIC) {
        throw std::runtime_error("render-components needs a dic checkpoint, got " + dic::to_string(model.config.variant));
      }
      const dic::Image lr = lr_from_file(in);
      fs::create_directories(out_dir);
      dic::NoGradGuard guard;
      dic::ForwardOptions fo;
      fo.skip_final_alignment = true;
      json written = json::array();
      for (const auto& spec : keeps) {
        const dic::ComponentSet keep = dic::parse_component_set(spec);
        fo.final_step_keep = keep;
        const auto trace = model.network->forward(dic::Var<float>(lr), model.config.n_steps, dic::Variant::DIC, fo);
        const std::string name = dic::component_set_name(keep);
        const fs::path image = fs::path(out_dir) / (name + "_image.png");
        const fs::path attention = fs::path(out_dir) / (name + "_attention.png");
        dic::write_png(image, trace.final_sr().value());
        const auto maps = dic::DicNetwork<float>::attention(trace.landmark_inputs.back(), keep);
        dic::write_png(attention, attention_image(maps.value()));
        written.push_back({{"keep", name}, {"image", image.string()}, {"attention", attention.string()}});
      }
      std::cout << written.dump(2) << '\n';
      return 0;
    }

    if (*ablate) {
      dic::TrainConfig config = dic::load_train_config(config_path);
      config.variant = dic::parse_variant(variant_name);
      config.phase = dic::Phase::Psnr;
      config.output_dir = (fs::path(config.output_dir) / variant_name).string();
      run_training(config, "");
      const dic::LoadedModel model = dic::load_model(fs::path(config.output_dir) / "final.ckpt");
      dic::EvalOptions options;
      options.n_steps = config.n_steps;
      options.variant = config.variant;
      options.per_step = true;
      // Held-out images when the data has a test split, the training images otherwise.
      auto samples = dic::load_training_samples(config, dic::Split::Test);
      if (samples.empty()) samples = dic::load_training_samples(config);
      write_json(eval_json(dic::evaluate(*model.network, samples, options)),
                 out.empty() ? (fs::path(config.output_dir) / "metrics.json").string() : out);
      return 0;
    }

    if (*synth) {
      dic::SyntheticSetOptions options{train_count, test_count, size, seed};
      std::cout << dic::write_synthetic_set(out_dir, options).string() << '\n';
      return 0;
    }

    if (*groups) {
      write_json(dic::component_groups_json(), out);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 1;
}
