// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Two-phase training (psnr, then gan), checkpoints and evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dic/collaboration.hpp"
#include "dic/dataset.hpp"
#include "dic/losses.hpp"
#include "dic/metrics.hpp"

namespace dic {

enum class Phase { Psnr, Gan };
std::string to_string(Phase p);
Phase parse_phase(const std::string& s);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  NetworkConfig network;
  int n_steps = 4;
  Variant variant = Variant::DIC;
  Phase phase = Phase::Psnr;

  double lr = 1e-4;
  std::vector<int> lr_milestones{10000, 20000, 40000};
  AdamConfig adam;
  std::optional<LossWeights> weights;  // phase preset when unset
  std::uint64_t seed = 0;
  int batch_size = 8;
  int max_iters = 1000;

  std::string manifest;      // raw images + landmark files
  std::string prepared_dir;  // or the output of prepare-data
  PrepareOptions prepare;
  bool augment = true;

  std::string output_dir = "runs/dic";
  std::string init_ckpt;
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  std::string feature_extractor = "random-conv";
  std::uint64_t extractor_seed = 1234;

  [[nodiscard]] LossWeights effective_weights() const;
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
/// Reads a JSON config file; the DIC_SEED environment variable overrides `seed`.
TrainConfig load_train_config(const std::filesystem::path& path);

/// Initial rate halved once per milestone already reached.
double lr_at(int iter, const TrainConfig& config);

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<T> params, AdamConfig config);
  /// One update from the current gradients; parameters without a gradient are skipped.
  void step(double lr);

  [[nodiscard]] const ParamList<T>& params() const { return params_; }
  [[nodiscard]] std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  [[nodiscard]] const std::vector<Tensor<T>>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  ParamList<T> params_;
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

struct Batch {
  Tensor<float> lr, hr, heatmaps;
  std::vector<std::string> ids;
};

/// Epoch-shuffled sampling with a per-draw augmentation; fully determined by its seed.
class BatchSampler {
 public:
  BatchSampler() = default;
  BatchSampler(std::size_t dataset_size, std::uint64_t seed, bool augment);
  Batch next(const std::vector<Sample>& samples, int batch_size);

  [[nodiscard]] nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  std::size_t size_ = 0;
  bool augment_ = false;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Versioned container: magic, version, JSON header, then raw float32 tensors.
struct CheckpointFile {
  nlohmann::json header;
  std::map<std::string, Tensor<float>> tensors;
};
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

struct LoadedModel {
  TrainConfig config;
  int iteration = 0;
  std::unique_ptr<DicNetwork<float>> network;
};
/// Generator and alignment weights from any checkpoint.
LoadedModel load_model(const std::filesystem::path& path);

struct IterationLog {
  int iter = 0;
  double lr = 0, pixel = 0, align = 0, adv = 0, perc = 0, d_loss = 0;
};
nlohmann::json to_json(const IterationLog& log);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loads the samples a config points at (prepared cache or manifest train split).
std::vector<Sample> load_training_samples(const TrainConfig& config, Split split = Split::Train);

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<Sample> samples);
  ~Trainer();

  /// One optimisation step; throws NonFiniteLoss without touching parameters.
  IterationLog step();
  /// Steps until max_iters, writing one JSON line per iteration and periodic checkpoints.
  void run(std::ostream& log, const std::function<void(const IterationLog&)>& on_iteration = {});

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores everything needed for a bit-exact continuation.
  void resume(const std::filesystem::path& path);
  /// Copies generator and alignment weights (gan-phase initialisation).
  void load_generator(const std::filesystem::path& path);

  [[nodiscard]] int iteration() const { return iteration_; }
  DicNetwork<float>& network() { return *net_; }
  [[nodiscard]] const TrainConfig& config() const { return config_; }
  [[nodiscard]] const std::optional<std::filesystem::path>& last_checkpoint() const { return last_checkpoint_; }

 private:
  TrainConfig config_;
  std::vector<Sample> samples_;
  std::unique_ptr<DicNetwork<float>> net_;
  std::unique_ptr<Discriminator<float>> disc_;
  std::unique_ptr<FeatureExtractor<float>> phi_;
  ParamList<float> gen_params_;
  Adam<float> gen_opt_;
  Adam<float> disc_opt_;
  BatchSampler sampler_;
  int iteration_ = 0;
  mutable std::optional<std::filesystem::path> last_checkpoint_;
};

enum class NrmseSource { Branch, External };
NrmseSource parse_nrmse_source(const std::string& s);

struct EvalOptions {
  int n_steps = 4;
  Variant variant = Variant::DIC;
  bool per_step = false;
  NrmseSource nrmse_source = NrmseSource::Branch;
  /// `<id>.txt` landmark files detected on the SR outputs (External source only).
  std::filesystem::path external_dir;
};

struct EvalResult {
  std::vector<MetricReport> reports;
  MetricReport mean;
  MetricReport bicubic;  // mean over the same images of the bicubic upsample
};

/// SR outputs are clamped and quantised to 8 bits before scoring, as if saved to disk.
EvalResult evaluate(const DicNetwork<float>& net, const std::vector<Sample>& samples,
                    const EvalOptions& options);

}  // namespace dic
