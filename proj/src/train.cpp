// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dic {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Phase p) { return p == Phase::Psnr ? "psnr" : "gan"; }

Phase parse_phase(const std::string& s) {
  if (s == "psnr") return Phase::Psnr;
  if (s == "gan") return Phase::Gan;
  throw std::invalid_argument("unknown phase '" + s + "' (expected psnr or gan)");
}

LossWeights TrainConfig::effective_weights() const {
  if (weights) return *weights;
  return phase == Phase::Psnr ? LossWeights::psnr_phase() : LossWeights::gan_phase();
}

void TrainConfig::validate() const {
  network.validate();
  const LossWeights w = effective_weights();
  w.validate();
  if (n_steps < 1) throw std::invalid_argument("config: n_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (max_iters < 0) throw std::invalid_argument("config: max_iters must be >= 0");
  if (!(lr > 0)) throw std::invalid_argument("config: lr must be positive");
  if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
  if (phase == Phase::Psnr && (w.lambda_adv != 0 || w.lambda_perc != 0)) {
    throw std::invalid_argument("config: the psnr phase requires lambda_adv = lambda_perc = 0");
  }
  if (phase == Phase::Gan && init_ckpt.empty()) {
    throw std::invalid_argument("config: the gan phase requires an init checkpoint from the psnr phase");
  }
  if (!std::is_sorted(lr_milestones.begin(), lr_milestones.end())) {
    throw std::invalid_argument("config: lr_milestones must be sorted");
  }
}

json to_json(const TrainConfig& c) {
  json j;
  to_json(j, c.network);
  j["n_steps"] = c.n_steps;
  j["variant"] = to_string(c.variant);
  j["phase"] = to_string(c.phase);
  j["lr"] = c.lr;
  j["lr_milestones"] = c.lr_milestones;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  if (c.weights) {
    json w;
    to_json(w, *c.weights);
    j["weights"] = w;
  }
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["max_iters"] = c.max_iters;
  j["manifest"] = c.manifest;
  j["prepared_dir"] = c.prepared_dir;
  j["margin"] = c.prepare.margin;
  j["sigma"] = c.prepare.sigma;
  j["augment"] = c.augment;
  j["output_dir"] = c.output_dir;
  j["init_ckpt"] = c.init_ckpt;
  j["checkpoint_every"] = c.checkpoint_every;
  j["feature_extractor"] = c.feature_extractor;
  j["extractor_seed"] = c.extractor_seed;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const char* kKnown[] = {"channels", "groups", "fusion_depth", "align_width", "hourglass_depth",
                                 "disc_base", "n_steps", "variant", "phase", "lr", "lr_milestones",
                                 "adam", "weights", "seed", "batch_size", "max_iters", "manifest",
                                 "prepared_dir", "margin", "sigma", "augment", "output_dir",
                                 "init_ckpt", "checkpoint_every", "feature_extractor",
                                 "extractor_seed"};
  for (const auto& item : j.items()) {
    if (std::none_of(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return item.key() == k; })) {
      throw std::invalid_argument("config: unknown key '" + item.key() + "'");
    }
  }
  TrainConfig c;
  from_json(j, c.network);
  c.n_steps = j.value("n_steps", c.n_steps);
  c.variant = parse_variant(j.value("variant", to_string(c.variant)));
  c.phase = parse_phase(j.value("phase", to_string(c.phase)));
  c.lr = j.value("lr", c.lr);
  c.lr_milestones = j.value("lr_milestones", c.lr_milestones);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  if (j.contains("weights")) c.weights = j.at("weights").get<LossWeights>();
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.manifest = j.value("manifest", c.manifest);
  c.prepared_dir = j.value("prepared_dir", c.prepared_dir);
  c.prepare.margin = j.value("margin", c.prepare.margin);
  c.prepare.sigma = j.value("sigma", c.prepare.sigma);
  c.augment = j.value("augment", c.augment);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.init_ckpt = j.value("init_ckpt", c.init_ckpt);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.feature_extractor = j.value("feature_extractor", c.feature_extractor);
  c.extractor_seed = j.value("extractor_seed", c.extractor_seed);
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  TrainConfig c = train_config_from_json(j);
  // Relative data and output paths are taken relative to the config file.
  const fs::path base = path.parent_path();
  const auto rebase = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  rebase(c.manifest);
  rebase(c.prepared_dir);
  rebase(c.output_dir);
  rebase(c.init_ckpt);
  if (const char* env = std::getenv("DIC_SEED"); env != nullptr && *env != '\0') {
    try {
      c.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("DIC_SEED is not an unsigned integer: ") + env);
    }
  }
  return c;
}

double lr_at(int iter, const TrainConfig& config) {
  double lr = config.lr;
  for (int m : config.lr_milestones)
    if (iter >= m) lr *= 0.5;
  return lr;
}

// ---------------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& [name, p] : params_.items()) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto& items = params_.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    Var<T>& p = items[i].second;
    const Tensor<T>& g = p.grad();
    if (g.empty()) continue;
    T* w = p.mutable_value().data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const std::size_t n = g.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t dataset_size, std::uint64_t seed, bool augment)
    : size_(dataset_size), augment_(augment), rng_(seed) {
  if (dataset_size == 0) throw std::invalid_argument("batch sampler: empty dataset");
}

Batch BatchSampler::next(const std::vector<Sample>& samples, int batch_size) {
  if (samples.size() != size_) throw std::logic_error("batch sampler: dataset size changed");
  std::vector<Tensor<float>> lr, hr, hm;
  Batch batch;
  for (int b = 0; b < batch_size; ++b) {
    if (cursor_ >= order_.size()) {
      order_.resize(size_);
      for (std::size_t i = 0; i < size_; ++i) order_[i] = i;
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    const Sample& base = samples[order_[cursor_++]];
    Augmentation op = Augmentation::None;
    if (augment_) op = kAllAugmentations[std::uniform_int_distribution<int>(0, 4)(rng_)];
    if (op == Augmentation::None) {
      lr.push_back(base.lr);
      hr.push_back(base.hr);
      hm.push_back(base.heatmaps);
    } else {
      Sample s = augment(base, op);
      lr.push_back(std::move(s.lr));
      hr.push_back(std::move(s.hr));
      hm.push_back(std::move(s.heatmaps));
    }
    batch.ids.push_back(base.id);
  }
  batch.lr = stack_batch<float>(lr);
  batch.hr = stack_batch<float>(hr);
  batch.heatmaps = stack_batch<float>(hm);
  return batch;
}

json BatchSampler::state() const {
  std::ostringstream rng;
  rng << rng_;
  return {{"rng", rng.str()}, {"order", order_}, {"cursor", cursor_}, {"augment", augment_}};
}

void BatchSampler::restore(const json& state) {
  std::istringstream rng(state.at("rng").get<std::string>());
  rng >> rng_;
  if (!rng) throw std::runtime_error("checkpoint: corrupt sampler state");
  order_ = state.at("order").get<std::vector<std::size_t>>();
  cursor_ = state.at("cursor").get<std::size_t>();
  augment_ = state.at("augment").get<bool>();
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'I', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void write_raw(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_raw(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  return v;
}

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

}  // namespace

void write_checkpoint(const fs::path& path, const json& header,
                      const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors) {
  json h = header;
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    index.push_back({{"name", name}, {"shape", shape_json(t->shape())}, {"offset", offset}});
    offset += t->size();
  }
  h["tensors"] = index;
  h["dtype"] = "float32";
  h["byte_order"] = "little";
  const std::string text = h.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_raw(out, kVersion);
    write_raw(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      out.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointFile read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint " + path.string() + " has unsupported version " + std::to_string(version));
  }
  const auto length = read_raw<std::uint64_t>(in);
  if (!in || length > (1ULL << 32)) throw std::runtime_error("checkpoint " + path.string() + ": corrupt header");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  CheckpointFile file;
  try {
    file.header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  const std::streampos blob = in.tellg();
  for (const auto& entry : file.header.at("tensors")) {
    const auto dims = entry.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) throw std::runtime_error("checkpoint: bad tensor shape");
    Tensor<float> t(Shape{dims[0], dims[1], dims[2], dims[3]});
    in.seekg(blob + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>() * sizeof(float)));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    file.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return file;
}

namespace {

void copy_params(const CheckpointFile& file, const std::string& prefix, ParamList<float>& params) {
  for (auto& [name, p] : params.items()) {
    const auto it = file.tensors.find(prefix + name);
    if (it == file.tensors.end()) throw std::runtime_error("checkpoint is missing tensor " + prefix + name);
    if (it->second.shape() != p.shape()) {
      throw std::runtime_error("checkpoint tensor " + prefix + name + " has shape " + it->second.shape().str() +
                               ", model expects " + p.shape().str());
    }
    p.mutable_value() = it->second;
  }
}

void copy_moments(const CheckpointFile& file, const std::string& prefix, Adam<float>& opt) {
  const auto& items = opt.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string& name = items[i].first;
    const auto m = file.tensors.find(prefix + "m/" + name);
    const auto v = file.tensors.find(prefix + "v/" + name);
    if (m == file.tensors.end() || v == file.tensors.end()) {
      throw std::runtime_error("checkpoint is missing optimizer state for " + name);
    }
    opt.first_moments()[i] = m->second;
    opt.second_moments()[i] = v->second;
  }
}

TrainConfig config_from_header(const json& header) { return train_config_from_json(header.at("config")); }

}  // namespace

LoadedModel load_model(const fs::path& path) {
  const CheckpointFile file = read_checkpoint(path);
  LoadedModel model;
  model.config = config_from_header(file.header);
  model.iteration = file.header.value("iteration", 0);
  model.network = std::make_unique<DicNetwork<float>>(model.config.network, model.config.seed);
  ParamList<float> params = model.network->all_parameters();
  copy_params(file, "net/", params);
  return model;
}

json to_json(const IterationLog& log) {
  return {{"iter", log.iter}, {"lr", log.lr},     {"pixel", log.pixel}, {"align", log.align},
          {"adv", log.adv},   {"perc", log.perc}, {"d_loss", log.d_loss}};
}

std::vector<Sample> load_training_samples(const TrainConfig& config, Split split) {
  std::vector<Sample> samples;
  if (!config.prepared_dir.empty()) {
    const fs::path dir(config.prepared_dir);
    std::ifstream in(dir / "index.json");
    if (!in) throw std::runtime_error("no index.json in prepared data directory " + dir.string());
    json index;
    in >> index;
    for (const auto& entry : index.at("samples")) {
      if (parse_split(entry.at("split").get<std::string>()) != split) continue;
      samples.push_back(load_sample_cache(dir / entry.at("dir").get<std::string>()));
    }
  } else if (!config.manifest.empty()) {
    const Manifest manifest = Manifest::load(config.manifest);
    for (const auto& entry : manifest.split(split)) samples.push_back(prepare_sample(entry, config.prepare));
  } else {
    throw std::invalid_argument("config names neither a manifest nor a prepared_dir");
  }
  return samples;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kDiscSeedSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kSamplerSeedSalt = 0xbf58476d1ce4e5b9ULL;

bool finite(double v) { return std::isfinite(v); }

}  // namespace

Trainer::Trainer(TrainConfig config, std::vector<Sample> samples)
    : config_(std::move(config)), samples_(std::move(samples)) {
  config_.validate();
  if (samples_.empty()) throw std::invalid_argument("trainer: no training samples");
  net_ = std::make_unique<DicNetwork<float>>(config_.network, config_.seed);
  gen_params_ = net_->parameters(config_.variant);
  gen_opt_ = Adam<float>(gen_params_, config_.adam);
  if (config_.phase == Phase::Gan) {
    disc_ = std::make_unique<Discriminator<float>>(config_.network.disc_base, config_.seed ^ kDiscSeedSalt);
    disc_opt_ = Adam<float>(disc_->parameters(), config_.adam);
    phi_ = make_feature_extractor<float>(config_.feature_extractor, config_.extractor_seed);
    load_generator(config_.init_ckpt);
  }
  sampler_ = BatchSampler(samples_.size(), config_.seed ^ kSamplerSeedSalt, config_.augment);
}

Trainer::~Trainer() = default;

IterationLog Trainer::step() {
  IterationLog log;
  log.lr = lr_at(iteration_, config_);
  const Batch batch = sampler_.next(samples_, config_.batch_size);
  const Var<float> lr(batch.lr);
  const Var<float> hr(batch.hr);
  StepTrace<float> trace;
  try {
    trace = net_->forward(lr, config_.n_steps, config_.variant);
  } catch (const std::domain_error& e) {
    throw NonFiniteLoss(std::string(e.what()) + " at iteration " + std::to_string(iteration_ + 1));
  }

  LossParts<float> parts;
  parts.pixel = pixel_loss(trace, hr);
  if (uses_landmarks(config_.variant)) parts.align = align_loss(trace, Var<float>(batch.heatmaps));
  const LossWeights weights = config_.effective_weights();

  if (config_.phase == Phase::Gan) {
    ParamList<float> dparams = disc_->parameters();
    dparams.zero_grad();
    const Var<float> dl = d_loss(*disc_, hr, trace.final_sr().detach());
    log.d_loss = dl.item();
    if (!finite(log.d_loss)) {
      throw NonFiniteLoss("non-finite discriminator loss at iteration " + std::to_string(iteration_ + 1));
    }
    backward(dl);
    disc_opt_.step(log.lr);
    parts.adv = g_adv_loss(*disc_, trace.final_sr());
    parts.perc = perceptual_loss(*phi_, trace.final_sr(), hr);
    log.adv = parts.adv.item();
    log.perc = parts.perc.item();
  }
  log.pixel = parts.pixel.item();
  if (parts.align.defined()) log.align = parts.align.item();
  const Var<float> total = total_g_loss(parts, weights);
  if (!finite(total.item()) || !finite(log.pixel) || !finite(log.align)) {
    throw NonFiniteLoss("non-finite generator loss at iteration " + std::to_string(iteration_ + 1));
  }
  gen_params_.zero_grad();
  backward(total);
  gen_opt_.step(log.lr);
  ++iteration_;
  log.iter = iteration_;
  return log;
}

void Trainer::run(std::ostream& log, const std::function<void(const IterationLog&)>& on_iteration) {
  const fs::path dir(config_.output_dir);
  while (iteration_ < config_.max_iters) {
    IterationLog entry;
    try {
      entry = step();
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(std::string(e.what()) + "; last good checkpoint: " +
                          (last_checkpoint_ ? last_checkpoint_->string() : std::string("none")));
    }
    log << to_json(entry).dump() << '\n';
    log.flush();
    if (on_iteration) on_iteration(entry);
    if (config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0 &&
        iteration_ < config_.max_iters) {
      save_checkpoint(dir / ("ckpt_" + std::to_string(iteration_) + ".ckpt"));
    }
  }
  save_checkpoint(dir / "final.ckpt");
}

void Trainer::save_checkpoint(const fs::path& path) const {
  json header;
  header["config"] = to_json(config_);
  header["iteration"] = iteration_;
  header["sampler"] = sampler_.state();
  header["adam_g_steps"] = gen_opt_.steps();
  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  const ParamList<float> all = net_->all_parameters();
  for (const auto& [name, p] : all.items()) tensors.emplace_back("net/" + name, &p.value());
  const auto& gopt = gen_opt_;
  for (std::size_t i = 0; i < gopt.params().size(); ++i) {
    const std::string& name = gopt.params().items()[i].first;
    tensors.emplace_back("adam_g/m/" + name, &gopt.first_moments()[i]);
    tensors.emplace_back("adam_g/v/" + name, &gopt.second_moments()[i]);
  }
  ParamList<float> dparams;
  if (disc_) {
    dparams = disc_->parameters();
    for (const auto& [name, p] : dparams.items()) tensors.emplace_back("disc/" + name, &p.value());
    header["adam_d_steps"] = disc_opt_.steps();
    const auto& dopt = disc_opt_;
    for (std::size_t i = 0; i < dopt.params().size(); ++i) {
      const std::string& name = dopt.params().items()[i].first;
      tensors.emplace_back("adam_d/m/" + name, &dopt.first_moments()[i]);
      tensors.emplace_back("adam_d/v/" + name, &dopt.second_moments()[i]);
    }
  }
  write_checkpoint(path, header, tensors);
  last_checkpoint_ = path;
}

namespace {

void require_compatible(const TrainConfig& mine, const TrainConfig& theirs, const fs::path& path) {
  if (!(mine.network == theirs.network) || mine.n_steps != theirs.n_steps) {
    throw std::runtime_error("checkpoint " + path.string() +
                             " was trained with a different architecture or step count");
  }
}

}  // namespace

void Trainer::resume(const fs::path& path) {
  const CheckpointFile file = read_checkpoint(path);
  const TrainConfig saved = config_from_header(file.header);
  require_compatible(config_, saved, path);
  if (saved.phase != config_.phase || saved.variant != config_.variant) {
    throw std::runtime_error("checkpoint " + path.string() + " belongs to a different phase or variant");
  }
  ParamList<float> all = net_->all_parameters();
  copy_params(file, "net/", all);
  copy_moments(file, "adam_g/", gen_opt_);
  gen_opt_.set_steps(file.header.at("adam_g_steps").get<std::int64_t>());
  if (disc_) {
    ParamList<float> dparams = disc_->parameters();
    copy_params(file, "disc/", dparams);
    copy_moments(file, "adam_d/", disc_opt_);
    disc_opt_.set_steps(file.header.at("adam_d_steps").get<std::int64_t>());
  }
  sampler_.restore(file.header.at("sampler"));
  iteration_ = file.header.at("iteration").get<int>();
  last_checkpoint_ = path;
}

void Trainer::load_generator(const fs::path& path) {
  const CheckpointFile file = read_checkpoint(path);
  require_compatible(config_, config_from_header(file.header), path);
  ParamList<float> all = net_->all_parameters();
  copy_params(file, "net/", all);
}

// ---------------------------------------------------------------------------

NrmseSource parse_nrmse_source(const std::string& s) {
  if (s == "branch") return NrmseSource::Branch;
  if (s == "gt-detector") return NrmseSource::External;
  throw std::invalid_argument("unknown nrmse source '" + s + "' (expected branch or gt-detector)");
}

EvalResult evaluate(const DicNetwork<float>& net, const std::vector<Sample>& samples,
                    const EvalOptions& options) {
  if (samples.empty()) throw std::invalid_argument("evaluate: the split is empty");
  NoGradGuard guard;
  EvalResult result;
  std::vector<MetricReport> bicubic;
  for (const Sample& sample : samples) {
    const StepTrace<float> trace = net.forward(Var<float>(sample.lr), options.n_steps, options.variant);
    const double width = face_width(sample.landmarks);
    MetricReport report;
    report.id = sample.id;
    const int n = static_cast<int>(trace.sr_images.size());
    for (int s = 0; s < n; ++s) {
      const bool last = s + 1 == n;
      if (!options.per_step && !last) continue;
      const Image sr = quantize_u8(trace.sr_images[s].value());
      StepMetrics m{psnr_y(sr, sample.hr), ssim_y(sr, sample.hr), std::nullopt};
      if (options.nrmse_source == NrmseSource::Branch && !trace.heatmaps.empty()) {
        m.nrmse = nrmse(heatmaps_to_landmarks(trace.heatmaps[s].value()).points, sample.landmarks, width);
      } else if (options.nrmse_source == NrmseSource::External && last) {
        m.nrmse = nrmse(read_landmarks(options.external_dir / (sample.id + ".txt")), sample.landmarks, width);
      }
      if (last) {
        report.psnr_db = m.psnr_db;
        report.ssim = m.ssim;
        report.nrmse = m.nrmse;
      }
      if (options.per_step) report.per_step.push_back(m);
    }
    result.reports.push_back(std::move(report));

    const Image up = quantize_u8(bicubic_resize(sample.lr, kHrSize, kHrSize));
    bicubic.push_back({sample.id, psnr_y(up, sample.hr), ssim_y(up, sample.hr), std::nullopt, {}});
  }
  result.mean = aggregate(result.reports);
  result.bicubic = aggregate(bicubic, "bicubic");
  return result;
}

}  // namespace dic
