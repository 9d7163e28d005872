#include "partmatch/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "partmatch/cmpm.hpp"
#include "partmatch/errors.hpp"

namespace partmatch {
namespace {

constexpr std::uint64_t kSamplerSeedMix = 0x9E3779B97F4A7C15ULL;
constexpr std::size_t kEvalChunk = 64;

AdamOptions adam_options(const TrainConfig& c) {
  return AdamOptions{c.beta1, c.beta2, c.adam_eps, c.weight_decay};
}

std::size_t resolve_steps_per_epoch(const TrainConfig& c, const Dataset& ds) {
  if (c.steps_per_epoch > 0) return c.steps_per_epoch;
  const std::size_t texts = ds.split(Split::Train).texts.size();
  return std::max<std::size_t>(1, (texts + c.batch_size - 1) / c.batch_size);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor rows_of(const Var& v) { return v.value(); }

}  // namespace

void check_compatible(const ModelConfig& model, const Dataset& dataset) {
  const auto& s = dataset.spec;
  if (s.input_height != model.visual.input_height || s.input_width != model.visual.input_width) {
    throw ConfigError("dataset images are " + std::to_string(s.input_height) + "x" +
                      std::to_string(s.input_width) + " but the model expects " +
                      std::to_string(model.visual.input_height) + "x" +
                      std::to_string(model.visual.input_width));
  }
  if (s.vocab_size > model.textual.vocab_size) {
    throw ConfigError("dataset vocabulary (" + std::to_string(s.vocab_size) +
                      ") exceeds the model embedding table (" +
                      std::to_string(model.textual.vocab_size) + ")");
  }
}

SplitEmbeddings embed_split(Model& model, const Dataset& dataset, Split split) {
  check_compatible(model.config(), dataset);
  const SplitIndex index = dataset.split(split);
  const auto& s = dataset.spec;
  const std::size_t c2 = model.config().visual.high_channels;
  const std::size_t length = model.config().textual.length;
  const std::size_t image_len = s.input_height * s.input_width * 3;

  SplitEmbeddings out;
  out.images = Tensor(Shape{index.images.size(), c2});
  out.texts = Tensor(Shape{index.texts.size(), c2});

  for (std::size_t begin = 0; begin < index.images.size(); begin += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, index.images.size() - begin);
    Tensor batch(Shape{n, s.input_height, s.input_width, 3});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& img = dataset.images[index.images[begin + i]];
      std::copy(img.data().begin(), img.data().end(), batch.data().begin() + static_cast<long>(i * image_len));
      out.image_ids.push_back(dataset.image_identity[index.images[begin + i]]);
    }
    const Tensor global = rows_of(model.encode_images(Var(std::move(batch)), Mode::Eval).global);
    std::copy(global.data().begin(), global.data().end(), out.images.data().begin() + static_cast<long>(begin * c2));
  }
  for (std::size_t begin = 0; begin < index.texts.size(); begin += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, index.texts.size() - begin);
    std::vector<int> ids;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = index.texts[begin + i];
      const auto seq = tokenize_and_pad(dataset.texts[t], length);
      ids.insert(ids.end(), seq.ids.begin(), seq.ids.end());
      out.text_ids.push_back(dataset.text_identity[t]);
    }
    const Tensor global = rows_of(model.encode_texts(ids, n, Mode::Eval).global);
    std::copy(global.data().begin(), global.data().end(), out.texts.data().begin() + static_cast<long>(begin * c2));
  }
  return out;
}

TopK evaluate(Model& model, const Dataset& dataset, Split split) {
  const SplitEmbeddings e = embed_split(model, dataset, split);
  const Tensor sims = cosine_similarity_matrix(e.texts, e.images);
  const auto acc = topk_accuracy(sims, e.text_ids, e.image_ids);
  return TopK{acc.at(1), acc.at(5), acc.at(10)};
}

TopK evaluate(const Checkpoint& checkpoint, const Dataset& dataset, Split split) {
  Model model(checkpoint.config.model, checkpoint.config.seed);
  load_model_state(model, checkpoint);
  return evaluate(model, dataset, split);
}

Trainer::Trainer(const TrainConfig& config, const Dataset& dataset)
    : config_((config.validate(), config)),
      dataset_(&dataset),
      model_(config_.model, config_.seed),
      optimizer_(model_.params(), adam_options(config_)),
      rng_(config_.seed ^ kSamplerSeedMix),
      steps_per_epoch_(resolve_steps_per_epoch(config_, dataset)) {
  check_compatible(config_.model, dataset);
}

Trainer::Trainer(const Checkpoint& checkpoint, const Dataset& dataset)
    : Trainer(checkpoint.config, dataset) {
  load_model_state(model_, checkpoint);
  for (auto& [name, moments] : optimizer_.state()) {
    const NamedArray* m = checkpoint.find("adam_m/" + name);
    const NamedArray* v = checkpoint.find("adam_v/" + name);
    if (!m || !v || m->values.size() != moments->m.size() || v->values.size() != moments->v.size()) {
      throw ConfigError("checkpoint lacks optimizer state for '" + name + "'");
    }
    moments->m = m->values;
    moments->v = v->values;
    moments->step = checkpoint.adam_step;
  }
  rng_ = Rng::deserialize(checkpoint.rng_state);
  step_ = checkpoint.step;
}

double Trainer::step() {
  const std::size_t epoch_index = epoch();
  const double lr = lr_schedule(epoch_index, config_);
  const std::size_t length = config_.model.textual.length;
  const Batch batch = make_batch(*dataset_, Split::Train, config_.batch_size, length, rng_,
                                 config_.flip_probability);

  model_.params().zero_grad();
  const FeatureSet img = model_.encode_images(Var(batch.images), Mode::Train);
  const FeatureSet txt = model_.encode_texts(batch.token_ids, config_.batch_size, Mode::Train);
  const StageLoss loss = multi_stage_loss(img, txt, batch.labels, config_.loss);
  for (const auto& [name, value] : loss.terms) {
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss term '" + name + "' at step " + std::to_string(step_));
    }
  }
  backward(loss.total);
  optimizer_.step(lr);
  ++step_;
  return loss.total.value().item();
}

EpochRecord Trainer::run_epoch() {
  EpochRecord rec;
  rec.epoch = epoch();
  rec.lr = lr_schedule(rec.epoch, config_);
  double total = 0.0;
  std::size_t count = 0;
  do {
    total += step();
    ++count;
  } while (step_ % steps_per_epoch_ != 0);
  rec.loss = total / static_cast<double>(count);
  if ((rec.epoch + 1) % config_.eval_interval == 0 || rec.epoch + 1 == config_.epochs) {
    rec.eval = evaluate(model_, *dataset_, Split::Validation);
  }
  history_.push_back(rec);
  return rec;
}

const std::vector<EpochRecord>& Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (epoch() < config_.epochs) {
    const EpochRecord rec = run_epoch();
    if (on_epoch) on_epoch(rec);
  }
  return history_;
}

Checkpoint Trainer::checkpoint() {
  Checkpoint ck;
  ck.config = config_;
  ck.epoch = epoch();
  ck.step = step_;
  ck.rng_state = rng_.serialize();
  for (const auto& p : model_.params().all()) {
    ck.arrays.push_back({"param/" + p.name, p.var.shape(), p.var.value().data()});
  }
  for (const auto& b : model_.buffers()) {
    ck.arrays.push_back({"buffer/" + b.name, Shape{b.values->size()}, *b.values});
  }
  for (const auto& [name, moments] : optimizer_.state()) {
    const Shape shape = model_.params().get(name).var.shape();
    ck.arrays.push_back({"adam_m/" + name, shape, moments->m});
    ck.arrays.push_back({"adam_v/" + name, shape, moments->v});
    ck.adam_step = moments->step;
  }
  return ck;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset) {
  Trainer trainer(config, dataset);
  trainer.run();
  return TrainResult{trainer.history(), trainer.checkpoint()};
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "epoch,loss,lr,top1,top5,top10\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.lr) << ',';
    if (r.eval) {
      os << format_double(r.eval->top1) << ',' << format_double(r.eval->top5) << ','
         << format_double(r.eval->top10);
    } else {
      os << ",,";
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

GradCheckReport gradcheck(const GradCheckConfig& config, const std::function<Var(Model&)>& extra_loss) {
  Model model(config.model, config.seed);
  const std::size_t count = model.params().trainable_count();
  if (count >= config.max_parameters) {
    throw ConfigError("gradcheck needs tiny dimensions: " + std::to_string(count) +
                      " trainable parameters (limit " + std::to_string(config.max_parameters) + ")");
  }

  SyntheticSpec spec;
  spec.input_height = config.model.visual.input_height;
  spec.input_width = config.model.visual.input_width;
  spec.latent_dim = std::min<std::size_t>(4, spec.input_height);
  spec.levels = 2;
  spec.num_identities = 6;
  spec.val_identities = 1;
  spec.test_identities = 1;
  spec.images_per_identity = 2;
  spec.texts_per_image = 1;
  spec.text_noise_tokens = 2;
  spec.vocab_size = config.model.textual.vocab_size;
  spec.seed = config.seed;
  const Dataset data = generate(spec);
  Rng rng(config.seed);
  const Batch batch = make_batch(data, Split::Train, config.batch_size, config.model.textual.length, rng);

  auto forward = [&]() {
    const FeatureSet img = model.encode_images(Var(batch.images), Mode::Train);
    const FeatureSet txt = model.encode_texts(batch.token_ids, config.batch_size, Mode::Train);
    Var loss = multi_stage_loss(img, txt, batch.labels, config.loss).total;
    if (extra_loss) loss = add(loss, extra_loss(model));
    return loss;
  };
  const auto params = model.params().trainable();
  return finite_diff_check(forward, params, config.step, config.tolerance);
}

AblationAxis parse_ablation_axis(const std::string& text) {
  if (text == "regions") return AblationAxis::Regions;
  if (text == "bottlenecks") return AblationAxis::Bottlenecks;
  if (text == "downsample") return AblationAxis::Downsample;
  if (text == "fusion") return AblationAxis::Fusion;
  if (text == "loss-stages") return AblationAxis::LossStages;
  throw ConfigError("unknown ablation axis '" + text +
                    "' (expected regions, bottlenecks, downsample, fusion or loss-stages)");
}

const char* to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::Regions: return "regions";
    case AblationAxis::Bottlenecks: return "bottlenecks";
    case AblationAxis::Downsample: return "downsample";
    case AblationAxis::Fusion: return "fusion";
    case AblationAxis::LossStages: return "loss-stages";
  }
  return "regions";
}

TrainConfig apply_ablation_value(const TrainConfig& base, AblationAxis axis, const std::string& value) {
  TrainConfig c = base;
  auto as_count = [&]() -> std::size_t {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != value.size()) {
      throw ConfigError(std::string("axis ") + to_string(axis) + ": '" + value + "' is not a count");
    }
    return v;
  };
  switch (axis) {
    case AblationAxis::Regions: c.model.set_regions(as_count()); break;
    case AblationAxis::Bottlenecks: c.model.textual.bottlenecks = as_count(); break;
    case AblationAxis::Downsample: c.model.textual.downsample_steps = as_count(); break;
    case AblationAxis::Fusion: c.model.pooling = parse_pooling(value); break;
    case AblationAxis::LossStages: {
      if (value.size() != 1) throw ConfigError("axis loss-stages: expected a variant letter a-f");
      const LossWeights w = LossWeights::variant(value[0]);
      c.loss.low = w.low;
      c.loss.local = w.local;
      c.loss.global = w.global;
      break;
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("axis ") + to_string(axis) + " value '" + value + "': " + e.what());
  }
  return c;
}

AblationTable ablate(AblationAxis axis, std::span<const std::string> values, const TrainConfig& base,
                     const Dataset& dataset, std::span<const std::uint64_t> seeds, Split split,
                     const std::function<void(const std::string&, std::uint64_t, const TopK&)>& progress) {
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::vector<TrainConfig> configs;
  for (const auto& v : values) {
    configs.push_back(apply_ablation_value(base, axis, v));
    check_compatible(configs.back().model, dataset);
  }

  AblationTable table{axis, {}};
  for (std::size_t i = 0; i < values.size(); ++i) {
    AblationRow row;
    row.value = values[i];
    for (std::uint64_t seed : seeds) {
      TrainConfig c = configs[i];
      c.seed = seed;
      Trainer trainer(c, dataset);
      trainer.run();
      const TopK r = evaluate(trainer.model(), dataset, split);
      if (progress) progress(values[i], seed, r);
      row.per_seed.push_back(r);
    }
    const double n = static_cast<double>(row.per_seed.size());
    for (const auto& r : row.per_seed) {
      row.mean.top1 += r.top1 / n;
      row.mean.top5 += r.top5 / n;
      row.mean.top10 += r.top10 / n;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << to_string(table.axis) << ",seeds,top1,top5,top10\n";
  for (const auto& row : table.rows) {
    os << row.value << ',' << row.per_seed.size() << ',' << format_double(row.mean.top1) << ','
       << format_double(row.mean.top5) << ',' << format_double(row.mean.top10) << '\n';
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace partmatch
