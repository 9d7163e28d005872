#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partmatch/checkpoint.hpp"
#include "partmatch/config.hpp"
#include "partmatch/model.hpp"
#include "partmatch/optim.hpp"
#include "partmatch/retrieval.hpp"
#include "partmatch/synth.hpp"

namespace partmatch {

struct TopK {
  double top1 = 0.0;
  double top5 = 0.0;
  double top10 = 0.0;

  friend bool operator==(const TopK&, const TopK&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0-based
  double loss = 0.0;      // mean over the epoch's steps
  double lr = 0.0;
  std::optional<TopK> eval;  // validation split, every eval_interval epochs

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Global representations of a split under eval-mode batch norm.
struct SplitEmbeddings {
  Tensor images;  // [num_images, C2]
  std::vector<int> image_ids;
  Tensor texts;   // [num_texts, C2]
  std::vector<int> text_ids;
};

SplitEmbeddings embed_split(Model& model, const Dataset& dataset, Split split);

/// Texts query, images form the gallery; top-1/5/10 by cosine similarity of
/// the global representations.
TopK evaluate(Model& model, const Dataset& dataset, Split split);
/// Rebuilds the model from a checkpoint and evaluates it.
TopK evaluate(const Checkpoint& checkpoint, const Dataset& dataset, Split split);

/// Throws ConfigError if the dataset does not fit the model dimensions.
void check_compatible(const ModelConfig& model, const Dataset& dataset);

/// Single-writer training loop over the training split: sample a batch,
/// encode both modalities, multi-stage loss, backward, Adam.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const Dataset& dataset);
  /// Resumes exactly where `checkpoint` was taken.
  Trainer(const Checkpoint& checkpoint, const Dataset& dataset);

  /// One optimizer step; returns the loss of the batch it trained on.
  /// Throws NumericError naming the first non-finite loss term.
  double step();
  EpochRecord run_epoch();
  /// Runs the remaining epochs; `on_epoch` sees each record as it lands.
  const std::vector<EpochRecord>& run(const std::function<void(const EpochRecord&)>& on_epoch = {});

  Checkpoint checkpoint();

  Model& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epoch() const { return step_ / steps_per_epoch_; }
  std::size_t steps_done() const { return step_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  const std::vector<EpochRecord>& history() const { return history_; }

 private:
  TrainConfig config_;
  const Dataset* dataset_;
  Model model_;
  Adam optimizer_;
  Rng rng_;
  std::size_t step_ = 0;
  std::size_t steps_per_epoch_ = 1;
  std::vector<EpochRecord> history_;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  Checkpoint checkpoint;
};

TrainResult train(const TrainConfig& config, const Dataset& dataset);

/// `epoch,loss,lr,top1,top5,top10` with full-precision numbers and empty
/// metric fields on epochs without evaluation.
void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

struct GradCheckConfig {
  ModelConfig model = ModelConfig::tiny();
  LossWeights loss;
  std::size_t batch_size = 4;
  std::uint64_t seed = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_parameters = 50000;
};

/// Central-difference check of every trainable parameter of the full model
/// and multi-stage loss on one fixed synthetic batch. `extra_loss`, when
/// given, is added to the loss (used to plant faulty gradients in tests).
GradCheckReport gradcheck(const GradCheckConfig& config,
                          const std::function<Var(Model&)>& extra_loss = {});

enum class AblationAxis { Regions, Bottlenecks, Downsample, Fusion, LossStages };

AblationAxis parse_ablation_axis(const std::string& text);
const char* to_string(AblationAxis axis);

/// Returns `base` with one axis value applied; throws ConfigError for values
/// the axis does not accept.
TrainConfig apply_ablation_value(const TrainConfig& base, AblationAxis axis, const std::string& value);

struct AblationRow {
  std::string value;
  std::vector<TopK> per_seed;
  TopK mean;
};

struct AblationTable {
  AblationAxis axis;
  std::vector<AblationRow> rows;
};

/// Trains one model per (value, seed) on the training split and evaluates
/// on `split`. All values are validated before any training starts.
AblationTable ablate(AblationAxis axis, std::span<const std::string> values, const TrainConfig& base,
                     const Dataset& dataset, std::span<const std::uint64_t> seeds,
                     Split split = Split::Test,
                     const std::function<void(const std::string&, std::uint64_t, const TopK&)>& progress = {});

void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table);

}  // namespace partmatch
