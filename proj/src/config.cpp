#include "partmatch/config.hpp"

#include <cmath>

#include "json.hpp"
#include "json_fields.hpp"
#include "partmatch/errors.hpp"

namespace partmatch {

using nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (epochs > 0 && warmup_epochs >= epochs) throw ConfigError("train: warmup_epochs must be < epochs");
  if (!(base_lr > 0.0) || !(decay_factor > 0.0)) throw ConfigError("train: learning rates must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1) and eps must be positive");
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw ConfigError("train: flip_probability must lie in [0, 1]");
  }
  if (eval_interval == 0) throw ConfigError("train: eval_interval must be >= 1");
}

TrainConfig TrainConfig::reference() {
  TrainConfig c;
  c.epochs = 80;
  c.warmup_epochs = 10;
  c.decay_epoch = 50;
  c.batch_size = 64;
  c.steps_per_epoch = 0;
  c.model.visual = VisualConfig::reference();
  c.model.textual = TextualConfig::reference();
  return c;
}

TrainConfig parse_train_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  TrainConfig c;
  detail::FieldReader top(doc, "");
  top.read("seed", c.seed);

  if (const json* s = top.section("train")) {
    detail::FieldReader r(*s, "train");
    r.read("epochs", c.epochs);
    r.read("base_lr", c.base_lr);
    r.read("warmup_epochs", c.warmup_epochs);
    r.read("decay_epoch", c.decay_epoch);
    r.read("decay_factor", c.decay_factor);
    r.read("weight_decay", c.weight_decay);
    r.read("batch_size", c.batch_size);
    r.read("beta1", c.beta1);
    r.read("beta2", c.beta2);
    r.read("adam_eps", c.adam_eps);
    r.read("flip_probability", c.flip_probability);
    r.read("eval_interval", c.eval_interval);
    r.read("steps_per_epoch", c.steps_per_epoch);
    r.finish();
  }
  std::size_t regions = c.model.visual.regions;
  std::size_t low = c.model.visual.low_channels;
  std::size_t high = c.model.visual.high_channels;
  if (const json* s = top.section("model")) {
    detail::FieldReader r(*s, "model");
    std::string pooling = to_string(c.model.pooling);
    r.read("regions", regions);
    r.read("low_channels", low);
    r.read("high_channels", high);
    r.read("pooling", pooling);
    r.finish();
    c.model.pooling = parse_pooling(pooling);
  }
  c.model.set_regions(regions);
  c.model.visual.low_channels = c.model.textual.low_channels = low;
  c.model.visual.high_channels = c.model.textual.high_channels = high;
  if (const json* s = top.section("visual")) {
    detail::FieldReader r(*s, "visual");
    r.read("height", c.model.visual.height);
    r.read("width", c.model.visual.width);
    r.read("input_height", c.model.visual.input_height);
    r.read("input_width", c.model.visual.input_width);
    r.finish();
  }
  if (const json* s = top.section("textual")) {
    detail::FieldReader r(*s, "textual");
    r.read("length", c.model.textual.length);
    r.read("embed_dim", c.model.textual.embed_dim);
    r.read("bottlenecks", c.model.textual.bottlenecks);
    r.read("downsample_steps", c.model.textual.downsample_steps);
    r.read("vocab_size", c.model.textual.vocab_size);
    r.finish();
  }
  if (const json* s = top.section("loss")) {
    detail::FieldReader r(*s, "loss");
    r.read("lambda1", c.loss.low);
    r.read("lambda2", c.loss.local);
    r.read("lambda3", c.loss.global);
    r.read("epsilon", c.loss.epsilon);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

std::string to_json_text(const TrainConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["train"] = {{"epochs", c.epochs},
                  {"base_lr", c.base_lr},
                  {"warmup_epochs", c.warmup_epochs},
                  {"decay_epoch", c.decay_epoch},
                  {"decay_factor", c.decay_factor},
                  {"weight_decay", c.weight_decay},
                  {"batch_size", c.batch_size},
                  {"beta1", c.beta1},
                  {"beta2", c.beta2},
                  {"adam_eps", c.adam_eps},
                  {"flip_probability", c.flip_probability},
                  {"eval_interval", c.eval_interval},
                  {"steps_per_epoch", c.steps_per_epoch}};
  doc["model"] = {{"regions", c.model.visual.regions},
                  {"low_channels", c.model.visual.low_channels},
                  {"high_channels", c.model.visual.high_channels},
                  {"pooling", to_string(c.model.pooling)}};
  doc["visual"] = {{"height", c.model.visual.height},
                   {"width", c.model.visual.width},
                   {"input_height", c.model.visual.input_height},
                   {"input_width", c.model.visual.input_width}};
  doc["textual"] = {{"length", c.model.textual.length},
                    {"embed_dim", c.model.textual.embed_dim},
                    {"bottlenecks", c.model.textual.bottlenecks},
                    {"downsample_steps", c.model.textual.downsample_steps},
                    {"vocab_size", c.model.textual.vocab_size}};
  doc["loss"] = {{"lambda1", c.loss.low},
                 {"lambda2", c.loss.local},
                 {"lambda3", c.loss.global},
                 {"epsilon", c.loss.epsilon}};
  return doc.dump(2);
}

}  // namespace partmatch
