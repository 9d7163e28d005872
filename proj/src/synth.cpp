#include "partmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "json_fields.hpp"
#include "partmatch/errors.hpp"
#include "partmatch/ops.hpp"
#include "partmatch/textual.hpp"

namespace partmatch {

using nlohmann::json;

int SyntheticSpec::first_distractor_token() const {
  return kFirstContentToken + static_cast<int>(latent_dim * levels);
}

void SyntheticSpec::validate() const {
  if (num_identities == 0 || images_per_identity == 0) {
    throw ConfigError("synth: num_identities and images_per_identity must be >= 1");
  }
  if (val_identities + test_identities >= num_identities) {
    throw ConfigError("synth: validation + test identities leave no training identities");
  }
  if (texts_per_image == 0) throw ConfigError("synth: texts_per_image must be >= 1");
  if (latent_dim == 0 || levels < 2) throw ConfigError("synth: latent_dim >= 1 and levels >= 2 required");
  if (vocab_size <= static_cast<std::size_t>(first_distractor_token())) {
    throw ConfigError("synth: vocab_size must exceed levels x latent_dim + reserved markers (" +
                      std::to_string(first_distractor_token()) + ")");
  }
  if (input_height < latent_dim || input_width == 0) {
    throw ConfigError("synth: image must have at least one row per latent component");
  }
  if (!(image_noise_sigma >= 0.0)) throw ConfigError("synth: image_noise_sigma must be >= 0");
  const double combos = std::pow(static_cast<double>(levels), static_cast<double>(latent_dim));
  if (combos < static_cast<double>(num_identities)) {
    throw ConfigError("synth: levels^latent_dim is smaller than num_identities");
  }
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  SyntheticSpec spec;
  detail::FieldReader r(doc, "");
  r.read("num_identities", spec.num_identities);
  r.read("val_identities", spec.val_identities);
  r.read("test_identities", spec.test_identities);
  r.read("images_per_identity", spec.images_per_identity);
  r.read("texts_per_image", spec.texts_per_image);
  r.read("latent_dim", spec.latent_dim);
  r.read("levels", spec.levels);
  r.read("image_noise_sigma", spec.image_noise_sigma);
  r.read("text_noise_tokens", spec.text_noise_tokens);
  r.read("vocab_size", spec.vocab_size);
  r.read("input_height", spec.input_height);
  r.read("input_width", spec.input_width);
  r.read("seed", spec.seed);
  r.finish();
  spec.validate();
  return spec;
}

namespace {

json spec_json(const SyntheticSpec& s) {
  return json{{"num_identities", s.num_identities},
              {"val_identities", s.val_identities},
              {"test_identities", s.test_identities},
              {"images_per_identity", s.images_per_identity},
              {"texts_per_image", s.texts_per_image},
              {"latent_dim", s.latent_dim},
              {"levels", s.levels},
              {"image_noise_sigma", s.image_noise_sigma},
              {"text_noise_tokens", s.text_noise_tokens},
              {"vocab_size", s.vocab_size},
              {"input_height", s.input_height},
              {"input_width", s.input_width},
              {"seed", s.seed}};
}

// Colour of latent level q: three phase-shifted samples of one sinusoid, so
// every level has a distinct, roughly unit-norm colour.
std::array<double, 3> level_colour(std::size_t q, std::size_t levels) {
  std::array<double, 3> c{};
  for (std::size_t k = 0; k < 3; ++k) {
    c[k] = std::sin(2.0 * std::numbers::pi *
                    (static_cast<double>(q) / static_cast<double>(levels) + static_cast<double>(k) / 3.0));
  }
  return c;
}

std::size_t band_begin(std::size_t m, const SyntheticSpec& s) {
  return m * s.input_height / s.latent_dim;
}

Tensor render_image(const std::vector<int>& latent, const SyntheticSpec& s, Rng& rng) {
  Tensor img(Shape{s.input_height, s.input_width, 3});
  for (std::size_t m = 0; m < s.latent_dim; ++m) {
    const auto colour = level_colour(static_cast<std::size_t>(latent[m]), s.levels);
    for (std::size_t y = band_begin(m, s); y < band_begin(m + 1, s); ++y) {
      for (std::size_t x = 0; x < s.input_width; ++x) {
        for (std::size_t k = 0; k < 3; ++k) img[(y * s.input_width + x) * 3 + k] = colour[k];
      }
    }
  }
  if (s.image_noise_sigma > 0.0) {
    for (auto& v : img.data()) v += rng.normal(0.0, s.image_noise_sigma);
  }
  return img;
}

std::vector<int> render_text(const std::vector<int>& latent, const SyntheticSpec& s, Rng& rng) {
  std::vector<int> ids;
  for (std::size_t m = 0; m < s.latent_dim; ++m) {
    ids.push_back(kFirstContentToken + static_cast<int>(m * s.levels) + latent[m]);
  }
  const int first = s.first_distractor_token();
  const auto span = static_cast<std::uint64_t>(static_cast<int>(s.vocab_size) - first);
  for (std::size_t i = 0; i < s.text_noise_tokens; ++i) {
    ids.push_back(first + static_cast<int>(rng.below(span)));
  }
  rng.shuffle(ids.begin(), ids.end());
  return ids;
}

std::vector<double> band_means(const Tensor& img, const SyntheticSpec& s) {
  std::vector<double> f(s.latent_dim * 3, 0.0);
  for (std::size_t m = 0; m < s.latent_dim; ++m) {
    const std::size_t y0 = band_begin(m, s), y1 = band_begin(m + 1, s);
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = 0; x < s.input_width; ++x) {
        for (std::size_t k = 0; k < 3; ++k) f[m * 3 + k] += img[(y * s.input_width + x) * 3 + k];
      }
    }
    const double count = static_cast<double>((y1 - y0) * s.input_width);
    for (std::size_t k = 0; k < 3; ++k) f[m * 3 + k] /= count;
  }
  return f;
}

}  // namespace

std::string to_json_text(const SyntheticSpec& spec) { return spec_json(spec).dump(2); }

const char* to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val" || text == "validation") return Split::Validation;
  if (text == "test") return Split::Test;
  throw ConfigError("unknown split '" + text + "' (expected train, val or test)");
}

SplitIndex Dataset::split(Split which) const {
  SplitIndex out;
  out.identities = split_identities[static_cast<std::size_t>(which)];
  const std::set<int> members(out.identities.begin(), out.identities.end());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (members.count(image_identity[i])) out.images.push_back(i);
  }
  for (std::size_t t = 0; t < texts.size(); ++t) {
    if (members.count(text_identity[t])) out.texts.push_back(t);
  }
  return out;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  Rng rng(spec.seed);

  std::set<std::vector<int>> used;
  while (ds.latents.size() < spec.num_identities) {
    std::vector<int> z(spec.latent_dim);
    for (auto& v : z) v = static_cast<int>(rng.below(spec.levels));
    if (used.insert(z).second) ds.latents.push_back(std::move(z));
  }

  for (std::size_t id = 0; id < spec.num_identities; ++id) {
    for (std::size_t i = 0; i < spec.images_per_identity; ++i) {
      const std::size_t image_index = ds.images.size();
      ds.images.push_back(render_image(ds.latents[id], spec, rng));
      ds.image_identity.push_back(static_cast<int>(id));
      for (std::size_t t = 0; t < spec.texts_per_image; ++t) {
        ds.texts.push_back(render_text(ds.latents[id], spec, rng));
        ds.text_image.push_back(image_index);
        ds.text_identity.push_back(static_cast<int>(id));
      }
    }
  }

  std::vector<int> order(spec.num_identities);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order.begin(), order.end());
  const std::size_t n_train = spec.train_identities();
  auto cut = order.begin();
  ds.split_identities[0].assign(cut, cut + static_cast<long>(n_train));
  cut += static_cast<long>(n_train);
  ds.split_identities[1].assign(cut, cut + static_cast<long>(spec.val_identities));
  cut += static_cast<long>(spec.val_identities);
  ds.split_identities[2].assign(cut, order.end());
  for (auto& ids : ds.split_identities) std::sort(ids.begin(), ids.end());

  ds.separability = nearest_centroid_accuracy(ds);
  return ds;
}

double nearest_centroid_accuracy(const Dataset& dataset) {
  const auto& s = dataset.spec;
  const std::size_t dims = s.latent_dim * 3;
  std::vector<std::vector<double>> features;
  features.reserve(dataset.images.size());
  for (const auto& img : dataset.images) features.push_back(band_means(img, s));

  std::vector<std::vector<double>> centroids(s.num_identities, std::vector<double>(dims, 0.0));
  std::vector<std::size_t> counts(s.num_identities, 0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto id = static_cast<std::size_t>(dataset.image_identity[i]);
    for (std::size_t d = 0; d < dims; ++d) centroids[id][d] += features[i][d];
    ++counts[id];
  }
  for (std::size_t id = 0; id < centroids.size(); ++id) {
    for (auto& v : centroids[id]) v /= static_cast<double>(std::max<std::size_t>(counts[id], 1));
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_id = 0;
    for (std::size_t id = 0; id < centroids.size(); ++id) {
      double dist = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = features[i][d] - centroids[id][d];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_id = id;
      }
    }
    correct += static_cast<int>(best_id) == dataset.image_identity[i] ? 1 : 0;
  }
  return features.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(features.size());
}

Tensor augment_flip(const Tensor& image, double probability, Rng& rng) {
  return rng.bernoulli(probability) ? flip_width(image) : image;
}

Batch make_batch(const Dataset& dataset, Split split, std::size_t batch_size,
                 std::size_t text_length, Rng& rng, double flip_probability) {
  const SplitIndex index = dataset.split(split);
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (batch_size > index.texts.size()) {
    throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds the " +
                      std::to_string(index.texts.size()) + " pairs of the " + to_string(split) +
                      " split");
  }
  std::vector<std::vector<std::size_t>> texts_of(dataset.spec.num_identities);
  for (std::size_t t : index.texts) texts_of[static_cast<std::size_t>(dataset.text_identity[t])].push_back(t);

  const auto& s = dataset.spec;
  Batch batch;
  batch.images = Tensor(Shape{batch_size, s.input_height, s.input_width, 3});
  const std::size_t image_len = s.input_height * s.input_width * 3;
  for (std::size_t n = 0; n < batch_size; ++n) {
    const int identity = index.identities[rng.below(index.identities.size())];
    const auto& candidates = texts_of[static_cast<std::size_t>(identity)];
    const std::size_t text = candidates[rng.below(candidates.size())];
    const Tensor image = augment_flip(dataset.images[dataset.text_image[text]], flip_probability, rng);
    std::copy(image.data().begin(), image.data().end(),
              batch.images.data().begin() + static_cast<long>(n * image_len));
    const auto seq = tokenize_and_pad(dataset.texts[text], text_length);
    batch.token_ids.insert(batch.token_ids.end(), seq.ids.begin(), seq.ids.end());
    batch.identities.push_back(identity);
  }
  batch.labels = MatchLabels::from_identities(batch.identities, batch.identities);
  return batch;
}

std::vector<Batch> make_batches(const Dataset& dataset, Split split, std::size_t batch_size,
                                std::size_t count, std::size_t text_length, Rng& rng,
                                double flip_probability) {
  std::vector<Batch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(make_batch(dataset, split, batch_size, text_length, rng, flip_probability));
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  json manifest;
  manifest["format"] = "partmatch-dataset";
  manifest["version"] = 1;
  manifest["spec"] = spec_json(dataset.spec);
  manifest["counts"] = {{"identities", dataset.latents.size()},
                        {"images", dataset.images.size()},
                        {"texts", dataset.texts.size()}};
  manifest["splits"] = {{"train", dataset.split_identities[0]},
                        {"val", dataset.split_identities[1]},
                        {"test", dataset.split_identities[2]}};
  manifest["latents"] = dataset.latents;
  manifest["image_identity"] = dataset.image_identity;
  manifest["separability"] = dataset.separability;
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write manifest in '" + dir.string() + "'");
    os << manifest.dump(2) << '\n';
  }
  {
    std::ofstream os(dir / "images.f64", std::ios::binary);
    if (!os) throw IoError("cannot write images in '" + dir.string() + "'");
    for (const auto& img : dataset.images) detail::write_f64_le(os, img.values());
    if (!os) throw IoError("failed writing images in '" + dir.string() + "'");
  }
  {
    std::ofstream os(dir / "tokens.txt");
    if (!os) throw IoError("cannot write tokens in '" + dir.string() + "'");
    for (std::size_t t = 0; t < dataset.texts.size(); ++t) {
      os << dataset.text_image[t] << ' ' << dataset.text_identity[t];
      for (int id : dataset.texts[t]) os << ' ' << id;
      os << '\n';
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "manifest.json");
  if (!ms) throw IoError("no dataset manifest in '" + dir.string() + "'");
  json manifest;
  try {
    manifest = json::parse(ms);
  } catch (const json::exception& e) {
    throw IoError("corrupt dataset manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "partmatch-dataset" || manifest.value("version", 0) != 1) {
    throw IoError("'" + dir.string() + "' does not hold a version-1 dataset");
  }
  Dataset ds;
  try {
    ds.spec = parse_synthetic_spec(manifest.at("spec").dump());
    ds.latents = manifest.at("latents").get<std::vector<std::vector<int>>>();
    ds.image_identity = manifest.at("image_identity").get<std::vector<int>>();
    ds.split_identities[0] = manifest.at("splits").at("train").get<std::vector<int>>();
    ds.split_identities[1] = manifest.at("splits").at("val").get<std::vector<int>>();
    ds.split_identities[2] = manifest.at("splits").at("test").get<std::vector<int>>();
    ds.separability = manifest.at("separability").get<double>();
  } catch (const json::exception& e) {
    throw IoError("corrupt dataset manifest: " + std::string(e.what()));
  }

  const auto& s = ds.spec;
  std::ifstream is(dir / "images.f64", std::ios::binary);
  if (!is) throw IoError("missing images.f64 in '" + dir.string() + "'");
  for (std::size_t i = 0; i < ds.image_identity.size(); ++i) {
    Tensor img(Shape{s.input_height, s.input_width, 3});
    detail::read_f64_le(is, img.values());
    ds.images.push_back(std::move(img));
  }

  std::ifstream ts(dir / "tokens.txt");
  if (!ts) throw IoError("missing tokens.txt in '" + dir.string() + "'");
  std::string line;
  while (std::getline(ts, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t image = 0;
    int identity = 0;
    if (!(fields >> image >> identity) || image >= ds.images.size()) {
      throw IoError("malformed token record: " + line);
    }
    std::vector<int> ids;
    int id = 0;
    while (fields >> id) ids.push_back(id);
    ds.text_image.push_back(image);
    ds.text_identity.push_back(identity);
    ds.texts.push_back(std::move(ids));
  }
  return ds;
}

}  // namespace partmatch
