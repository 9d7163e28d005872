#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "partmatch/cmpm.hpp"
#include "partmatch/rng.hpp"
#include "partmatch/tensor.hpp"

namespace partmatch {

/// Shape of a synthetic paired dataset. Each identity owns a latent vector
/// of `latent_dim` components, each quantized to one of `levels` values.
/// Images paint component m as a full-width horizontal band whose colour
/// encodes the level; texts carry one signal token per component, shuffled
/// among `text_noise_tokens` distractors.
struct SyntheticSpec {
  std::size_t num_identities = 48;  // train + validation + test
  std::size_t val_identities = 8;
  std::size_t test_identities = 8;
  std::size_t images_per_identity = 4;
  std::size_t texts_per_image = 2;
  std::size_t latent_dim = 6;
  std::size_t levels = 4;
  double image_noise_sigma = 0.5;
  std::size_t text_noise_tokens = 6;
  std::size_t vocab_size = 64;
  std::size_t input_height = 48;
  std::size_t input_width = 16;
  std::uint64_t seed = 1;

  std::size_t train_identities() const { return num_identities - val_identities - test_identities; }
  /// First id used for distractor tokens; signal ids lie below it.
  int first_distractor_token() const;
  void validate() const;
};

/// Parses a JSON document of SyntheticSpec fields; missing fields keep
/// their defaults, unknown fields are a ConfigError.
SyntheticSpec parse_synthetic_spec(const std::string& json_text);
std::string to_json_text(const SyntheticSpec& spec);

enum class Split { Train = 0, Validation = 1, Test = 2 };

const char* to_string(Split split);
Split parse_split(const std::string& text);

struct SplitIndex {
  std::vector<int> identities;
  std::vector<std::size_t> images;
  std::vector<std::size_t> texts;
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<std::vector<int>> latents;  // per identity, level of each component
  std::vector<Tensor> images;             // [input_height, input_width, 3]
  std::vector<int> image_identity;
  std::vector<std::vector<int>> texts;    // raw ids, no start/end markers
  std::vector<std::size_t> text_image;
  std::vector<int> text_identity;
  std::array<std::vector<int>, 3> split_identities;
  double separability = 0.0;  // nearest-centroid identity accuracy on images

  SplitIndex split(Split which) const;
};

/// Pure function of `spec` (including its seed).
Dataset generate(const SyntheticSpec& spec);

/// Identity accuracy of a nearest-centroid classifier over per-band mean
/// colours of every image.
double nearest_centroid_accuracy(const Dataset& dataset);

/// Reverses the width axis with the given probability.
Tensor augment_flip(const Tensor& image, double probability, Rng& rng);

struct Batch {
  Tensor images;               // [N, H, W, 3]
  std::vector<int> token_ids;  // N padded sequences of length L
  std::vector<int> identities;
  MatchLabels labels;
};

/// Draws N image-text pairs: an identity uniformly with replacement, then
/// one of its images and one text of that image. y(i, j) = 1 iff the
/// identities of pair i and pair j agree, so the diagonal is all ones.
Batch make_batch(const Dataset& dataset, Split split, std::size_t batch_size,
                 std::size_t text_length, Rng& rng, double flip_probability = 0.5);

std::vector<Batch> make_batches(const Dataset& dataset, Split split, std::size_t batch_size,
                                std::size_t count, std::size_t text_length, Rng& rng,
                                double flip_probability = 0.5);

/// Directory layout: manifest.json, images.f64 (little-endian float-64,
/// images back to back), tokens.txt (one text per line: image index,
/// identity, raw token ids).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace partmatch
