#include "partmatch/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "partmatch/errors.hpp"

namespace partmatch {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "PARTMATCH-CHECKPOINT";

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  return to_json_text(a.config) == to_json_text(b.config) && a.epoch == b.epoch &&
         a.step == b.step && a.adam_step == b.adam_step && a.rng_state == b.rng_state &&
         a.arrays == b.arrays;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  json manifest;
  manifest["dtype"] = "f64le";
  manifest["epoch"] = epoch;
  manifest["step"] = step;
  manifest["adam_step"] = adam_step;
  manifest["seed"] = config.seed;
  manifest["rng_state"] = rng_state;
  manifest["config"] = json::parse(to_json_text(config));
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    if (shape_size(a.shape) != a.values.size()) {
      throw ShapeError("checkpoint array '" + a.name + "' does not match its shape");
    }
    entries.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.values.size()}});
    offset += a.values.size();
  }
  manifest["arrays"] = std::move(entries);
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << kMagic << ' ' << kCheckpointVersion << '\n' << text.size() << '\n' << text;
  for (const auto& a : arrays) detail::write_f64_le(os, a.values);
  if (!os) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  if (!(hs >> magic >> version) || magic != kMagic) {
    throw IoError("'" + path.string() + "' is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string size_line;
  std::getline(is, size_line);
  std::size_t manifest_size = 0;
  try {
    manifest_size = std::stoul(size_line);
  } catch (const std::exception&) {
    throw IoError("corrupt checkpoint header in '" + path.string() + "'");
  }
  std::string text(manifest_size, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(manifest_size))) {
    throw IoError("truncated checkpoint manifest");
  }

  Checkpoint ck;
  json manifest;
  try {
    manifest = json::parse(text);
    if (manifest.at("dtype") != "f64le") throw IoError("unsupported checkpoint dtype");
    ck.config = parse_train_config(manifest.at("config").dump());
    ck.epoch = manifest.at("epoch").get<std::size_t>();
    ck.step = manifest.at("step").get<std::size_t>();
    ck.adam_step = manifest.at("adam_step").get<std::size_t>();
    ck.rng_state = manifest.at("rng_state").get<std::string>();
    for (const auto& e : manifest.at("arrays")) {
      NamedArray a;
      a.name = e.at("name").get<std::string>();
      a.shape = e.at("shape").get<Shape>();
      a.values.resize(e.at("count").get<std::size_t>());
      ck.arrays.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  for (auto& a : ck.arrays) detail::read_f64_le(is, a.values);
  return ck;
}

void load_model_state(Model& model, const Checkpoint& checkpoint) {
  for (auto& p : model.params().all()) {
    const NamedArray* a = checkpoint.find("param/" + p.name);
    if (!a || a->shape != p.var.shape()) {
      throw ConfigError("checkpoint does not provide parameter '" + p.name + "' with shape " +
                        shape_string(p.var.shape()));
    }
    p.var.mutable_value().data() = a->values;
  }
  for (auto& b : model.buffers()) {
    const NamedArray* a = checkpoint.find("buffer/" + b.name);
    if (!a || a->values.size() != b.values->size()) {
      throw ConfigError("checkpoint does not provide buffer '" + b.name + "'");
    }
    *b.values = a->values;
  }
}

}  // namespace partmatch
