#include "partmatch/features.hpp"

#include "partmatch/errors.hpp"
#include "partmatch/ops.hpp"

namespace partmatch {

std::string to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::Max: return "max";
    case Pooling::Avg: return "avg";
    case Pooling::MaxPlusAvg: return "max+avg";
  }
  return "max";
}

Pooling parse_pooling(const std::string& text) {
  if (text == "max") return Pooling::Max;
  if (text == "avg") return Pooling::Avg;
  if (text == "max+avg") return Pooling::MaxPlusAvg;
  throw ConfigError("unknown pooling '" + text + "' (expected max, avg or max+avg)");
}

Var pool(const Var& map, Pooling pooling) {
  switch (pooling) {
    case Pooling::Max: return global_max_pool(map);
    case Pooling::Avg: return global_avg_pool(map);
    case Pooling::MaxPlusAvg: return add(global_max_pool(map), global_avg_pool(map));
  }
  return global_max_pool(map);
}

Var fuse(const std::vector<Var>& parts, Pooling pooling) {
  switch (pooling) {
    case Pooling::Max: return elementwise_max(parts);
    case Pooling::Avg: return elementwise_mean(parts);
    case Pooling::MaxPlusAvg: return add(elementwise_max(parts), elementwise_mean(parts));
  }
  return elementwise_max(parts);
}

}  // namespace partmatch
