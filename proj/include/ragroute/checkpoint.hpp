#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ragroute/diffmath.hpp"

namespace ragroute {

/// Container shared by every persisted model: one line of JSON header, then
/// the tensors as little-endian float64 in header order. The header always
/// carries "kind", "version" and a "tensors" list of {name, rows, cols}.
struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, Tensor2>> tensors;

  const Tensor2& tensor(const std::string& name) const;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path, const std::string& expected_kind);

}  // namespace ragroute
