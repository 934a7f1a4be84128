#include "ragroute/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "ragroute/errors.hpp"

namespace ragroute {

const Tensor2& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw ValidationError("checkpoint has no tensor \"" + name + "\"");
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header = ckpt.header;
  header["version"] = kCheckpointVersion;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) list.push_back({{"name", name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = list;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write checkpoint " + path);
  out << header.dump() << '\n';
  for (const auto& entry : ckpt.tensors) {
    for (double x : entry.second.data) {
      const auto raw = std::bit_cast<std::uint64_t>(x);
      for (int b = 0; b < 8; ++b) out.put(static_cast<char>((raw >> (8 * b)) & 0xffU));
    }
  }
  if (!out) throw RuntimeFailure("write failed for checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path);
  std::string line;
  std::getline(in, line);
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("checkpoint " + path + ": malformed header");
  }
  if (ckpt.header.value("kind", "") != expected_kind)
    throw ValidationError("checkpoint " + path + ": expected kind \"" + expected_kind + "\"");
  if (ckpt.header.value("version", 0) != kCheckpointVersion)
    throw ValidationError("checkpoint " + path + ": unsupported version");

  const std::string blob{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t offset = 0;
  for (const auto& t : ckpt.header.at("tensors")) {
    Tensor2 tensor(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    if (offset + tensor.size() * 8 > blob.size()) throw ValidationError("checkpoint " + path + ": truncated");
    for (double& x : tensor.data) {
      std::uint64_t raw = 0;
      for (int b = 0; b < 8; ++b)
        raw |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + b])) << (8 * b);
      x = std::bit_cast<double>(raw);
      offset += 8;
    }
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(tensor));
  }
  if (offset != blob.size()) throw ValidationError("checkpoint " + path + ": trailing bytes");
  return ckpt;
}

}  // namespace ragroute
