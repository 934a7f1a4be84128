#include "ragroute/embeddings.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "ragroute/errors.hpp"
#include "ragroute/hashing.hpp"

namespace ragroute {

namespace fs = std::filesystem;

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::kQuery: return "query";
    case Channel::kDocument: return "document";
    case Channel::kCross: return "cross";
  }
  return "?";
}

Channel parse_channel(std::string_view name) {
  if (name == "query") return Channel::kQuery;
  if (name == "document") return Channel::kDocument;
  if (name == "cross") return Channel::kCross;
  throw ValidationError("unknown channel \"" + std::string(name) + "\"");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

EmbeddingProvider EmbeddingProvider::feature_hash(std::size_t dim) {
  if (dim == 0) throw ValidationError("feature-hash dimension must be positive");
  EmbeddingProvider p;
  p.kind_ = Kind::kFeatureHash;
  p.dim_ = dim;
  return p;
}

BaseEmbedding EmbeddingProvider::hash_embedding(std::string_view text, std::uint64_t salt) const {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw ValidationError("cannot embed empty text");
  std::vector<double> v(dim_, 0.0);
  for (const auto& tok : tokens) {
    const std::uint64_t h = salted_fnv1a64(salt, tok);
    v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  // Every token landing in the same bucket with opposite signs cancels out.
  if (norm == 0.0) v[0] = 1.0;
  else
    for (double& x : v) x /= norm;
  return {std::move(v)};
}

BaseEmbedding EmbeddingProvider::lookup(Channel channel, std::string_view id) const {
  auto table = tables_.find(channel);
  if (table == tables_.end())
    throw ValidationError("precomputed provider has no " + std::string(channel_name(channel)) + " channel");
  auto it = table->second.find(std::string(id));
  if (it == table->second.end())
    throw ValidationError("precomputed " + std::string(channel_name(channel)) + " embedding missing id \"" +
                          std::string(id) + "\"");
  return {it->second};
}

BaseEmbedding EmbeddingProvider::text_embedding(Channel channel, std::string_view text, std::string_view id) const {
  if (kind_ == Kind::kPrecomputed) return lookup(channel, id);
  return hash_embedding(text, salt(channel));
}

BaseEmbedding EmbeddingProvider::cross_embedding(std::string_view doc_text, std::string_view query_text,
                                                 std::string_view id) const {
  if (kind_ == Kind::kPrecomputed) return lookup(Channel::kCross, id);
  if (tokenize(doc_text).empty() || tokenize(query_text).empty())
    throw ValidationError("cross embedding needs non-empty document and query");
  std::string joined;
  joined.reserve(doc_text.size() + query_text.size() + 1);
  joined.append(doc_text).push_back('\x1f');
  joined.append(query_text);
  return hash_embedding(joined, cross_salt_);
}

std::size_t EmbeddingProvider::count(Channel c) const {
  auto it = tables_.find(c);
  return it == tables_.end() ? 0 : it->second.size();
}

BaseEmbedding base_text_embedding(const EmbeddingProvider& provider, std::string_view text, Channel channel,
                                  std::string_view id) {
  return provider.text_embedding(channel, text, id);
}

BaseEmbedding base_cross_embedding(const EmbeddingProvider& provider, std::string_view doc_text,
                                   std::string_view query_text, std::string_view id) {
  return provider.cross_embedding(doc_text, query_text, id);
}

// ---------------------------------------------------------------------------
// Precomputed tables

void EmbeddingProvider::add_manifest(const std::string& manifest_path) {
  if (kind_ != Kind::kPrecomputed) throw ValidationError("add_manifest on a feature-hash provider");
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open manifest " + manifest_path);
  nlohmann::json m;
  std::size_t dim = 0;
  Channel channel{};
  std::vector<std::string> ids;
  std::string file;
  try {
    m = nlohmann::json::parse(in);
    dim = m.at("dim").get<std::size_t>();
    channel = parse_channel(m.at("channel").get<std::string>());
    ids = m.at("ids").get<std::vector<std::string>>();
    file = m.at("file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + manifest_path + ": " + e.what());
  }
  if (dim == 0) throw ValidationError("manifest " + manifest_path + ": dim must be positive");
  if (dim_ != 0 && dim != dim_)
    throw ValidationError("manifest " + manifest_path + ": dim " + std::to_string(dim) + " differs from " +
                          std::to_string(dim_));

  fs::path blob = fs::path(file).is_absolute() ? fs::path(file) : fs::path(manifest_path).parent_path() / file;
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw ValidationError("cannot open embedding file " + blob.string());
  const std::string bytes{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};
  if (bytes.size() != ids.size() * dim * 4)
    throw ValidationError("size mismatch: " + blob.string() + " has " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(ids.size() * dim * 4));

  auto& table = tables_[channel];
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::vector<double> row(dim);
    double norm = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      std::uint32_t raw = 0;
      const char* p = bytes.data() + (r * dim + c) * 4;
      for (int b = 0; b < 4; ++b) raw |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
      const auto f = std::bit_cast<float>(raw);
      if (!std::isfinite(f))
        throw ValidationError("non-finite value for id \"" + ids[r] + "\" in " + blob.string());
      row[c] = f;
      norm += row[c] * row[c];
    }
    if (norm == 0.0) throw ValidationError("zero vector for id \"" + ids[r] + "\" in " + blob.string());
    norm = std::sqrt(norm);
    for (double& x : row) x /= norm;
    if (!table.emplace(ids[r], std::move(row)).second)
      throw ValidationError("duplicate id \"" + ids[r] + "\" in " + manifest_path);
  }
  dim_ = dim;
}

EmbeddingProvider load_precomputed(const std::string& manifest_path) {
  EmbeddingProvider p;
  p.kind_ = EmbeddingProvider::Kind::kPrecomputed;
  p.add_manifest(manifest_path);
  return p;
}

void write_precomputed(const std::string& manifest_path, Channel channel, const std::vector<std::string>& ids,
                       const std::vector<std::vector<float>>& rows) {
  if (rows.size() != ids.size()) throw ValidationError("write_precomputed: ids/rows length mismatch");
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  const fs::path mpath(manifest_path);
  const std::string file = mpath.stem().string() + ".f32";
  std::ofstream bin(mpath.parent_path() / file, std::ios::binary);
  for (const auto& row : rows) {
    if (row.size() != dim) throw ValidationError("write_precomputed: ragged rows");
    for (float f : row) {
      const auto raw = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) bin.put(static_cast<char>((raw >> (8 * b)) & 0xffU));
    }
  }
  nlohmann::json m{{"dim", dim}, {"channel", channel_name(channel)}, {"ids", ids}, {"file", file}};
  std::ofstream(manifest_path) << m.dump(2) << "\n";
}

}  // namespace ragroute
