#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ragroute {

/// Unit-norm output of a frozen featurizer.
struct BaseEmbedding {
  std::vector<double> values;
};

enum class Channel { kQuery, kDocument, kCross };

std::string_view channel_name(Channel c);
Channel parse_channel(std::string_view name);

/// Lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Frozen base encoder. Two kinds:
///  - feature hash: each token is hashed with FNV-1a 64 under a channel salt
///    to bucket h mod dim with sign from bit 63, summed, then L2-normalized.
///    Query and document share one salt; the cross channel has its own.
///  - precomputed: vectors loaded from disk and looked up by query_id.
class EmbeddingProvider {
 public:
  enum class Kind { kFeatureHash, kPrecomputed };

  static constexpr std::uint64_t kTextSalt = 0x51a7e0c0de5eed01ULL;
  static constexpr std::uint64_t kCrossSalt = 0xc705550a7c0ffee5ULL;

  static EmbeddingProvider feature_hash(std::size_t dim);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t salt(Channel c) const { return c == Channel::kCross ? cross_salt_ : text_salt_; }

  /// `id` is used only by precomputed providers, `text` only by feature hash.
  BaseEmbedding text_embedding(Channel channel, std::string_view text, std::string_view id = {}) const;
  BaseEmbedding cross_embedding(std::string_view doc_text, std::string_view query_text,
                                std::string_view id = {}) const;

  /// Adds one channel table from a manifest; precomputed providers only.
  void add_manifest(const std::string& manifest_path);
  std::size_t count(Channel c) const;

 private:
  friend EmbeddingProvider load_precomputed(const std::string& manifest_path);

  BaseEmbedding hash_embedding(std::string_view text, std::uint64_t salt) const;
  BaseEmbedding lookup(Channel channel, std::string_view id) const;

  Kind kind_ = Kind::kFeatureHash;
  std::size_t dim_ = 0;
  std::uint64_t text_salt_ = kTextSalt;
  std::uint64_t cross_salt_ = kCrossSalt;
  std::map<Channel, std::unordered_map<std::string, std::vector<double>>> tables_;
};

BaseEmbedding base_text_embedding(const EmbeddingProvider& provider, std::string_view text, Channel channel,
                                  std::string_view id = {});
BaseEmbedding base_cross_embedding(const EmbeddingProvider& provider, std::string_view doc_text,
                                   std::string_view query_text, std::string_view id = {});

/// Manifest: {"dim", "channel", "ids", "file"}; `file` is resolved relative
/// to the manifest and holds row-major little-endian float32 rows in ids order.
EmbeddingProvider load_precomputed(const std::string& manifest_path);

/// Writes a manifest plus its float32 blob (the inverse of load_precomputed).
void write_precomputed(const std::string& manifest_path, Channel channel, const std::vector<std::string>& ids,
                       const std::vector<std::vector<float>>& rows);

}  // namespace ragroute
