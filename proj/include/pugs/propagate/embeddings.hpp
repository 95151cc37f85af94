#pragma once

#include "pugs/core/types.hpp"
#include "pugs/net/transport.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pugs::propagation {

/// "{view}:{cx}:{cy}:{p}"
std::string patch_key(const std::string& view, int cx, int cy, int p);
/// "text:{material}"
std::string text_key(const std::string& material);
/// Text prompt embedded for a material name.
std::string text_prompt(const std::string& material);

/// Resolves patch and text keys to unit embedding vectors.
class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual std::optional<VecX> find(const std::string& key) const = 0;

  /// Unit-normalized vector for `key`; MissingAssetError naming the key when absent.
  VecX get(const std::string& key) const;
};

/// File-backed archive: manifest JSON plus a raw little-endian float32 blob.
class EmbeddingArchive : public EmbeddingProvider {
public:
  static EmbeddingArchive load(const std::filesystem::path& manifest);

  std::optional<VecX> find(const std::string& key) const override;
  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const nlohmann::json& metadata() const { return metadata_; }
  std::vector<std::string> keys() const;

private:
  int dim_ = 0;
  std::map<std::string, VecX> vectors_;
  nlohmann::json metadata_;
};

/// Writes `vectors` (normalized on write) as manifest + blob next to each other. Duplicate keys are impossible
/// by construction; both files are written through a temporary and renamed.
void write_embedding_archive(const std::filesystem::path& manifest, const std::map<std::string, VecX>& vectors,
                             const nlohmann::json& metadata = nlohmann::json::object());

/// Deterministic unit vectors seeded by a hash of the key.
class SyntheticEmbeddingProvider : public EmbeddingProvider {
public:
  explicit SyntheticEmbeddingProvider(int dim = 64) : dim_(dim) {}
  std::optional<VecX> find(const std::string& key) const override;

private:
  int dim_;
};

/// Remote embedding service: POST {"key", "kind", ...} returns {"embedding": [...]}; results are memoized.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
  HttpEmbeddingProvider(std::shared_ptr<net::Transport> transport, std::string endpoint);
  std::optional<VecX> find(const std::string& key) const override;

private:
  std::shared_ptr<net::Transport> transport_;
  std::string endpoint_;
  mutable std::map<std::string, VecX> memo_;
};

/// Tries each provider in order.
class ChainedEmbeddingProvider : public EmbeddingProvider {
public:
  explicit ChainedEmbeddingProvider(std::vector<std::shared_ptr<const EmbeddingProvider>> providers)
      : providers_(std::move(providers)) {}
  std::optional<VecX> find(const std::string& key) const override;

private:
  std::vector<std::shared_ptr<const EmbeddingProvider>> providers_;
};

/// Deterministic 64-bit FNV-1a hash.
std::uint64_t fnv1a(const std::string& s);

}  // namespace pugs::propagation
