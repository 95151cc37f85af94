#include "pugs/propagate/embeddings.hpp"

#include "pugs/core/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

namespace pugs::propagation {

static_assert(std::endian::native == std::endian::little, "embedding blobs are little-endian float32");

namespace {

constexpr const char* kArchiveFormat = "pugs-embedding-archive";

VecX normalized(VecX v, const std::string& key) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("embedding '" + key + "' has zero or non-finite norm");
  return v / n;
}

void write_atomically(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace

std::string patch_key(const std::string& view, int cx, int cy, int p) {
  return view + ":" + std::to_string(cx) + ":" + std::to_string(cy) + ":" + std::to_string(p);
}

std::string text_key(const std::string& material) { return "text:" + material; }

std::string text_prompt(const std::string& material) { return "a photo of " + material; }

VecX EmbeddingProvider::get(const std::string& key) const {
  auto v = find(key);
  if (!v) throw MissingAssetError("embedding not found for key '" + key + "'");
  return normalized(std::move(*v), key);
}

EmbeddingArchive EmbeddingArchive::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw MissingAssetError("embedding manifest not found: '" + manifest_path.string() + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("embedding manifest '" + manifest_path.string() + "': " + e.what());
  }
  EmbeddingArchive archive;
  try {
    if (manifest.at("format").get<std::string>() != kArchiveFormat) {
      throw ParseError("'" + manifest_path.string() + "' is not an embedding archive manifest");
    }
    if (manifest.value("dtype", "float32") != "float32") throw ParseError("embedding dtype must be float32");
    archive.dim_ = manifest.at("dim").get<int>();
    archive.metadata_ = manifest.value("metadata", nlohmann::json::object());
    const auto blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw MissingAssetError("embedding blob not found: '" + blob_path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
    for (const auto& entry : manifest.at("entries")) {
      const auto key = entry.at("key").get<std::string>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto dim = entry.at("dim").get<int>();
      if (dim != archive.dim_) throw ParseError("entry '" + key + "' has dim " + std::to_string(dim));
      if (offset % sizeof(float) != 0 || offset + dim * sizeof(float) > bytes.size()) {
        throw ParseError("entry '" + key + "' lies outside the blob");
      }
      VecX v(dim);
      for (int d = 0; d < dim; ++d) {
        float f;
        std::memcpy(&f, bytes.data() + offset + d * sizeof(float), sizeof f);
        v[d] = f;
      }
      if (!archive.vectors_.emplace(key, std::move(v)).second) throw ParseError("duplicate key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("embedding manifest '" + manifest_path.string() + "': " + e.what());
  }
  return archive;
}

std::optional<VecX> EmbeddingArchive::find(const std::string& key) const {
  const auto it = vectors_.find(key);
  if (it == vectors_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> EmbeddingArchive::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : vectors_) out.push_back(k);
  return out;
}

void write_embedding_archive(const std::filesystem::path& manifest_path, const std::map<std::string, VecX>& vectors,
                             const nlohmann::json& metadata) {
  int dim = vectors.empty() ? 0 : static_cast<int>(vectors.begin()->second.size());
  std::string blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [key, v] : vectors) {
    if (v.size() != dim) throw ValidationError("embedding '" + key + "' has inconsistent dimension");
    const VecX unit = normalized(v, key);
    entries.push_back({{"key", key}, {"offset", blob.size()}, {"dim", dim}});
    for (int d = 0; d < dim; ++d) {
      const float f = static_cast<float>(unit[d]);
      blob.append(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  const std::string blob_name = manifest_path.stem().string() + ".bin";
  nlohmann::json manifest = {{"format", kArchiveFormat}, {"version", 1},          {"dtype", "float32"},
                             {"byte_order", "little"},   {"dim", dim},            {"blob", blob_name},
                             {"entries", entries},       {"metadata", metadata}};
  if (!manifest_path.parent_path().empty()) std::filesystem::create_directories(manifest_path.parent_path());
  write_atomically(manifest_path.parent_path() / blob_name, blob);
  write_atomically(manifest_path, manifest.dump(1) + "\n");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::optional<VecX> SyntheticEmbeddingProvider::find(const std::string& key) const {
  std::mt19937_64 rng(fnv1a(key));
  std::normal_distribution<double> n(0.0, 1.0);
  VecX v(dim_);
  for (int d = 0; d < dim_; ++d) v[d] = n(rng);
  return v / v.norm();
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::shared_ptr<net::Transport> transport, std::string endpoint)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)) {}

std::optional<VecX> HttpEmbeddingProvider::find(const std::string& key) const {
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  nlohmann::json body = {{"key", key}};
  if (key.rfind("text:", 0) == 0) {
    const auto material = key.substr(5);
    body["kind"] = "text";
    body["text"] = text_prompt(material);
  } else {
    body["kind"] = "patch";
    // view names may contain ':', so split from the right
    std::vector<std::string> parts;
    std::string rest = key;
    for (int i = 0; i < 3; ++i) {
      const auto pos = rest.rfind(':');
      if (pos == std::string::npos) throw ValidationError("malformed patch key '" + key + "'");
      parts.push_back(rest.substr(pos + 1));
      rest = rest.substr(0, pos);
    }
    body["view"] = rest;
    body["cx"] = std::stoi(parts[2]);
    body["cy"] = std::stoi(parts[1]);
    body["p"] = std::stoi(parts[0]);
  }
  net::HttpRequest request;
  request.url = endpoint_;
  request.body = body.dump();
  const auto response = transport_->post(request);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(response.body);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("embedding service returned invalid JSON for '" + key + "': " + e.what());
  }
  if (!parsed.contains("embedding") || parsed["embedding"].is_null()) return std::nullopt;
  const auto values = parsed["embedding"].get<std::vector<double>>();
  VecX v = Eigen::Map<const VecX>(values.data(), static_cast<Eigen::Index>(values.size()));
  memo_.emplace(key, v);
  return v;
}

std::optional<VecX> ChainedEmbeddingProvider::find(const std::string& key) const {
  for (const auto& p : providers_) {
    if (auto v = p->find(key)) return v;
  }
  return std::nullopt;
}

}  // namespace pugs::propagation
