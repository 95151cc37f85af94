#include "pugs/propagate/propagation.hpp"

#include "pugs/core/error.hpp"
#include "pugs/propagate/kdtree.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

namespace pugs::propagation {

void PropagationConfig::validate() const {
  if (!(voxel_fraction > 0.0)) throw ConfigError("voxel_fraction must be positive");
  if (patch_size < 1 || patch_size % 2 == 0) throw ConfigError("patch_size must be a positive odd number");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(depth_tolerance_fraction >= 0.0)) throw ConfigError("depth_tolerance_fraction must be >= 0");
}

nlohmann::json PropagationConfig::to_json() const {
  return {{"voxel_fraction", voxel_fraction},
          {"patch_size", patch_size},
          {"temperature", temperature},
          {"depth_tolerance_fraction", depth_tolerance_fraction}};
}

std::vector<SourcePoint> sample_source_points(const GaussianCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw ValidationError("voxel_size must be positive");
  if (cloud.empty()) throw ValidationError("cannot sample source points from an empty cloud");
  const Vec3 origin = cloud.bounds().min();
  // the small epsilon keeps points lying on a cell boundary in the upper cell despite rounding
  auto cell = [&](const Vec3& x) {
    const Vec3 r = (x - origin) / voxel_size;
    return std::array<long long, 3>{static_cast<long long>(std::floor(r.x() + 1e-9)),
                                    static_cast<long long>(std::floor(r.y() + 1e-9)),
                                    static_cast<long long>(std::floor(r.z() + 1e-9))};
  };
  std::map<std::array<long long, 3>, std::vector<std::size_t>> voxels;
  for (std::size_t i = 0; i < cloud.size(); ++i) voxels[cell(cloud.gaussians[i].center)].push_back(i);

  std::vector<std::size_t> reps;
  reps.reserve(voxels.size());
  for (const auto& [key, members] : voxels) {
    Vec3 centroid = Vec3::Zero();
    for (auto i : members) centroid += cloud.gaussians[i].center;
    centroid /= static_cast<double>(members.size());
    std::size_t best = members.front();
    double best_d2 = (cloud.gaussians[best].center - centroid).squaredNorm();
    for (auto i : members) {
      const double d2 = (cloud.gaussians[i].center - centroid).squaredNorm();
      if (d2 < best_d2) {
        best = i;
        best_d2 = d2;
      }
    }
    reps.push_back(best);
  }
  std::sort(reps.begin(), reps.end());
  std::vector<SourcePoint> out;
  out.reserve(reps.size());
  for (auto i : reps) {
    SourcePoint s;
    s.position = cloud.gaussians[i].center;
    s.gaussian_index = i;
    out.push_back(std::move(s));
  }
  return out;
}

ImageF surface_depth(const render::RenderBuffers& buffers) {
  ImageF out(buffers.width, buffers.height, 1);
  for (std::size_t p = 0; p < out.data.size(); ++p) {
    const double a = buffers.alpha.data[p];
    out.data[p] = a >= 0.5 ? buffers.depth.data[p] / a : std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<PatchRequest> plan_patches(const std::vector<SourcePoint>& sources, const std::vector<CameraView>& views,
                                       const std::vector<ImageF>& depths, int p, double tau) {
  if (p < 1 || p % 2 == 0) throw ValidationError("patch size must be a positive odd number");
  if (depths.size() != views.size()) throw ValidationError("one depth map per view is required");
  const int half = p / 2;
  std::vector<PatchRequest> out;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t v = 0; v < views.size(); ++v) {
      const CameraView& view = views[v];
      const Vec3 cam = view.to_camera(sources[s].position);
      if (cam.z() <= 0.0) continue;
      const Vec2 uv = view.project(sources[s].position);
      const double fx = std::floor(uv.x()), fy = std::floor(uv.y());
      if (fx - half < 0 || fy - half < 0 || fx + half >= view.width || fy + half >= view.height) continue;
      const int cx = static_cast<int>(fx), cy = static_cast<int>(fy);
      if (cam.z() > depths[v].at(cx, cy) + tau) continue;
      out.push_back({s, view.name, cx, cy, p});
    }
  }
  return out;
}

void project_and_gather(std::vector<SourcePoint>& sources, const std::vector<CameraView>& views,
                        const std::vector<ImageF>& depths, int p, double tau, const EmbeddingProvider& provider) {
  const auto plan = plan_patches(sources, views, depths, p, tau);
  for (auto& s : sources) {
    s.embedding.resize(0);
    s.views_seen = 0;
  }
  for (const auto& req : plan) {
    const VecX z = provider.get(req.key());
    SourcePoint& s = sources[req.source];
    if (s.views_seen == 0) {
      s.embedding = z;
    } else {
      if (z.size() != s.embedding.size()) throw ValidationError("patch embeddings differ in dimension");
      s.embedding += z;
    }
    ++s.views_seen;
  }
  for (auto& s : sources) {
    if (s.views_seen == 0) continue;
    const double n = s.embedding.norm();
    // opposite embeddings can cancel exactly; such a point carries no direction
    if (n > 0.0) {
      s.embedding /= n;
    } else {
      s.views_seen = 0;
      s.embedding.resize(0);
    }
  }
}

nlohmann::json requests_manifest(const std::vector<PatchRequest>& patches, const std::vector<CameraView>& views,
                                 const MaterialDictionary& dictionary, int p) {
  std::map<std::string, std::string> image_of;
  for (const auto& v : views) image_of[v.name] = v.image_file;
  nlohmann::json patch_list = nlohmann::json::array();
  std::set<std::string> seen;
  for (const auto& r : patches) {
    const auto key = r.key();
    if (!seen.insert(key).second) continue;
    patch_list.push_back({{"key", key}, {"view", r.view}, {"image", image_of[r.view]},
                          {"cx", r.cx}, {"cy", r.cy}, {"p", r.p}});
  }
  nlohmann::json texts = nlohmann::json::array();
  for (const auto& e : dictionary.entries) {
    texts.push_back({{"key", text_key(e.name)}, {"material", e.name}, {"prompt", text_prompt(e.name)}});
  }
  return {{"format", "pugs-embedding-requests"}, {"version", 1}, {"patch_size", p},
          {"patches", patch_list}, {"texts", texts}};
}

VecX softmax(const VecX& w, double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (w.size() == 0) throw ValidationError("softmax of an empty vector");
  const VecX scaled = w / temperature;
  const VecX e = (scaled.array() - scaled.maxCoeff()).exp();
  return e / e.sum();
}

void fuse_properties(std::vector<SourcePoint>& sources, const std::vector<double>& values,
                     const std::vector<VecX>& text_embeddings, double temperature) {
  if (values.empty()) throw ValidationError("cannot fuse with an empty material dictionary");
  if (values.size() != text_embeddings.size()) throw ValidationError("one text embedding per material is required");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  const auto k = static_cast<Eigen::Index>(values.size());
  const VecX y = Eigen::Map<const VecX>(values.data(), k);
  for (auto& s : sources) {
    if (!s.visible()) continue;
    s.material_weights.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (text_embeddings[j].size() != s.embedding.size()) {
        throw ValidationError("text and patch embeddings differ in dimension");
      }
      s.material_weights[j] = s.embedding.dot(text_embeddings[j]);
    }
    const VecX p = softmax(s.material_weights, temperature);
    // convexity holds exactly only up to rounding; clamp to the value hull
    s.property_value = std::clamp(p.dot(y), y.minCoeff(), y.maxCoeff());
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < k; ++j)
      if (s.material_weights[j] > s.material_weights[arg]) arg = j;
    s.material_argmax = static_cast<int>(arg);
  }
}

void fuse_properties(std::vector<SourcePoint>& sources, const MaterialDictionary& dictionary,
                     const EmbeddingProvider& provider, double temperature) {
  std::vector<VecX> text;
  for (const auto& e : dictionary.entries) text.push_back(provider.get(text_key(e.name)));
  fuse_properties(sources, dictionary.collapsed(), text, temperature);
}

namespace {

std::vector<std::size_t> fused_indices(const std::vector<SourcePoint>& sources) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < sources.size(); ++s)
    if (sources[s].fused()) out.push_back(s);
  if (out.empty()) throw DegenerateError("no source point carries a fused property (none visible in any view)");
  return out;
}

void assign(PropagationResult& r, std::size_t g, std::size_t s, const SourcePoint& src) {
  r.source[g] = static_cast<std::uint32_t>(s);
  r.material_id[g] = src.material_argmax;
  r.value[g] = src.property_value;
}

PropagationResult sized(std::size_t n) {
  PropagationResult r;
  r.source.assign(n, 0);
  r.material_id.assign(n, -1);
  r.value.assign(n, 0.0);
  return r;
}

}  // namespace

PropagationResult propagate(const GaussianCloud& cloud, const std::vector<SourcePoint>& sources) {
  if (cloud.feature_dim <= 0) throw ValidationError("propagation needs per-Gaussian region features");
  const auto fused = fused_indices(sources);
  const int dim = cloud.feature_dim;
  const auto m = static_cast<Eigen::Index>(fused.size());

  Eigen::MatrixXd src(m, dim);
  for (Eigen::Index j = 0; j < m; ++j) {
    const VecX& f = cloud.gaussians.at(sources[fused[j]].gaussian_index).feature;
    const double n = f.norm();
    src.row(j) = (n > 0.0 ? VecX(f / n) : VecX::Zero(dim)).transpose();
  }

  std::vector<Vec3> positions;
  for (auto s : fused) positions.push_back(sources[s].position);
  const KdTree tree(std::move(positions));

  std::vector<long long> self(cloud.size(), -1);
  for (auto s : fused) self[sources[s].gaussian_index] = static_cast<long long>(s);

  PropagationResult r = sized(cloud.size());
  constexpr Eigen::Index kBlock = 1024;
  const auto n = static_cast<Eigen::Index>(cloud.size());
  for (Eigen::Index start = 0; start < n; start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - start);
    Eigen::MatrixXd block(rows, dim);
    std::vector<bool> zero(rows, false);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const VecX& f = cloud.gaussians[start + i].feature;
      const double norm = f.norm();
      zero[i] = !(norm > 0.0);
      block.row(i) = (zero[i] ? VecX::Zero(dim) : VecX(f / norm)).transpose();
    }
    const Eigen::MatrixXd sim = block * src.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      const std::size_t g = static_cast<std::size_t>(start + i);
      if (self[g] >= 0) {
        assign(r, g, static_cast<std::size_t>(self[g]), sources[self[g]]);
        continue;
      }
      if (zero[i]) {
        const std::size_t s = fused[tree.nearest(cloud.gaussians[g].center)];
        assign(r, g, s, sources[s]);
        ++r.fallback_count;
        continue;
      }
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < m; ++j)
        if (sim(i, j) > sim(i, best)) best = j;
      assign(r, g, fused[best], sources[fused[best]]);
    }
  }
  return r;
}

PropagationResult propagate_nn_baseline(const GaussianCloud& cloud, const std::vector<SourcePoint>& sources) {
  const auto fused = fused_indices(sources);
  std::vector<Vec3> positions;
  for (auto s : fused) positions.push_back(sources[s].position);
  const KdTree tree(std::move(positions));
  PropagationResult r = sized(cloud.size());
  for (std::size_t g = 0; g < cloud.size(); ++g) {
    const std::size_t s = fused[tree.nearest(cloud.gaussians[g].center)];
    assign(r, g, s, sources[s]);
  }
  return r;
}

}  // namespace pugs::propagation
