#include "pugs/features/region_features.hpp"

#include "pugs/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pugs::features {

std::size_t PixelPairBatch::same_count() const {
  return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.same_mask; }));
}

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

PixelPairBatch sample_pixel_pairs(const MaskMap& mask, const ImageF& alpha, std::size_t n, std::mt19937_64& rng,
                                  double balance, const std::string& view_name) {
  if (n == 0) throw ValidationError("pair count must be positive");
  if (!(balance >= 0.0 && balance <= 1.0)) throw ValidationError("balance must be in [0, 1]");
  if (alpha.width != mask.width || alpha.height != mask.height) {
    throw ValidationError("alpha and mask sizes differ");
  }
  // ordered map keeps id iteration deterministic
  std::map<std::uint16_t, std::vector<std::uint32_t>> by_id;
  for (std::size_t p = 0; p < mask.data.size(); ++p) {
    if (mask.data[p] != 0 && alpha.data[p] >= kValidAlpha) by_id[mask.data[p]].push_back(static_cast<std::uint32_t>(p));
  }
  PixelPairBatch batch;
  batch.view = view_name;
  if (by_id.empty()) {
    batch.degenerate = true;
    return batch;
  }
  std::vector<std::uint16_t> ids;
  std::vector<std::uint32_t> all;
  std::vector<std::size_t> id_of_pixel_slot;
  for (const auto& [id, pixels] : by_id) {
    for (auto p : pixels) {
      all.push_back(p);
      id_of_pixel_slot.push_back(ids.size());
    }
    ids.push_back(id);
  }
  batch.degenerate = ids.size() == 1;

  const std::size_t n_same = batch.degenerate ? n : static_cast<std::size_t>(std::llround(balance * n));
  batch.pairs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t slot = uniform_index(rng, all.size());
    const auto& own = by_id.at(ids[id_of_pixel_slot[slot]]);
    PixelPair pair;
    pair.p1 = all[slot];
    if (k < n_same) {
      pair.p2 = own[uniform_index(rng, own.size())];
      pair.same_mask = true;
    } else {
      // uniform over valid pixels of every other id
      std::size_t r = uniform_index(rng, all.size() - own.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i == id_of_pixel_slot[slot]) continue;
        const auto& other = by_id.at(ids[i]);
        if (r < other.size()) {
          pair.p2 = other[r];
          break;
        }
        r -= other.size();
      }
      pair.same_mask = false;
    }
    batch.pairs.push_back(pair);
  }
  return batch;
}

PixelPairBatch sample_pixel_pairs(const CameraView& view, const ImageF& alpha, std::size_t n, std::uint64_t seed,
                                  double balance) {
  if (!view.mask) throw ValidationError("view '" + view.name + "' has no mask map");
  std::mt19937_64 rng(seed);
  return sample_pixel_pairs(*view.mask, alpha, n, rng, balance, view.name);
}

double cosine(const double* a, const double* b, int dim) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int d = 0; d < dim; ++d) {
    ab += a[d] * b[d];
    aa += a[d] * a[d];
    bb += b[d] * b[d];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

double contrastive_loss(const ImageF& feature_map, const PixelPairBatch& batch) {
  if (batch.pairs.empty()) throw ValidationError("contrastive loss of an empty batch");
  const int dim = feature_map.channels;
  double sum = 0.0;
  for (const auto& pair : batch.pairs) {
    const double s = cosine(feature_map.data.data() + static_cast<std::size_t>(pair.p1) * dim,
                            feature_map.data.data() + static_cast<std::size_t>(pair.p2) * dim, dim);
    sum += (pair.same_mask ? -1.0 : 1.0) * std::max(s, 0.0);
  }
  return sum / static_cast<double>(batch.pairs.size());
}

double norm_regularizer(const ImageF& feature_map, const ImageF& alpha) {
  const int dim = feature_map.channels;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < alpha.data.size(); ++p) {
    if (alpha.data[p] < kValidAlpha) continue;
    double sq = 0.0;
    for (int d = 0; d < dim; ++d) sq += feature_map.data[p * dim + d] * feature_map.data[p * dim + d];
    sum += 1.0 - std::sqrt(sq);
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

ViewWeights precompute_view_weights(const GaussianCloud& cloud, const CameraView& view,
                                    const render::ProjectOptions& options) {
  ViewWeights out;
  out.view = view.name;
  out.weights = render::render_feature_weights(render::project(cloud, view, options), view);
  out.alpha = ImageF(view.width, view.height, 1);
  for (std::size_t p = 0; p < out.alpha.data.size(); ++p) out.alpha.data[p] = out.weights.total(p);
  return out;
}

ImageF feature_map_from_weights(const GaussianCloud& cloud, const ViewWeights& view) {
  const int dim = cloud.feature_dim;
  ImageF map(view.weights.width, view.weights.height, dim);
  const std::size_t pixels = map.data.size() / std::max(dim, 1);
  for (std::size_t p = 0; dim > 0 && p < pixels; ++p) {
    double* dst = map.data.data() + p * dim;
    for (auto e = view.weights.begin(p); e != view.weights.end(p); ++e) {
      const VecX& f = cloud.gaussians[e->gaussian].feature;
      for (int d = 0; d < dim; ++d) dst[d] += e->weight * f[d];
    }
  }
  return map;
}

namespace {

/// Adds d cos(a, b) / d a, scaled by `scale`, into `out`.
void add_cosine_gradient(const VecX& a, const VecX& b, double scale, Eigen::Ref<VecX> out) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return;
  const double s = a.dot(b) / (na * nb);
  out += scale * (b / (na * nb) - s * a / (na * na));
}

VecX render_pixel(const GaussianCloud& cloud, const render::PixelWeights& w, std::size_t p) {
  VecX f = VecX::Zero(cloud.feature_dim);
  for (auto e = w.begin(p); e != w.end(p); ++e) f += e->weight * cloud.gaussians[e->gaussian].feature;
  return f;
}

}  // namespace

RegionGradient feature_gradients(const GaussianCloud& cloud, const ViewWeights& view, const PixelPairBatch& batch,
                                 const RegionLossTerms& terms) {
  const int dim = cloud.feature_dim;
  if (dim <= 0) throw ValidationError("cloud has no region features");
  RegionGradient out;
  out.grad = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cloud.size()), dim);

  // dL/dF per touched pixel
  std::map<std::size_t, VecX> pixel_grad;
  auto grad_at = [&](std::size_t p) -> VecX& {
    auto it = pixel_grad.find(p);
    if (it == pixel_grad.end()) it = pixel_grad.emplace(p, VecX::Zero(dim)).first;
    return it->second;
  };

  if (terms.contrastive) {
    if (batch.pairs.empty()) throw ValidationError("contrastive loss of an empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.pairs.size());
    std::map<std::size_t, VecX> rendered;
    auto feature_at = [&](std::size_t p) -> const VecX& {
      auto it = rendered.find(p);
      if (it == rendered.end()) it = rendered.emplace(p, render_pixel(cloud, view.weights, p)).first;
      return it->second;
    };
    for (const auto& pair : batch.pairs) {
      const VecX& f1 = feature_at(pair.p1);
      const VecX& f2 = feature_at(pair.p2);
      const double n1 = f1.norm(), n2 = f2.norm();
      const double s = (n1 == 0.0 || n2 == 0.0) ? 0.0 : f1.dot(f2) / (n1 * n2);
      const double sign = pair.same_mask ? -1.0 : 1.0;
      out.loss += sign * std::max(s, 0.0) * inv_n;
      if (s > 0.0) {
        add_cosine_gradient(f1, f2, sign * inv_n, grad_at(pair.p1));
        add_cosine_gradient(f2, f1, sign * inv_n, grad_at(pair.p2));
      }
    }
  }

  if (terms.norm) {
    std::size_t count = 0;
    for (double a : view.alpha.data) count += a >= kValidAlpha ? 1 : 0;
    if (count > 0) {
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t p = 0; p < view.alpha.data.size(); ++p) {
        if (view.alpha.data[p] < kValidAlpha) continue;
        const VecX f = render_pixel(cloud, view.weights, p);
        const double n = f.norm();
        out.loss += (1.0 - n) * inv;
        if (n > 0.0) grad_at(p) -= f * (inv / n);
      }
    }
  }

  for (const auto& [p, g] : pixel_grad) {
    for (auto e = view.weights.begin(p); e != view.weights.end(p); ++e) {
      out.grad.row(e->gaussian) += e->weight * g.transpose();
    }
  }
  return out;
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("optimizer must be 'adam' or 'sgd'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

void TrainerConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (pairs_per_iteration == 0) throw ConfigError("pairs_per_iteration must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
  if (!(balance >= 0.0 && balance <= 1.0)) throw ConfigError("balance must be in [0, 1]");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"iterations", iterations}, {"pairs_per_iteration", pairs_per_iteration},
          {"learning_rate", learning_rate}, {"feature_dim", feature_dim},
          {"optimizer", to_string(optimizer)}, {"seed", seed},
          {"balance", balance}, {"init_std", init_std}};
}

TrainResult train_features(const GaussianCloud& cloud, const std::vector<CameraView>& views,
                           const TrainerConfig& config, const render::ProjectOptions& project_options) {
  config.validate();
  if (cloud.empty()) throw ValidationError("cannot train features on an empty cloud");

  std::vector<const CameraView*> masked;
  for (const auto& v : views)
    if (v.mask) masked.push_back(&v);
  if (masked.empty()) throw ConfigError("feature training needs at least one view with a mask map");

  TrainResult result;
  result.cloud = cloud;
  GaussianCloud& out = result.cloud;
  out.feature_dim = config.feature_dim;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> init(0.0, config.init_std);
  for (auto& g : out.gaussians) {
    g.feature = VecX(config.feature_dim);
    for (int d = 0; d < config.feature_dim; ++d) g.feature[d] = init(rng);
  }

  std::vector<ViewWeights> frozen;
  frozen.reserve(masked.size());
  for (const CameraView* v : masked) frozen.push_back(precompute_view_weights(out, *v, project_options));

  const auto n = static_cast<Eigen::Index>(out.size());
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(n, config.feature_dim);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(n, config.feature_dim);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;

  for (int it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, config.feature_dim);
    double loss = 0.0;
    std::size_t used = 0;
    for (std::size_t v = 0; v < masked.size(); ++v) {
      const PixelPairBatch batch = sample_pixel_pairs(*masked[v]->mask, frozen[v].alpha, config.pairs_per_iteration,
                                                      rng, config.balance, masked[v]->name);
      if (batch.degenerate) ++result.degenerate_batches;
      if (batch.pairs.empty()) continue;
      const RegionGradient g = feature_gradients(out, frozen[v], batch);
      grad += g.grad;
      loss += g.loss;
      ++used;
    }
    if (used == 0) throw DegenerateError("no view has valid masked pixels for feature training");
    grad /= static_cast<double>(used);
    result.loss_history.push_back(loss / static_cast<double>(used));

    if (config.optimizer == OptimizerKind::Adam) {
      m1 = beta1 * m1 + (1.0 - beta1) * grad;
      m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(beta1, it + 1);
      const double c2 = 1.0 - std::pow(beta2, it + 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto step = (m1.row(i).array() / c1) / ((m2.row(i).array() / c2).sqrt() + eps);
        out.gaussians[i].feature -= config.learning_rate * step.matrix().transpose();
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) out.gaussians[i].feature -= config.learning_rate * grad.row(i).transpose();
    }
  }
  return result;
}

}  // namespace pugs::features
