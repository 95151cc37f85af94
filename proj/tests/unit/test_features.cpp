#include "pugs/core/error.hpp"
#include "pugs/features/region_features.hpp"
#include "pugs/synth/scene.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace pugs;
using namespace pugs::features;

namespace {

MaskMap half_half_mask(int w, int h) {
  MaskMap m(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.data[m.index(x, y)] = x < w / 2 ? 1 : 2;
  return m;
}

ImageF full_alpha(int w, int h) { return ImageF(w, h, 1, 1.0); }

ImageF feature_image(int w, int h, const std::vector<VecX>& rows) {
  ImageF f(w, h, static_cast<int>(rows[0].size()));
  for (std::size_t p = 0; p < rows.size(); ++p)
    for (int d = 0; d < rows[p].size(); ++d) f.data[p * rows[p].size() + d] = rows[p][d];
  return f;
}

}  // namespace

TEST_CASE("pair sampling is exactly stratified and respects masks and alpha") {
  const MaskMap mask = half_half_mask(20, 10);
  std::mt19937_64 rng(7);
  const auto batch = sample_pixel_pairs(mask, full_alpha(20, 10), 1000, rng, 0.5, "v");
  CHECK(batch.pairs.size() == 1000);
  CHECK(batch.same_count() == 500);
  CHECK_FALSE(batch.degenerate);
  for (const auto& p : batch.pairs) {
    CHECK(mask.data[p.p1] != 0);
    CHECK(mask.data[p.p2] != 0);
    CHECK(p.same_mask == (mask.data[p.p1] == mask.data[p.p2]));
  }

  MaskMap with_zero = mask;
  ImageF alpha = full_alpha(20, 10);
  for (int y = 0; y < 10; ++y) {
    with_zero.data[with_zero.index(0, y)] = 0;
    alpha.data[alpha.index(19, y)] = 0.4;
  }
  std::mt19937_64 rng2(3);
  const auto filtered = sample_pixel_pairs(with_zero, alpha, 400, rng2);
  for (const auto& p : filtered.pairs) {
    for (auto px : {p.p1, p.p2}) {
      CHECK(px % 20 != 0);
      CHECK(px % 20 != 19);
    }
  }
}

TEST_CASE("single-mask view gives all same-mask pairs and the degenerate flag") {
  CameraView view = test::look_at("v", Vec3(0, 0, -2), Vec3::Zero(), 12, 8, 10);
  view.mask = MaskMap(12, 8, 1, 1);
  const auto batch = sample_pixel_pairs(view, full_alpha(12, 8), 1000, 5);
  CHECK(batch.degenerate);
  CHECK(batch.same_count() == 1000);
}

TEST_CASE("pair sampling is deterministic under a fixed seed") {
  CameraView view = test::look_at("v", Vec3(0, 0, -2), Vec3::Zero(), 20, 10, 10);
  view.mask = half_half_mask(20, 10);
  const auto a = sample_pixel_pairs(view, full_alpha(20, 10), 300, 11);
  const auto b = sample_pixel_pairs(view, full_alpha(20, 10), 300, 11);
  const auto c = sample_pixel_pairs(view, full_alpha(20, 10), 300, 12);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    same = same && a.pairs[i].p1 == b.pairs[i].p1 && a.pairs[i].p2 == b.pairs[i].p2;
    differs = differs || a.pairs[i].p1 != c.pairs[i].p1 || a.pairs[i].p2 != c.pairs[i].p2;
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("pair sampling rejects bad arguments") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(sample_pixel_pairs(half_half_mask(4, 4), full_alpha(4, 4), 0, rng), ValidationError);
  CHECK_THROWS_AS(sample_pixel_pairs(half_half_mask(4, 4), full_alpha(4, 3), 5, rng), ValidationError);
  CameraView unmasked = test::look_at("v", Vec3(0, 0, -2), Vec3::Zero(), 4, 4, 10);
  CHECK_THROWS_AS(sample_pixel_pairs(unmasked, full_alpha(4, 4), 5, 1), ValidationError);
}

TEST_CASE("contrastive loss closed forms") {
  const VecX e0 = Vec3(1, 0, 0), e1 = Vec3(0, 1, 0);
  PixelPairBatch same;
  same.pairs = {{0, 1, true}};
  CHECK(contrastive_loss(feature_image(2, 1, {e0, e0}), same) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(contrastive_loss(feature_image(2, 1, {e0, VecX(3.0 * e0)}), same) == doctest::Approx(-1.0));

  PixelPairBatch cross;
  cross.pairs = {{0, 1, false}};
  CHECK(contrastive_loss(feature_image(2, 1, {e0, e1}), cross) == 0.0);
  const VecX neg = Vec3(-0.5, std::sqrt(0.75), 0);
  CHECK(cosine(e0.data(), neg.data(), 3) == doctest::Approx(-0.5));
  CHECK(contrastive_loss(feature_image(2, 1, {e0, neg}), cross) == 0.0);
  CHECK(contrastive_loss(feature_image(2, 1, {VecX(Vec3::Zero()), e0}), same) == 0.0);

  PixelPairBatch mixed;
  mixed.pairs = {{0, 1, true}, {0, 2, false}};
  const VecX diag = Vec3(1, 1, 0);
  CHECK(contrastive_loss(feature_image(3, 1, {e0, e0, diag}), mixed) ==
        doctest::Approx((-1.0 + 1.0 / std::sqrt(2.0)) / 2.0));

  CHECK_THROWS_AS(contrastive_loss(feature_image(2, 1, {e0, e0}), PixelPairBatch{}), ValidationError);
}

TEST_CASE("norm regularizer closed forms and direct sum") {
  CHECK(norm_regularizer(feature_image(2, 1, {VecX(Vec3(1, 0, 0)), VecX(Vec3(0, 0.6, 0.8))}), full_alpha(2, 1)) ==
        doctest::Approx(0.0).epsilon(1e-15));
  CHECK(norm_regularizer(ImageF(5, 4, 3), full_alpha(5, 4)) == 1.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageF f(9, 7, 4), alpha(9, 7, 1);
  for (auto& v : f.data) v = n(rng);
  for (auto& v : alpha.data) v = u(rng);
  double sum = 0.0;
  int count = 0;
  for (int p = 0; p < 63; ++p) {
    if (alpha.data[p] < 0.5) continue;
    double sq = 0.0;
    for (int d = 0; d < 4; ++d) sq += f.data[p * 4 + d] * f.data[p * 4 + d];
    sum += 1.0 - std::sqrt(sq);
    ++count;
  }
  CHECK(norm_regularizer(f, alpha) == doctest::Approx(sum / count).epsilon(1e-14));
}

TEST_CASE("single Gaussian covering one pixel: gradient equals the closed form") {
  // a 1x1 view; the only pair is (p, p), whose cosine is constant, so only the norm term moves
  GaussianCloud cloud;
  cloud.feature_dim = 3;
  Gaussian g = test::make_gaussian(Vec3(0, 0, 0), 0.5, 0.9);
  g.feature = Vec3(0.3, -0.4, 1.2);
  cloud.gaussians.push_back(g);
  CameraView view = test::look_at("v", Vec3(0, 0, -2), Vec3::Zero(), 1, 1, 1.0);
  view.mask = MaskMap(1, 1, 1, 1);
  const ViewWeights vw = precompute_view_weights(cloud, view);
  REQUIRE(vw.weights.total(0) == doctest::Approx(0.9).epsilon(1e-12));
  PixelPairBatch batch;
  batch.pairs = {{0, 0, true}};
  const auto result = feature_gradients(cloud, vw, batch);
  const double w = vw.weights.begin(0)->weight;
  const Vec3 f = g.feature;
  const Vec3 expected = -w * f / f.norm();
  for (int d = 0; d < 3; ++d) CHECK(result.grad(0, d) == doctest::Approx(expected[d]).epsilon(1e-14));
  CHECK(result.loss == doctest::Approx(-1.0 + 1.0 - w * f.norm()).epsilon(1e-14));
}

TEST_CASE("gradients match central finite differences on random scenes") {
  std::mt19937_64 rng(2024);
  for (int scene = 0; scene < 3; ++scene) {
    const auto check = test::gradient_check(rng, 100 + scene);
    CHECK(check.loss_mismatch < 1e-10);
    CHECK(check.max_relative_error < 1e-4);
    CHECK(check.checked > 20);
  }
}

TEST_CASE("invisible Gaussians get zero gradient; inactive hinge gives zero contrastive gradient") {
  GaussianCloud cloud;
  cloud.feature_dim = 2;
  Gaussian left = test::make_gaussian(Vec3(-0.5, 0, 0), 0.2, 0.9);
  Gaussian right = test::make_gaussian(Vec3(0.5, 0, 0), 0.2, 0.9);
  Gaussian hidden = test::make_gaussian(Vec3(0, 0, -5), 0.2, 0.9);  // behind the camera
  left.feature = Eigen::Vector2d(1.0, 0.2);
  right.feature = Eigen::Vector2d(-1.0, 0.1);
  hidden.feature = Eigen::Vector2d(0.5, 0.5);
  cloud.gaussians = {left, right, hidden};
  CameraView view = test::look_at("v", Vec3(0, 0, -2), Vec3::Zero(), 32, 16, 16.0);
  const ViewWeights vw = precompute_view_weights(cloud, view);
  const std::size_t pl = vw.weights.pixel(16 - 4, 8), pr = vw.weights.pixel(16 + 4, 8);
  REQUIRE(vw.alpha.data[pl] > 0.5);
  REQUIRE(vw.alpha.data[pr] > 0.5);

  PixelPairBatch batch;
  batch.pairs = {{static_cast<std::uint32_t>(pl), static_cast<std::uint32_t>(pr), false}};
  const auto full = feature_gradients(cloud, vw, batch);
  CHECK(full.grad.row(2).norm() == 0.0);

  const auto contrastive_only = feature_gradients(cloud, vw, batch, {true, false});
  CHECK(contrastive_only.loss == 0.0);
  CHECK(contrastive_only.grad.norm() == 0.0);
}

TEST_CASE("two-cluster scene trains to separated features") {
  const auto scene = synth::two_cluster_scene();
  REQUIRE(scene.views.size() == 4);
  for (const auto& v : scene.views) {
    int counts[3] = {0, 0, 0};
    for (auto id : v.mask->data) counts[id]++;
    CHECK(counts[1] > 50);
    CHECK(counts[2] > 50);
  }
  TrainerConfig config;
  config.iterations = 500;
  config.pairs_per_iteration = 1024;
  config.seed = 9;
  const auto result = train_features(scene.cloud, scene.views, config);
  REQUIRE(result.loss_history.size() == 500);
  CHECK(result.loss_history.back() < result.loss_history.front());

  const auto cos = test::cluster_cosines(result.cloud, scene.labels);
  const auto& g = result.cloud.gaussians;
  CHECK(cos.intra > 0.9);
  CHECK(cos.inter < 0.1);

  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g[i].center == scene.cloud.gaussians[i].center);
    CHECK(g[i].opacity_logit == scene.cloud.gaussians[i].opacity_logit);
  }
}

TEST_CASE("training: zero iterations, determinism, configuration errors") {
  const auto scene = synth::two_cluster_scene();
  TrainerConfig config;
  config.iterations = 0;
  config.feature_dim = 8;
  const auto init = train_features(scene.cloud, scene.views, config);
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& g : init.cloud.gaussians) {
    REQUIRE(g.feature.size() == 8);
    sq += g.feature.squaredNorm();
    n += 8;
  }
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.01).epsilon(0.15));
  CHECK(init.loss_history.empty());

  config.iterations = 20;
  config.pairs_per_iteration = 128;
  const auto a = train_features(scene.cloud, scene.views, config);
  const auto b = train_features(scene.cloud, scene.views, config);
  bool identical = true;
  for (std::size_t i = 0; i < a.cloud.size(); ++i)
    identical = identical && a.cloud.gaussians[i].feature == b.cloud.gaussians[i].feature;
  CHECK(identical);

  config.optimizer = OptimizerKind::Sgd;
  CHECK(train_features(scene.cloud, scene.views, config).loss_history.size() == 20);

  std::vector<CameraView> unmasked = scene.views;
  for (auto& v : unmasked) v.mask.reset();
  CHECK_THROWS_AS(train_features(scene.cloud, unmasked, config), ConfigError);
  config.learning_rate = 0.0;
  CHECK_THROWS_AS(train_features(scene.cloud, scene.views, config), ConfigError);
  CHECK_THROWS_AS(optimizer_from_string("rmsprop"), ConfigError);
  CHECK(optimizer_from_string(to_string(OptimizerKind::Adam)) == OptimizerKind::Adam);
}
