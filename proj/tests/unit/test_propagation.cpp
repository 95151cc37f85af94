#include "pugs/core/error.hpp"
#include "pugs/features/region_features.hpp"
#include "pugs/propagate/embeddings.hpp"
#include "pugs/propagate/kdtree.hpp"
#include "pugs/propagate/propagation.hpp"
#include "pugs/synth/scene.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

using namespace pugs;
using namespace pugs::propagation;

namespace {

class MapProvider : public EmbeddingProvider {
public:
  std::map<std::string, VecX> vectors;
  std::optional<VecX> find(const std::string& key) const override {
    auto it = vectors.find(key);
    if (it == vectors.end()) return std::nullopt;
    return it->second;
  }
};

class StubTransport : public net::Transport {
public:
  int calls = 0;
  std::vector<std::string> bodies;
  std::function<std::string(const nlohmann::json&)> reply;
  net::HttpResponse post(const net::HttpRequest& request) override {
    ++calls;
    bodies.push_back(request.body);
    return {200, reply(nlohmann::json::parse(request.body))};
  }
};

GaussianCloud points_cloud(const std::vector<Vec3>& centers, int feature_dim = 0) {
  GaussianCloud c;
  c.feature_dim = feature_dim;
  for (const auto& p : centers) {
    Gaussian g = test::make_gaussian(p, 0.05, 0.9);
    if (feature_dim > 0) g.feature = VecX::Zero(feature_dim);
    c.gaussians.push_back(g);
  }
  return c;
}

SourcePoint fused_source(std::size_t gaussian, const Vec3& pos, double value, int material) {
  SourcePoint s;
  s.gaussian_index = gaussian;
  s.position = pos;
  s.views_seen = 1;
  s.property_value = value;
  s.material_argmax = material;
  return s;
}

ImageF constant_depth(int w, int h, double z) { return ImageF(w, h, 1, z); }

}  // namespace

TEST_CASE("source sampling: shared voxel, fine voxels, grid count") {
  const auto two = points_cloud({Vec3(0.01, 0.01, 0.01), Vec3(0.02, 0.02, 0.02), Vec3(1, 1, 1)});
  CHECK(sample_source_points(two, 0.5).size() == 2);
  CHECK(sample_source_points(two, 0.001).size() == 3);

  std::vector<Vec3> grid;
  const double spacing = 0.1;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k) grid.emplace_back(i * spacing, j * spacing, k * spacing);
  // oracle: integer cell indices floor(i / 2) per axis
  std::set<std::array<int, 3>> cells;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k) cells.insert({i / 2, j / 2, k / 2});
  const auto sources = sample_source_points(points_cloud(grid), 2 * spacing);
  CHECK(sources.size() == cells.size());
  CHECK(sources.size() == 125);

  const auto again = sample_source_points(points_cloud(grid), 2 * spacing);
  for (std::size_t i = 0; i < sources.size(); ++i) CHECK(sources[i].gaussian_index == again[i].gaussian_index);
  for (std::size_t i = 1; i < sources.size(); ++i) CHECK(sources[i].gaussian_index > sources[i - 1].gaussian_index);

  CHECK_THROWS_AS(sample_source_points(GaussianCloud{}, 0.1), ValidationError);
  CHECK_THROWS_AS(sample_source_points(two, 0.0), ValidationError);
}

TEST_CASE("source sampling picks the center nearest the voxel centroid") {
  // centroid of the three is (0.1, 0, 0); the middle point sits on it
  const auto cloud = points_cloud({Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0.2, 0, 0)});
  const auto s = sample_source_points(cloud, 1.0);
  REQUIRE(s.size() == 1);
  CHECK(s[0].gaussian_index == 1);
}

TEST_CASE("surface depth divides by alpha and masks background") {
  render::RenderBuffers b;
  b.width = 2;
  b.height = 1;
  b.depth = ImageF(2, 1, 1);
  b.alpha = ImageF(2, 1, 1);
  b.depth.data = {1.5, 0.1};
  b.alpha.data = {0.75, 0.2};
  const auto d = surface_depth(b);
  CHECK(d.data[0] == doctest::Approx(2.0));
  CHECK(std::isinf(d.data[1]));
}

TEST_CASE("patch planning: depth test, bounds, occlusion in every view") {
  const auto scene = synth::two_cluster_scene();
  std::vector<ImageF> depths;
  for (const auto& v : scene.views) depths.push_back(surface_depth(render::render(scene.cloud, v)));
  std::vector<SourcePoint> sources(2);
  sources[0].position = scene.cluster_centers[0];  // inside a shell: hidden from every view
  // the shell point nearest the front camera
  std::size_t front = 0;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i)
    if (scene.cloud.gaussians[i].center.z() < scene.cloud.gaussians[front].center.z()) front = i;
  sources[1].position = scene.cloud.gaussians[front].center;
  const double tau = 0.01 * scene.cloud.bounds().diagonal().norm();
  const auto plan = plan_patches(sources, scene.views, depths, 5, tau);
  bool hidden_seen = false, front_seen = false;
  for (const auto& r : plan) {
    hidden_seen = hidden_seen || r.source == 0;
    front_seen = front_seen || (r.source == 1 && r.view == "front");
  }
  CHECK_FALSE(hidden_seen);
  CHECK(front_seen);

  SyntheticEmbeddingProvider provider(16);
  project_and_gather(sources, scene.views, depths, 5, tau, provider);
  CHECK_FALSE(sources[0].visible());
  CHECK(sources[1].visible());

  // a patch as large as the image never fits
  CHECK(plan_patches(sources, scene.views, depths, 49, tau).empty());
  CHECK_THROWS_AS(plan_patches(sources, scene.views, depths, 4, tau), ValidationError);
}

TEST_CASE("gather: one view copies the patch embedding, two orthogonal views average") {
  CameraView a = test::look_at("a", Vec3(0, 0, -3), Vec3::Zero(), 40, 40, 30);
  CameraView b = test::look_at("b", Vec3(0, 0, 3), Vec3::Zero(), 40, 40, 30);
  std::vector<SourcePoint> sources(1);
  sources[0].position = Vec3::Zero();
  const std::vector<CameraView> one{a};
  const std::vector<CameraView> both{a, b};
  const auto inf = std::numeric_limits<double>::infinity();

  MapProvider provider;
  const auto plan = plan_patches(sources, both, {constant_depth(40, 40, inf), constant_depth(40, 40, inf)}, 7, 0.0);
  REQUIRE(plan.size() == 2);
  provider.vectors[plan[0].key()] = Vec3(1, 0, 0);
  provider.vectors[plan[1].key()] = Vec3(0, 1, 0);
  CHECK(plan[0].key() == "a:20:20:7");

  project_and_gather(sources, one, {constant_depth(40, 40, inf)}, 7, 0.0, provider);
  CHECK(sources[0].views_seen == 1);
  CHECK((sources[0].embedding - Vec3(1, 0, 0)).norm() < 1e-15);

  project_and_gather(sources, both, {constant_depth(40, 40, inf), constant_depth(40, 40, inf)}, 7, 0.0, provider);
  CHECK(sources[0].views_seen == 2);
  CHECK(sources[0].embedding.dot(Vec3(1, 0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(sources[0].embedding.dot(Vec3(0, 1, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)));

  // a surface in front of the point hides it
  project_and_gather(sources, one, {constant_depth(40, 40, 2.0)}, 7, 0.1, provider);
  CHECK_FALSE(sources[0].visible());

  MapProvider empty;
  try {
    project_and_gather(sources, one, {constant_depth(40, 40, inf)}, 7, 0.0, empty);
    FAIL("expected a missing-asset error");
  } catch (const MissingAssetError& e) {
    CHECK(std::string(e.what()).find("a:20:20:7") != std::string::npos);
  }
}

TEST_CASE("requests manifest lists unique patch keys and one text key per material") {
  CameraView a = test::look_at("a", Vec3(0, 0, -3), Vec3::Zero(), 40, 40, 30);
  a.image_file = "images/a.png";
  std::vector<PatchRequest> plan = {{0, "a", 3, 4, 7}, {1, "a", 3, 4, 7}, {1, "a", 5, 4, 7}};
  MaterialDictionary dict;
  dict.entries = {{"steel", PropertyValue::point(7850), {}}, {"wood", PropertyValue::point(600), {}}};
  const auto m = requests_manifest(plan, {a}, dict, 7);
  CHECK(m["patches"].size() == 2);
  CHECK(m["patches"][0]["image"] == "images/a.png");
  CHECK(m["texts"].size() == 2);
  CHECK(m["texts"][0]["key"] == "text:steel");
  CHECK(m["texts"][0]["prompt"] == "a photo of steel");
}

TEST_CASE("embedding archive round trip") {
  const auto dir = test::scratch_dir("archive");
  std::map<std::string, VecX> vectors;
  SyntheticEmbeddingProvider synth(12);
  for (int i = 0; i < 50; ++i) vectors[patch_key("v", i, 2 * i, 7)] = 3.0 * *synth.find(std::to_string(i));
  for (const char* m : {"steel", "wood", "glass"}) vectors[text_key(m)] = *synth.find(m);
  write_embedding_archive(dir / "embeddings.json", vectors, {{"model", "synthetic"}});
  CHECK(std::filesystem::exists(dir / "embeddings.bin"));
  CHECK_FALSE(std::filesystem::exists(dir / "embeddings.json.tmp"));

  const auto archive = EmbeddingArchive::load(dir / "embeddings.json");
  CHECK(archive.size() == 53);
  CHECK(archive.dim() == 12);
  CHECK(archive.metadata()["model"] == "synthetic");
  for (const auto& [key, v] : vectors) {
    const VecX got = archive.get(key);
    CHECK(std::abs(got.norm() - 1.0) < 1e-5);
    CHECK((got - v.normalized()).cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK_FALSE(archive.find("missing").has_value());
  CHECK_THROWS_AS(archive.get("missing"), MissingAssetError);
  CHECK_THROWS_AS(EmbeddingArchive::load(dir / "nope.json"), MissingAssetError);

  std::ofstream(dir / "bad.json") << R"({"format": "pugs-embedding-archive", "dim": 12, "blob": "embeddings.bin",
    "entries": [{"key": "x", "offset": 100000, "dim": 12}]})";
  CHECK_THROWS_AS(EmbeddingArchive::load(dir / "bad.json"), ParseError);
}

TEST_CASE("synthetic provider is deterministic and unit norm; chained provider falls through") {
  SyntheticEmbeddingProvider a(32), b(32);
  CHECK(*a.find("text:steel") == *b.find("text:steel"));
  CHECK(*a.find("text:steel") != *a.find("text:wood"));
  CHECK(std::abs(a.find("k")->norm() - 1.0) < 1e-12);

  auto map = std::make_shared<MapProvider>();
  map->vectors["only"] = Vec3(0, 0, 2);
  ChainedEmbeddingProvider chain({map, std::make_shared<SyntheticEmbeddingProvider>(3)});
  CHECK((chain.get("only") - Vec3(0, 0, 1)).norm() == 0.0);
  CHECK(chain.get("other").size() == 3);
}

TEST_CASE("HTTP embedding provider posts key fields and memoizes") {
  auto stub = std::make_shared<StubTransport>();
  stub->reply = [](const nlohmann::json& body) {
    if (body["key"] == "absent:1:2:3") return std::string(R"({"embedding": null})");
    return std::string(R"({"embedding": [3, 4]})");
  };
  HttpEmbeddingProvider provider(stub, "http://localhost:9/embed");
  const VecX v = provider.get("front:10:12:65");
  CHECK(v[0] == doctest::Approx(0.6));
  const auto body = nlohmann::json::parse(stub->bodies.at(0));
  CHECK(body["kind"] == "patch");
  CHECK(body["view"] == "front");
  CHECK(body["cx"] == 10);
  CHECK(body["cy"] == 12);
  CHECK(body["p"] == 65);
  provider.get("front:10:12:65");
  CHECK(stub->calls == 1);
  provider.get("text:steel");
  CHECK(nlohmann::json::parse(stub->bodies.at(1))["text"] == "a photo of steel");
  CHECK_FALSE(provider.find("absent:1:2:3").has_value());
  CHECK_THROWS_AS(provider.find("absent"), ValidationError);
}

TEST_CASE("fusion closed forms") {
  std::vector<SourcePoint> s(1);
  s[0].views_seen = 1;
  s[0].embedding = Vec3(1, 0, 0);

  fuse_properties(s, {42.0}, {Vec3(0, 1, 0)}, 0.1);
  CHECK(s[0].property_value == 42.0);
  CHECK(s[0].material_argmax == 0);

  fuse_properties(s, {10.0, 20.0, 60.0}, {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0.5, 0.5, 0)}, 1e9);
  CHECK(s[0].property_value == doctest::Approx(30.0).epsilon(1e-6));

  // weights w = (ln 2, 0) at T = 1 give softmax (2/3, 1/3)
  const VecX p = softmax(Eigen::Vector2d(std::log(2.0), 0.0), 1.0);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const double y1 = 5.0, y2 = 11.0;
  const Eigen::Vector3d t1(std::log(2.0), std::sqrt(1 - std::log(2.0) * std::log(2.0)), 0);
  fuse_properties(s, {y1, y2}, {t1, Vec3(0, 0, 1)}, 1.0);
  CHECK(s[0].material_weights[0] == doctest::Approx(std::log(2.0)));
  CHECK(s[0].property_value == doctest::Approx((2 * y1 + y2) / 3.0).epsilon(1e-14));

  CHECK_THROWS_AS(fuse_properties(s, {}, {}, 0.1), ValidationError);
  CHECK_THROWS_AS(fuse_properties(s, {1.0}, {Vec3(1, 0, 0)}, 0.0), ValidationError);

  std::vector<SourcePoint> hidden(1);
  fuse_properties(hidden, {1.0}, {Vec3(1, 0, 0)}, 0.1);
  CHECK_FALSE(hidden[0].fused());
}

TEST_CASE("fusion: convexity on random dictionaries and the low-temperature limit") {
  const auto trials = test::fusion_trials(1000, 77);
  CHECK(trials.convexity_violations == 0);
  CHECK(trials.monotone_violations == 0);
  CHECK(trials.cold_limit_misses == 0);
}

TEST_CASE("propagation: identity, single source, partition, scale invariance") {
  std::mt19937_64 rng(5);
  GaussianCloud cloud = test::random_cloud(rng, 60, 8, Vec3::Zero(), 1.0);
  std::vector<SourcePoint> all;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    all.push_back(fused_source(i, cloud.gaussians[i].center, 100.0 + i, static_cast<int>(i % 3)));
  const auto id = propagate(cloud, all);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(id.source[i] == i);
    CHECK(id.value[i] == 100.0 + i);
  }

  const std::vector<SourcePoint> single{fused_source(7, cloud.gaussians[7].center, 3.5, 1)};
  const auto one = propagate(cloud, single);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(one.value[i] == 3.5);
    CHECK(one.material_id[i] == 1);
  }

  std::vector<SourcePoint> some;
  for (std::size_t i = 0; i < cloud.size(); i += 6)
    some.push_back(fused_source(i, cloud.gaussians[i].center, static_cast<double>(i), static_cast<int>(i % 3)));
  const auto base = propagate(cloud, some);
  for (auto m : base.material_id) CHECK((m >= 0 && m < 3));
  for (double k : {0.001, 3.0, 1e6}) {
    GaussianCloud scaled = cloud;
    for (auto& g : scaled.gaussians) g.feature *= k;
    CHECK(propagate(scaled, some).source == base.source);
  }

  // oracle: explicit cosine argmax
  for (std::size_t g = 0; g < cloud.size(); ++g) {
    if (g % 6 == 0) continue;
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t s = 0; s < some.size(); ++s) {
      const auto& a = cloud.gaussians[g].feature;
      const auto& b = cloud.gaussians[some[s].gaussian_index].feature;
      const double sim = a.dot(b) / (a.norm() * b.norm());
      if (sim > best_sim) {
        best = s;
        best_sim = sim;
      }
    }
    CHECK(base.source[g] == best);
  }
}

TEST_CASE("propagation: equal similarity goes to the lower source index; zero features fall back") {
  GaussianCloud cloud = points_cloud({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.9, 0, 0), Vec3(0.1, 0, 0)}, 2);
  cloud.gaussians[0].feature = Eigen::Vector2d(1, 0);
  cloud.gaussians[1].feature = Eigen::Vector2d(0, 1);
  cloud.gaussians[2].feature = Eigen::Vector2d(1, 1);  // equally similar to both sources
  cloud.gaussians[3].feature = Eigen::Vector2d(0, 0);  // no feature: nearest source in space
  const std::vector<SourcePoint> sources{fused_source(0, cloud.gaussians[0].center, 1.0, 0),
                                         fused_source(1, cloud.gaussians[1].center, 2.0, 1)};
  const auto r = propagate(cloud, sources);
  CHECK(r.source[2] == 0);
  CHECK(r.source[3] == 0);
  CHECK(r.fallback_count == 1);

  GaussianCloud plain = cloud;
  plain.feature_dim = 0;
  CHECK_THROWS_AS(propagate(plain, sources), ValidationError);
  std::vector<SourcePoint> none(1);
  CHECK_THROWS_AS(propagate(cloud, none), DegenerateError);
}

TEST_CASE("nearest-neighbor baseline: coincident, midpoint tie, brute-force oracle") {
  GaussianCloud cloud = points_cloud({Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(1, 0, 0)});
  const std::vector<SourcePoint> sources{fused_source(0, Vec3(0, 0, 0), 1.0, 0),
                                         fused_source(1, Vec3(2, 0, 0), 2.0, 1)};
  const auto r = propagate_nn_baseline(cloud, sources);
  CHECK(r.value[0] == 1.0);
  CHECK(r.value[1] == 2.0);
  CHECK(r.source[2] == 0);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> grid(-3, 3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec3> pts, src;
    // integer lattice points make exact distance ties common
    for (int i = 0; i < 400; ++i) pts.emplace_back(trial % 2 ? Vec3(grid(rng), grid(rng), grid(rng)) : Vec3(u(rng), u(rng), u(rng)));
    for (int i = 0; i < 40; ++i) src.emplace_back(trial % 2 ? Vec3(grid(rng), grid(rng), grid(rng)) : Vec3(u(rng), u(rng), u(rng)));
    const KdTree tree(src);
    for (const auto& q : pts) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < src.size(); ++s)
        if ((src[s] - q).squaredNorm() < (src[best] - q).squaredNorm()) best = s;
      CHECK(tree.nearest(q) == best);
    }
  }
}

TEST_CASE("two-cluster scene: trained features propagate with no cross-cluster assignment") {
  const auto scene = synth::two_cluster_scene();
  features::TrainerConfig config;
  config.iterations = 300;
  config.pairs_per_iteration = 1024;
  const auto trained = features::train_features(scene.cloud, scene.views, config).cloud;
  // one source per cluster, carrying that cluster's label as material
  std::vector<SourcePoint> sources;
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < trained.size(); ++i) {
      if (scene.labels[i] == c) {
        sources.push_back(fused_source(i, trained.gaussians[i].center, c == 0 ? 100.0 : 900.0, c));
        break;
      }
    }
  }
  const auto r = propagate(trained, sources);
  int cross = 0;
  for (std::size_t i = 0; i < trained.size(); ++i) cross += r.material_id[i] != scene.labels[i];
  CHECK(cross == 0);
}
