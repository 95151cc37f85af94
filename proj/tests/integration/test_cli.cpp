#include "cli_support.hpp"
#include "pugs/app/config.hpp"
#include "pugs/core/ply.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace pugs;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path root = test::scratch_dir("cli");
  fs::path object = root / "obj";
  fs::path baseline = root / "baseline";

  Fixture() {
    REQUIRE(test::run_cli("fixture " + object.string()) == 0);
    REQUIRE(test::run_cli("pipeline " + object.string() + " --out " + baseline.string()) == 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::vector<std::int32_t> material_ids(const fs::path& ply) {
  std::vector<PlyColumn> extras;
  load_gaussian_ply(ply, &extras);
  for (const auto& c : extras)
    if (c.name == "material_id") return std::vector<std::int32_t>(c.values.begin(), c.values.end());
  return {};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(test::run_cli("") == 1);
  CHECK(test::run_cli("--no-such-flag pipeline x") == 1);
  CHECK(test::run_cli("frobnicate") == 1);
  CHECK(test::run_cli("--ablate sparse pipeline x") == 1);
  CHECK(test::run_cli("--help") == 0);
}

TEST_CASE("missing assets exit 2, invalid config exits 1") {
  const auto dir = test::scratch_dir("cli_errors");
  CHECK(test::run_cli("pipeline " + (dir / "absent").string()) == 2);
  std::ofstream(dir / "bad.toml") << "[features]\niterations = -4\n";
  CHECK(test::run_cli("--config " + (dir / "bad.toml").string() + " integrate " + fixture().object.string()) == 1);
}

TEST_CASE("init-config emits the defaults") {
  const auto dir = test::scratch_dir("cli_init");
  REQUIRE(test::run_cli("init-config -o " + (dir / "pugs.toml").string()) == 0);
  CHECK(app::load_config(dir / "pugs.toml").hash() == app::Config{}.hash());
}

TEST_CASE("pipeline on the fixture emits mass JSON close to ground truth") {
  const auto& f = fixture();
  const auto mass = nlohmann::json::parse(test::slurp(f.baseline / "mass.json"));
  for (const char* key : {"property", "unit", "m_hat", "c", "v", "m", "k_sigma", "counts", "config_hash"})
    CHECK_MESSAGE(mass.contains(key), key);
  CHECK(mass["metadata"]["config"]["features"]["iterations"] == 300);
  const auto report = nlohmann::json::parse(test::slurp(f.baseline / "report.json"));
  CHECK(report["objects"][0]["ape"].get<double>() < 0.01);

  const auto labels = nlohmann::json::parse(test::slurp(f.object / "fixture.json"))["labels"];
  const auto ids = material_ids(f.baseline / "assignments.ply");
  REQUIRE(ids.size() == labels.size());
  int cross = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) cross += ids[i] != labels[i].get<int>();
  CHECK(cross == 0);
}

TEST_CASE("determinism: a second run is byte identical") {
  const auto& f = fixture();
  const auto again = f.root / "again";
  REQUIRE(test::run_cli("pipeline " + f.object.string() + " --out " + again.string()) == 0);
  auto a = test::tree(f.baseline), b = test::tree(again);
  CHECK(a.size() == b.size());
  for (const auto& [name, content] : a) CHECK_MESSAGE(b[name] == content, name);
}

TEST_CASE("pipeline equals the chained stages") {
  const auto& f = fixture();
  const auto chained = f.root / "chained";
  for (const auto& [stage, files] : test::stage_outputs())
    REQUIRE(test::run_cli(stage + " " + f.object.string() + " --out " + chained.string()) == 0);
  auto a = test::tree(f.baseline), b = test::tree(chained);
  for (const auto& [name, content] : b) CHECK_MESSAGE(a[name] == content, name);
  CHECK(a.size() == b.size() + 2);  // report.json, report.csv
}

TEST_CASE("ablations change exactly one stage") {
  const auto& f = fixture();
  CHECK(test::stages_changed_by(f.object, f.baseline, f.root / "raft", "--ablate raft") ==
        std::vector<std::string>{"propagate"});
  CHECK(test::stages_changed_by(f.object, f.baseline, f.root / "thickness", "--ablate thickness") ==
        std::vector<std::string>{"integrate"});

  const auto raft = f.root / "raft_full";
  REQUIRE(test::run_cli("--ablate raft pipeline " + f.object.string() + " --out " + raft.string()) == 0);
  CHECK(test::slurp(raft / "assignments.ply") != test::slurp(f.baseline / "assignments.ply"));
  const auto prop = nlohmann::json::parse(test::slurp(raft / "propagation.json"));
  CHECK(prop["method"] == "nearest_source");
  CHECK(prop["metadata"]["ablations"] == nlohmann::json::array({"raft"}));

  const auto garl = f.root / "garl_full";
  REQUIRE(test::run_cli("--ablate garl pipeline " + f.object.string() + " --out " + garl.string()) == 0);
  CHECK(test::slurp(garl / "features.ply") != test::slurp(f.baseline / "features.ply"));
  const auto render = nlohmann::json::parse(test::slurp(garl / "render.json"));
  CHECK(render["loss_weights"]["lambda_geo"] == 0.0);
}

TEST_CASE("evaluate isolates failing objects") {
  const auto root = test::scratch_dir("cli_dataset");
  REQUIRE(test::run_cli("--seed 3 fixture " + (root / "data" / "a").string()) == 0);
  REQUIRE(test::run_cli("--seed 4 fixture " + (root / "data" / "b").string()) == 0);
  fs::create_directories(root / "data" / "broken");
  REQUIRE(test::run_cli("evaluate " + (root / "data").string() + " --paper-reference --out " +
                        (root / "eval").string()) == 0);
  const auto report = nlohmann::json::parse(test::slurp(root / "eval" / "report.json"));
  CHECK(report["counts"]["succeeded"] == 2);
  CHECK(report["failures"][0]["id"] == "broken");
  CHECK(report["mean"]["ape"].get<double>() < 0.01);
  CHECK(report["paper_reference"][0]["method"] == "NeRF2Physics");

  REQUIRE(test::run_cli("evaluate " + (root / "data").string() + " --ids a --out " + (root / "one").string()) == 0);
  const auto one = nlohmann::json::parse(test::slurp(root / "one" / "report.json"));
  CHECK(one["objects"].size() == 1);
  CHECK_FALSE(one.contains("paper_reference"));
  CHECK(test::run_cli("evaluate " + (root / "empty").string()) == 2);
}
