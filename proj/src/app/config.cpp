#include "pugs/app/config.hpp"

#include "pugs/core/error.hpp"
#include "pugs/net/transport.hpp"

#include <toml.hpp>

#include <fstream>
#include <sstream>

namespace pugs::app {

namespace {

using json = nlohmann::json;

json from_toml(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = from_toml(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(from_toml(v));
    return out;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw ConfigError("unsupported TOML value type");
}

/// Scalar as TOML; strings and numbers share JSON's spelling, which is shortest round-trip for doubles.
std::string toml_scalar(const json& value) {
  std::string text = value.dump();
  if (value.is_number_float() && text.find_first_of(".eE") == std::string::npos) text += ".0";
  return text;
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_float() == false && b.is_number_float());
  return a.type() == b.type();
}

/// Overlays `user` onto `defaults`, rejecting unknown keys and type changes.
void overlay(json& defaults, const json& user, const std::string& path, const std::string& source) {
  for (const auto& [k, v] : user.items()) {
    const std::string name = path.empty() ? k : path + "." + k;
    if (!defaults.contains(k)) throw ConfigError(source + ": unknown key '" + name + "'");
    json& slot = defaults[k];
    if (slot.is_object()) {
      if (!v.is_object()) throw ConfigError(source + ": '" + name + "' must be a table");
      overlay(slot, v, name, source);
    } else {
      if (!same_kind(slot, v)) throw ConfigError(source + ": '" + name + "' has the wrong type");
      slot = slot.is_number_float() ? json(v.get<double>()) : v;
    }
  }
}

std::string collapse_name(const std::optional<CollapseRule>& rule) {
  if (!rule) return "default";
  return *rule == CollapseRule::Midpoint ? "midpoint" : "geometric_mean";
}

std::optional<CollapseRule> collapse_from_name(const std::string& s) {
  if (s == "default") return std::nullopt;
  if (s == "midpoint") return CollapseRule::Midpoint;
  if (s == "geometric_mean") return CollapseRule::GeometricMean;
  throw ConfigError("unknown collapse rule '" + s + "' (expected default, midpoint or geometric_mean)");
}

Config from_json(const json& j) {
  Config c;
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& l = j.at("loss");
  c.loss.lambda_ssim = l.at("lambda_ssim");
  c.loss.lambda_geo = l.at("lambda_geo");
  c.loss.lambda_sparse = l.at("lambda_sparse");
  c.edge_weight_mode = loss::edge_weight_mode_from_string(l.at("edge_weight_mode"));
  const auto& f = j.at("features");
  c.features.iterations = f.at("iterations");
  c.features.pairs_per_iteration = f.at("pairs_per_iteration");
  c.features.learning_rate = f.at("learning_rate");
  c.features.feature_dim = f.at("feature_dim");
  c.features.optimizer = features::optimizer_from_string(f.at("optimizer"));
  c.features.balance = f.at("balance");
  c.features.init_std = f.at("init_std");
  c.features.seed = c.seed;
  const auto& p = j.at("propagation");
  c.propagation.voxel_fraction = p.at("voxel_fraction");
  c.propagation.patch_size = p.at("patch_size");
  c.propagation.temperature = p.at("temperature");
  c.propagation.depth_tolerance_fraction = p.at("depth_tolerance_fraction");
  const auto& m = j.at("mass");
  c.mass.k_sigma = m.at("k_sigma");
  c.mass.mode = mass_mode_from_string(m.at("mode"));
  c.mass.default_thickness_m = m.at("default_thickness_m");
  c.mass.pure_volume_m3 = m.at("pure_volume_m3");
  const auto& pr = j.at("property");
  c.property.kind = property_kind_from_string(pr.at("kind"));
  c.property.collapse = collapse_from_name(pr.at("collapse"));
  const auto& v = j.at("vlm");
  c.vlm.endpoint = v.at("endpoint");
  c.vlm.model = v.at("model");
  c.vlm.api_key_env = v.at("api_key_env");
  c.vlm.temperature = v.at("temperature");
  c.vlm.timeout_seconds = v.at("timeout_seconds");
  c.vlm.offline = v.at("offline");
  c.vlm_cache = v.at("cache_dir");
  const auto& e = j.at("embeddings");
  c.embeddings.archive = e.at("archive");
  c.embeddings.endpoint = e.at("endpoint");
  return c;
}

}  // namespace

std::string to_string(MassMode mode) { return mode == MassMode::Gaussian ? "gaussian" : "thickness"; }

MassMode mass_mode_from_string(const std::string& s) {
  if (s == "gaussian") return MassMode::Gaussian;
  if (s == "thickness") return MassMode::Thickness;
  throw ConfigError("unknown mass mode '" + s + "' (expected gaussian or thickness)");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Garl: return "garl";
    case Ablation::Raft: return "raft";
    case Ablation::Thickness: return "thickness";
  }
  return "";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "garl") return Ablation::Garl;
  if (s == "raft") return Ablation::Raft;
  if (s == "thickness") return Ablation::Thickness;
  throw ValidationError("unknown ablation '" + s + "' (expected garl, raft or thickness)");
}

void Config::validate() const {
  loss.validate();
  features.validate();
  propagation.validate();
  if (!(mass.k_sigma > 0.0)) throw ConfigError("mass.k_sigma must be positive");
  if (!(mass.default_thickness_m > 0.0)) throw ConfigError("mass.default_thickness_m must be positive");
  if (!(mass.pure_volume_m3 >= 0.0)) throw ConfigError("mass.pure_volume_m3 must be >= 0");
  if (!(vlm.timeout_seconds > 0.0)) throw ConfigError("vlm.timeout_seconds must be positive");
  if (embeddings.archive.empty()) throw ConfigError("embeddings.archive must not be empty");
}

json Config::to_json() const {
  return {{"seed", seed},
          {"loss",
           {{"lambda_ssim", loss.lambda_ssim},
            {"lambda_geo", loss.lambda_geo},
            {"lambda_sparse", loss.lambda_sparse},
            {"edge_weight_mode", loss::to_string(edge_weight_mode)}}},
          {"features",
           {{"iterations", features.iterations},
            {"pairs_per_iteration", features.pairs_per_iteration},
            {"learning_rate", features.learning_rate},
            {"feature_dim", features.feature_dim},
            {"optimizer", features::to_string(features.optimizer)},
            {"balance", features.balance},
            {"init_std", features.init_std}}},
          {"propagation", propagation.to_json()},
          {"mass",
           {{"k_sigma", mass.k_sigma},
            {"mode", app::to_string(mass.mode)},
            {"default_thickness_m", mass.default_thickness_m},
            {"pure_volume_m3", mass.pure_volume_m3}}},
          {"property", {{"kind", pugs::to_string(property.kind)}, {"collapse", collapse_name(property.collapse)}}},
          {"vlm",
           {{"endpoint", vlm.endpoint},
            {"model", vlm.model},
            {"api_key_env", vlm.api_key_env},
            {"temperature", vlm.temperature},
            {"timeout_seconds", vlm.timeout_seconds},
            {"offline", vlm.offline},
            {"cache_dir", vlm_cache}}},
          {"embeddings", {{"archive", embeddings.archive}, {"endpoint", embeddings.endpoint}}}};
}

std::string Config::hash() const { return net::sha256_hex(to_json().dump()); }

std::string default_config_toml() {
  const json defaults = Config{}.to_json();
  std::ostringstream out;
  for (const auto& [k, v] : defaults.items())
    if (!v.is_object()) out << k << " = " << toml_scalar(v) << "\n";
  for (const auto& [section, table] : defaults.items()) {
    if (!table.is_object()) continue;
    out << "\n[" << section << "]\n";
    for (const auto& [k, v] : table.items()) out << k << " = " << toml_scalar(v) << "\n";
  }
  return out.str();
}

Config parse_config_toml(const std::string& text, const std::string& source) {
  toml::table table;
  try {
    table = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  json merged = Config{}.to_json();
  overlay(merged, from_toml(table), "", source);
  Config config;
  try {
    config = from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  config.validate();
  return config;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAssetError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_toml(ss.str(), path.string());
}

Config resolve_config(const std::optional<std::filesystem::path>& explicit_path,
                      const std::filesystem::path& object_dir) {
  if (explicit_path) return load_config(*explicit_path);
  const auto local = object_dir / "pugs.toml";
  if (std::filesystem::exists(local)) return load_config(local);
  return Config{};
}

}  // namespace pugs::app
