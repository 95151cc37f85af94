#include "pugs/core/ply.hpp"

#include "pugs/core/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace pugs {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
  }
  return 0;
}

ScalarType parse_type(const std::string& s) {
  static const std::map<std::string, ScalarType> types = {
      {"char", ScalarType::Int8},      {"int8", ScalarType::Int8},
      {"uchar", ScalarType::UInt8},    {"uint8", ScalarType::UInt8},
      {"short", ScalarType::Int16},    {"int16", ScalarType::Int16},
      {"ushort", ScalarType::UInt16},  {"uint16", ScalarType::UInt16},
      {"int", ScalarType::Int32},      {"int32", ScalarType::Int32},
      {"uint", ScalarType::UInt32},    {"uint32", ScalarType::UInt32},
      {"float", ScalarType::Float32},  {"float32", ScalarType::Float32},
      {"double", ScalarType::Float64}, {"float64", ScalarType::Float64},
  };
  const auto it = types.find(s);
  if (it == types.end()) throw ParseError("PLY: unsupported property type '" + s + "'");
  return it->second;
}

template <typename T>
T read_as(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_scalar(const char* p, ScalarType t) {
  switch (t) {
    case ScalarType::Int8: return read_as<std::int8_t>(p);
    case ScalarType::UInt8: return read_as<std::uint8_t>(p);
    case ScalarType::Int16: return read_as<std::int16_t>(p);
    case ScalarType::UInt16: return read_as<std::uint16_t>(p);
    case ScalarType::Int32: return read_as<std::int32_t>(p);
    case ScalarType::UInt32: return read_as<std::uint32_t>(p);
    case ScalarType::Float32: return read_as<float>(p);
    case ScalarType::Float64: return read_as<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  ScalarType type;
  std::size_t offset;
};

int sh_degree_for_rest_count(int rest) {
  switch (rest) {
    case 0: return 0;
    case 9: return 1;
    case 24: return 2;
    case 45: return 3;
    default: throw ParseError("PLY: f_rest count " + std::to_string(rest) + " is not a valid SH layout");
  }
}

}  // namespace

GaussianCloud load_gaussian_ply(const std::filesystem::path& path, std::vector<PlyColumn>* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PLY '" + path.string() + "'");

  std::string line;
  std::getline(in, line);
  if (line != "ply" && line != "ply\r") throw ParseError("PLY: missing magic in '" + path.string() + "'");

  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<Property> props;
  std::size_t stride = 0;
  std::string format;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "end_header") break;
    if (tok == "format") {
      ls >> format;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (seen_vertex && name != "vertex") {
        in_vertex = false;
        continue;
      }
      in_vertex = name == "vertex";
      if (in_vertex) {
        seen_vertex = true;
        vertex_count = count;
      } else if (!seen_vertex && count > 0) {
        throw ParseError("PLY: elements before 'vertex' are not supported");
      }
    } else if (tok == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") throw ParseError("PLY: list properties are not supported on vertices");
      ls >> name;
      const ScalarType t = parse_type(type);
      props.push_back({name, t, stride});
      stride += type_size(t);
    }
  }
  if (format != "binary_little_endian") {
    throw ParseError("PLY: only binary_little_endian is supported (got '" + format + "')");
  }
  if (!seen_vertex) throw ParseError("PLY: no vertex element");

  std::map<std::string, const Property*> by_name;
  for (const auto& p : props) by_name[p.name] = &p;
  auto require = [&](const std::string& name) -> const Property& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("PLY: missing required field '" + name + "'");
    return *it->second;
  };

  const char* required[] = {"x",       "y",       "z",       "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                            "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",  "rot_2",  "rot_3"};
  for (const char* r : required) require(r);

  int rest = 0;
  while (by_name.count("f_rest_" + std::to_string(rest))) ++rest;
  int feature_dim = 0;
  while (by_name.count("feature_" + std::to_string(feature_dim))) ++feature_dim;

  GaussianCloud cloud;
  cloud.sh_degree = sh_degree_for_rest_count(rest);
  cloud.feature_dim = feature_dim;
  const int coeffs = (cloud.sh_degree + 1) * (cloud.sh_degree + 1);
  const int rest_per_channel = coeffs - 1;

  std::vector<const Property*> extra_props;
  for (const auto& p : props) {
    const std::string& n = p.name;
    const bool standard = n == "x" || n == "y" || n == "z" || n == "nx" || n == "ny" || n == "nz" ||
                          n.rfind("f_dc_", 0) == 0 || n.rfind("f_rest_", 0) == 0 || n == "opacity" ||
                          n.rfind("scale_", 0) == 0 || n.rfind("rot_", 0) == 0 ||
                          n.rfind("feature_", 0) == 0;
    if (!standard) extra_props.push_back(&p);
  }
  if (extras) {
    extras->clear();
    for (const Property* p : extra_props) {
      const bool integer = p->type != ScalarType::Float32 && p->type != ScalarType::Float64;
      extras->push_back({p->name, {}, integer});
      extras->back().values.reserve(vertex_count);
    }
  }

  std::vector<char> buf(stride * vertex_count);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw ParseError("PLY: truncated vertex data in '" + path.string() + "'");
  }

  auto field = [&](const std::string& name) { return by_name.at(name); };
  auto read = [](const char* rec, const Property* p) { return read_scalar(rec + p->offset, p->type); };
  const Property* pos[3] = {field("x"), field("y"), field("z")};
  const Property* scale[3] = {field("scale_0"), field("scale_1"), field("scale_2")};
  const Property* rot[4] = {field("rot_0"), field("rot_1"), field("rot_2"), field("rot_3")};
  const Property* opacity = field("opacity");
  std::vector<const Property*> dc, rest_fields, features;
  for (int c = 0; c < 3; ++c) dc.push_back(field("f_dc_" + std::to_string(c)));
  for (int k = 0; k < rest; ++k) rest_fields.push_back(field("f_rest_" + std::to_string(k)));
  for (int d = 0; d < feature_dim; ++d) features.push_back(field("feature_" + std::to_string(d)));

  cloud.gaussians.resize(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    const char* rec = buf.data() + i * stride;
    Gaussian& g = cloud.gaussians[i];
    for (int k = 0; k < 3; ++k) g.center[k] = read(rec, pos[k]);
    g.sh.resize(coeffs, 3);
    for (int c = 0; c < 3; ++c) {
      g.sh(0, c) = read(rec, dc[c]);
      for (int k = 0; k < rest_per_channel; ++k) g.sh(k + 1, c) = read(rec, rest_fields[c * rest_per_channel + k]);
    }
    g.opacity_logit = read(rec, opacity);
    for (int k = 0; k < 3; ++k) g.log_scale[k] = read(rec, scale[k]);
    for (int k = 0; k < 4; ++k) g.rotation[k] = read(rec, rot[k]);
    if (feature_dim > 0) {
      g.feature.resize(feature_dim);
      for (int d = 0; d < feature_dim; ++d) g.feature[d] = read(rec, features[d]);
    }
    const bool finite = g.center.allFinite() && g.sh.allFinite() && std::isfinite(g.opacity_logit) &&
                        g.log_scale.allFinite() && g.rotation.allFinite() &&
                        (feature_dim == 0 || g.feature.allFinite());
    if (!finite) throw ValidationError("PLY: non-finite value in gaussian " + std::to_string(i));
    if (extras) {
      for (std::size_t e = 0; e < extra_props.size(); ++e) {
        (*extras)[e].values.push_back(read_scalar(rec + extra_props[e]->offset, extra_props[e]->type));
      }
    }
  }
  cloud.validate();
  return cloud;
}

void save_gaussian_ply(const std::filesystem::path& path, const GaussianCloud& cloud,
                       const std::vector<PlyColumn>& extras) {
  for (const auto& col : extras) {
    if (col.values.size() != cloud.size()) {
      throw ValidationError("PLY: extra column '" + col.name + "' has wrong length");
    }
  }
  const int coeffs = (cloud.sh_degree + 1) * (cloud.sh_degree + 1);
  const int rest_per_channel = coeffs - 1;

  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << "\n";
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int k = 0; k < 3 * rest_per_channel; ++k) names.push_back("f_rest_" + std::to_string(k));
  names.push_back("opacity");
  for (int k = 0; k < 3; ++k) names.push_back("scale_" + std::to_string(k));
  for (int k = 0; k < 4; ++k) names.push_back("rot_" + std::to_string(k));
  for (int d = 0; d < cloud.feature_dim; ++d) names.push_back("feature_" + std::to_string(d));
  for (const auto& n : names) header << "property float " << n << "\n";
  for (const auto& col : extras) header << "property " << (col.integer ? "int" : "float") << " " << col.name << "\n";
  header << "end_header\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PLY '" + path.string() + "'");
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));

  std::vector<char> rec;
  auto put_f = [&](double v) {
    const float f = static_cast<float>(v);
    const char* p = reinterpret_cast<const char*>(&f);
    rec.insert(rec.end(), p, p + 4);
  };
  auto put_i = [&](double v) {
    const std::int32_t n = static_cast<std::int32_t>(std::llround(v));
    const char* p = reinterpret_cast<const char*>(&n);
    rec.insert(rec.end(), p, p + 4);
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    rec.clear();
    for (int k = 0; k < 3; ++k) put_f(g.center[k]);
    for (int k = 0; k < 3; ++k) put_f(0.0);
    for (int c = 0; c < 3; ++c) put_f(g.sh(0, c));
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < rest_per_channel; ++k) put_f(g.sh(k + 1, c));
    put_f(g.opacity_logit);
    for (int k = 0; k < 3; ++k) put_f(g.log_scale[k]);
    for (int k = 0; k < 4; ++k) put_f(g.rotation[k]);
    for (int d = 0; d < cloud.feature_dim; ++d) put_f(g.feature[d]);
    for (const auto& col : extras) col.integer ? put_i(col.values[i]) : put_f(col.values[i]);
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw IoError("failed writing PLY '" + path.string() + "'");
}

}  // namespace pugs
