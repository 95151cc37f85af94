#include "pugs/core/cameras.hpp"

#include "pugs/core/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <sstream>

namespace pugs {

namespace {

using json = nlohmann::json;

struct Intrinsics {
  int width = 0;
  int height = 0;
  Mat3 k = Mat3::Identity();
};

std::vector<std::string> content_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingAssetError("missing COLMAP file '" + file.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

std::map<long, Intrinsics> parse_colmap_cameras(const std::filesystem::path& file) {
  std::map<long, Intrinsics> cams;
  for (const auto& line : content_lines(file)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    long id = 0;
    std::string model;
    Intrinsics in;
    if (!(ls >> id >> model >> in.width >> in.height)) {
      throw ParseError("cameras.txt: malformed line '" + line + "'");
    }
    std::vector<double> params;
    double v;
    while (ls >> v) params.push_back(v);
    if (model == "PINHOLE") {
      if (params.size() != 4) throw ParseError("cameras.txt: PINHOLE needs 4 parameters");
      in.k << params[0], 0, params[2], 0, params[1], params[3], 0, 0, 1;
    } else if (model == "SIMPLE_PINHOLE") {
      if (params.size() != 3) throw ParseError("cameras.txt: SIMPLE_PINHOLE needs 3 parameters");
      in.k << params[0], 0, params[1], 0, params[0], params[2], 0, 0, 1;
    } else {
      throw ValidationError("unsupported camera model '" + model + "' (only PINHOLE and SIMPLE_PINHOLE)");
    }
    cams[id] = in;
  }
  return cams;
}

std::string stem_of(const std::string& file) { return std::filesystem::path(file).stem().string(); }

}  // namespace

std::vector<CameraView> load_colmap_text(const std::filesystem::path& dir) {
  const auto cams_file = dir / "cameras.txt";
  const auto images_file = dir / "images.txt";
  // read both before building anything so a missing file yields no partial result
  const auto image_lines = content_lines(images_file);
  const auto cams = parse_colmap_cameras(cams_file);

  std::vector<CameraView> views;
  bool expect_image = true;
  for (const auto& line : image_lines) {
    if (!expect_image) {
      expect_image = true;  // POINTS2D line, possibly empty
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    long image_id = 0, camera_id = 0;
    double qw, qx, qy, qz, tx, ty, tz;
    std::string name;
    if (!(ls >> image_id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> camera_id >> name)) {
      throw ParseError("images.txt: malformed line '" + line + "'");
    }
    const auto it = cams.find(camera_id);
    if (it == cams.end()) {
      throw ValidationError("images.txt: image '" + name + "' references unknown camera " + std::to_string(camera_id));
    }
    CameraView v;
    v.name = stem_of(name);
    v.image_file = name;
    v.intrinsics = it->second.k;
    v.width = it->second.width;
    v.height = it->second.height;
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    v.world_to_camera.linear() = q.toRotationMatrix();
    v.world_to_camera.translation() = Vec3(tx, ty, tz);
    v.validate();
    views.push_back(std::move(v));
    expect_image = false;
  }
  return views;
}

std::vector<CameraView> load_transforms_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingAssetError("missing transforms file '" + file.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("transforms '" + file.string() + "': " + e.what());
  }
  if (!doc.contains("frames") || !doc["frames"].is_array()) {
    throw ParseError("transforms '" + file.string() + "': missing 'frames' array");
  }
  const std::string convention = doc.value("convention", std::string("opengl"));
  if (convention != "opengl" && convention != "opencv") {
    throw ValidationError("transforms: convention must be 'opengl' or 'opencv'");
  }
  auto number = [&](const json& frame, const char* key) -> double {
    if (frame.contains(key)) return frame[key].get<double>();
    if (doc.contains(key)) return doc[key].get<double>();
    throw ParseError(std::string("transforms: missing '") + key + "'");
  };

  std::vector<CameraView> views;
  for (const auto& frame : doc["frames"]) {
    try {
      CameraView v;
      v.image_file = frame.at("file_path").get<std::string>();
      v.name = stem_of(v.image_file);
      v.width = static_cast<int>(number(frame, "w"));
      v.height = static_cast<int>(number(frame, "h"));
      const double fx = number(frame, "fl_x");
      const double fy = frame.contains("fl_y") || doc.contains("fl_y") ? number(frame, "fl_y") : fx;
      v.intrinsics << fx, 0, number(frame, "cx"), 0, fy, number(frame, "cy"), 0, 0, 1;
      const auto& m = frame.at("transform_matrix");
      Eigen::Matrix4d c2w;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) c2w(r, c) = m.at(r).at(c).get<double>();
      if (convention == "opengl") {
        c2w.col(1) *= -1.0;
        c2w.col(2) *= -1.0;
      }
      Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
      pose.linear() = c2w.topLeftCorner<3, 3>();
      pose.translation() = c2w.topRightCorner<3, 1>();
      v.world_to_camera = pose.inverse();
      v.validate();
      views.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw ParseError("transforms '" + file.string() + "': " + e.what());
    }
  }
  return views;
}

std::vector<CameraView> load_cameras(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_colmap_text(path);
  if (path.extension() == ".json") return load_transforms_json(path);
  if (path.filename() == "images.txt" || path.filename() == "cameras.txt") {
    return load_colmap_text(path.parent_path());
  }
  throw ValidationError("unrecognized camera source '" + path.string() + "'");
}

void save_transforms_json(const std::filesystem::path& file, const std::vector<CameraView>& views) {
  json doc;
  doc["convention"] = "opencv";
  doc["frames"] = json::array();
  for (const auto& v : views) {
    const Eigen::Matrix4d c2w = v.world_to_camera.inverse().matrix();
    json m = json::array();
    for (int r = 0; r < 4; ++r) {
      json row = json::array();
      for (int c = 0; c < 4; ++c) row.push_back(c2w(r, c));
      m.push_back(row);
    }
    doc["frames"].push_back({{"file_path", v.image_file.empty() ? v.name + ".png" : v.image_file},
                             {"transform_matrix", m},
                             {"fl_x", v.fx()},
                             {"fl_y", v.fy()},
                             {"cx", v.cx()},
                             {"cy", v.cy()},
                             {"w", v.width},
                             {"h", v.height}});
  }
  std::ofstream out(file);
  if (!out) throw IoError("cannot write '" + file.string() + "'");
  out << doc.dump(2) << "\n";
}

}  // namespace pugs
