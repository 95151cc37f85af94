#include "pugs/eval/metrics.hpp"

#include "pugs/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pugs::eval {

nlohmann::json Metrics::to_json() const { return {{"ade", ade}, {"alde", alde}, {"ape", ape}, {"mnre", mnre}}; }

Metrics metrics(double m, double y) {
  if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("predicted value must be positive and finite");
  if (!(y > 0.0) || !std::isfinite(y)) throw ValidationError("ground truth must be positive and finite");
  Metrics out;
  out.ade = std::abs(m - y);
  out.alde = std::abs(std::log(m) - std::log(y));
  out.ape = out.ade / y;
  out.mnre = std::min(m / y, y / m);
  return out;
}

namespace {

double mean_of(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Metrics reduce(const std::vector<ObjectRow>& rows, double (*f)(std::vector<double>)) {
  std::vector<double> ade, alde, ape, mnre;
  for (const auto& r : rows) {
    ade.push_back(r.metrics.ade);
    alde.push_back(r.metrics.alde);
    ape.push_back(r.metrics.ape);
    mnre.push_back(r.metrics.mnre);
  }
  return {f(ade), f(alde), f(ape), f(mnre)};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

Aggregate aggregate(const std::vector<ObjectRow>& rows) {
  if (rows.empty()) throw ValidationError("cannot aggregate zero rows");
  return {reduce(rows, mean_of), reduce(rows, median_of)};
}

const std::vector<ReferenceRow>& paper_reference() {
  static const std::vector<ReferenceRow> rows = {
      {"NeRF2Physics", {12.725, 0.736, 1.040, 0.564}},
      {"PUGS", {9.461, 0.661, 0.767, 0.576}},
  };
  return rows;
}

nlohmann::json Report::to_json(bool with_reference) const {
  nlohmann::json doc;
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& r : rows) {
    auto row = r.metrics.to_json();
    row["id"] = r.id;
    row["predicted_kg"] = r.predicted;
    row["ground_truth_kg"] = r.ground_truth;
    objects.push_back(row);
  }
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& f : failures) failed.push_back({{"id", f.id}, {"error", f.error}});
  doc["objects"] = objects;
  doc["failures"] = failed;
  doc["counts"] = {{"succeeded", rows.size()}, {"failed", failures.size()}};
  if (aggregate) {
    doc["mean"] = aggregate->mean.to_json();
    doc["median"] = aggregate->median.to_json();
  } else {
    doc["mean"] = nullptr;
    doc["median"] = nullptr;
  }
  doc["metadata"] = metadata;
  if (with_reference) {
    nlohmann::json ref = nlohmann::json::array();
    for (const auto& r : paper_reference()) {
      auto row = r.values.to_json();
      row["method"] = r.method;
      row["dataset"] = "ABO-500";
      ref.push_back(row);
    }
    doc["paper_reference"] = ref;
  }
  return doc;
}

std::string Report::to_csv(bool with_reference) const {
  std::ostringstream out;
  out << "id,predicted_kg,ground_truth_kg,ade,alde,ape,mnre\n";
  for (const auto& r : rows) {
    out << csv_field(r.id) << ',' << fmt(r.predicted) << ',' << fmt(r.ground_truth) << ',' << fmt(r.metrics.ade)
        << ',' << fmt(r.metrics.alde) << ',' << fmt(r.metrics.ape) << ',' << fmt(r.metrics.mnre) << '\n';
  }
  auto summary = [&](const char* name, const Metrics& m) {
    out << name << ",,," << fmt(m.ade) << ',' << fmt(m.alde) << ',' << fmt(m.ape) << ',' << fmt(m.mnre) << '\n';
  };
  if (aggregate) {
    summary("mean", aggregate->mean);
    summary("median", aggregate->median);
  }
  for (const auto& f : failures) out << "# failed " << f.id << ": " << f.error << '\n';
  if (with_reference) {
    out << "# reference results on ABO-500 (not comparable with synthetic data)\n";
    for (const auto& r : paper_reference()) summary((std::string("reference:") + r.method).c_str(), r.values);
  }
  return out.str();
}

double load_ground_truth(const std::filesystem::path& object_dir) {
  const auto path = object_dir / "ground_truth.json";
  std::ifstream in(path);
  if (!in) throw MissingAssetError("missing ground truth '" + path.string() + "'");
  try {
    const auto doc = nlohmann::json::parse(in);
    return doc.at("mass_kg").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("ground truth '" + path.string() + "': " + e.what());
  }
}

Report evaluate_dataset(const std::filesystem::path& root,
                        const std::function<double(const std::filesystem::path&)>& predict,
                        const std::vector<std::string>& subset) {
  if (!std::filesystem::is_directory(root)) throw MissingAssetError("dataset root '" + root.string() + "' not found");
  std::vector<std::string> ids = subset;
  if (ids.empty()) {
    for (const auto& entry : std::filesystem::directory_iterator(root))
      if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw ValidationError("dataset '" + root.string() + "' contains no objects");
  Report report;
  for (const auto& id : ids) {
    try {
      const auto dir = root / id;
      if (!std::filesystem::is_directory(dir)) throw MissingAssetError("object directory '" + id + "' not found");
      const double y = load_ground_truth(dir);
      const double m = predict(dir);
      report.rows.push_back({id, m, y, metrics(m, y)});
    } catch (const std::exception& e) {
      report.failures.push_back({id, e.what()});
    }
  }
  if (!report.rows.empty()) report.aggregate = aggregate(report.rows);
  return report;
}

}  // namespace pugs::eval
