#pragma once

#include "pugs/core/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pugs::eval {

struct Metrics {
  double ade = 0.0;   // |m - y|
  double alde = 0.0;  // |ln m - ln y|
  double ape = 0.0;   // |m - y| / y
  double mnre = 1.0;  // min(m / y, y / m)

  nlohmann::json to_json() const;
};

/// Requires m > 0 and y > 0.
Metrics metrics(double predicted, double ground_truth);

struct ObjectRow {
  std::string id;
  double predicted = 0.0;
  double ground_truth = 0.0;
  Metrics metrics;
};

struct ObjectFailure {
  std::string id;
  std::string error;
};

struct Aggregate {
  Metrics mean;
  Metrics median;
};

struct Report {
  std::vector<ObjectRow> rows;
  std::vector<ObjectFailure> failures;
  /// Over successful rows only; absent when every object failed.
  std::optional<Aggregate> aggregate;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json(bool paper_reference = false) const;
  std::string to_csv(bool paper_reference = false) const;
};

Aggregate aggregate(const std::vector<ObjectRow>& rows);

/// Published mass-estimation results on the ABO-500 benchmark, for side-by-side display.
struct ReferenceRow {
  const char* method;
  Metrics values;
};
const std::vector<ReferenceRow>& paper_reference();

/// Ground truth {"mass_kg": number} from an object directory.
double load_ground_truth(const std::filesystem::path& object_dir);

/// Runs `predict` on every object directory under `root` (sorted by name, or the ids in `subset`), comparing
/// with ground_truth.json. Exceptions from one object become failure records.
Report evaluate_dataset(const std::filesystem::path& root,
                        const std::function<double(const std::filesystem::path&)>& predict,
                        const std::vector<std::string>& subset = {});

}  // namespace pugs::eval
