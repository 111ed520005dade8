#pragma once

// Gaze evaluation: accuracy / precision / origin / convergence with
// subject-level average and P90 aggregation.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glintkit/eye.h"
#include "glintkit/scene.h"

namespace glintkit {

struct GazePrediction {
  int subject = 0;
  int frame = 0;
  std::optional<int> group;       // fixation group; needed for precision
  std::optional<GazeRay> left;    // visual axis, origin = gaze origin
  std::optional<GazeRay> right;
  std::optional<Vec3> fixation;   // binocular estimate; triangulated if empty
};

enum class EyeTube { kLeft, kRight, kCombined };

std::string_view to_string(EyeTube tube);  // "L", "R", "C"

struct Aggregate {
  double avg = 0;
  double p90 = 0;
  double median = 0;
};

/// One table row. Cells are empty when the metric does not apply or has
/// no data (e.g. convergence for a single eye).
struct MetricRow {
  EyeTube tube = EyeTube::kLeft;
  std::optional<Aggregate> accuracy_deg;
  std::optional<Aggregate> precision_deg;
  std::optional<Aggregate> precision_variance_deg2;
  std::optional<Aggregate> origin_mm;
  std::optional<Aggregate> convergence_d;
  int subjects = 0;
  int frames = 0;
};

struct EvaluationReport {
  std::string camera_setup;
  std::vector<MetricRow> rows;  // L, R, C

  const MetricRow& row(EyeTube tube) const;
};

/// Angle between two unit vectors in degrees. Throws DomainError when
/// either input deviates from unit norm by more than 1e-6.
double angular_error(const Vec3& g, const Vec3& g_hat);

/// Nearest-rank 90th percentile: the ceil(0.9 n)-th smallest value.
double p90(std::span<const double> values);

/// Scores predictions against ground-truth records with matching
/// (subject, frame) keys. Both sets must contain the same keys.
EvaluationReport evaluate_report(std::span<const GazePrediction> predictions,
                                 std::span<const SessionRecord> ground_truth,
                                 const std::string& camera_setup = "Bino");

/// Comma-delimited table, one line per (eye, statistic), columns
/// accuracy/precision/origin/convergence.
std::string report_csv(const EvaluationReport& report);

}  // namespace glintkit
