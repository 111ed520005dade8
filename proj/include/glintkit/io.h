#pragma once

// File formats.
//
//   rig file         JSON document; generic cameras reference a binary
//                    ray-grid payload (row-major nodes, 6 little-endian
//                    float64 per node: origin xyz then direction xyz).
//   session file     one JSON record per line (observations + optional
//                    ground truth).
//   annotation file  one JSON record per line (per-eye estimates).
//   kappa file       JSON document, per subject and eye.
//   report           CSV table plus a JSON record.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glintkit/glint.h"
#include "glintkit/metrics.h"
#include "glintkit/scene.h"

namespace glintkit {

inline constexpr int kRigSchemaVersion = 1;
inline constexpr int kRecordVersion = 1;

/// Parses and validates a rig file. Ray-grid payload paths are resolved
/// relative to the rig file's directory.
Rig parse_rig(const std::filesystem::path& path);
Rig parse_rig_text(const std::string& text, const std::filesystem::path& base_dir);

/// Rig document text. Generic cameras are referenced as
/// "<payload_stem>.<side>.<view>.rays".
std::string serialize_rig(const Rig& rig, const std::string& payload_stem = "rig");

/// Writes the rig document and any ray-grid payloads next to it.
void write_rig(const Rig& rig, const std::filesystem::path& path);

std::shared_ptr<const GenericRayGrid> read_ray_grid(const std::filesystem::path& path,
                                                    int width, int height);
void write_ray_grid(const GenericRayGrid& grid, const std::filesystem::path& path);

std::string serialize_record(const SessionRecord& record);
SessionRecord parse_record(const std::string& line);

void write_session(const std::filesystem::path& path,
                   const std::vector<SessionRecord>& records);
std::vector<SessionRecord> read_session(const std::filesystem::path& path);

/// Throws ValidationError when a glint references a missing view or lies
/// outside its image.
void validate_against(const SessionRecord& record, const Rig& rig);

struct EyeAnnotation {
  bool ok = false;
  std::string error;
  Vec3 p_c = Vec3::Zero();
  double r_c = 0;
  double rms_px = 0;
  bool converged = false;
  int assigned = 0;
  std::optional<EyeParams> eye;
  std::optional<GazeRay> optical;
};

struct AnnotationRecord {
  int subject = 0;
  int frame = 0;
  int group = 0;
  Split split = Split::kTest;
  EyeAnnotation left;
  EyeAnnotation right;

  const EyeAnnotation& eye(Side s) const { return s == Side::kLeft ? left : right; }
  EyeAnnotation& eye(Side s) { return s == Side::kLeft ? left : right; }
};

void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);

struct SubjectKappa {
  int subject = 0;
  std::optional<KappaFit> left;
  std::optional<KappaFit> right;
  int calibration_points = 0;

  const std::optional<KappaFit>& eye(Side s) const { return s == Side::kLeft ? left : right; }
};

void write_kappa(const std::filesystem::path& path, const std::vector<SubjectKappa>& kappas);
std::vector<SubjectKappa> read_kappa(const std::filesystem::path& path);

std::string report_json(const EvaluationReport& report);

}  // namespace glintkit
