#include "glintkit/io.h"

#include <Eigen/SVD>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "glintkit/errors.h"
#include "json.hpp"

namespace glintkit {

using json = nlohmann::ordered_json;

namespace {

constexpr double kRotationTolerance = 1e-6;

// ---------------------------------------------------------------------------
// Field access with located error messages.

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

std::string sub(const std::string& where, const char* key) {
  return where.empty() ? key : where + "." + key;
}

double number(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) fail(sub(where, key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(sub(where, key), "non-finite number");
  return x;
}

int integer(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number_integer()) fail(sub(where, key), "expected an integer");
  return v.get<int>();
}

bool boolean(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_boolean()) fail(sub(where, key), "expected true or false");
  return v.get<bool>();
}

std::string text(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) fail(sub(where, key), "expected a string");
  return v.get<std::string>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != N) {
    fail(where, "expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!v[i].is_number()) fail(where, "expected an array of numbers");
    out[i] = v[i].get<double>();
    if (!std::isfinite(out[i])) fail(where, "non-finite number");
  }
  return out;
}

Vec3 vec3(const json& obj, const char* key, const std::string& where) {
  return vec<3>(field(obj, key, where), sub(where, key));
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

// Converts a byte offset reported by the JSON parser into a line number.
std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << where << " line " << line_of(text, e.byte > 0 ? e.byte - 1 : 0)
       << ": malformed JSON (" << e.what() << ")";
    throw ParseError(os.str());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<std::pair<std::size_t, std::string>> read_lines(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.emplace_back(n, line);
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Rig.

Pose parse_pose(const json& cam, const std::string& where) {
  const json& r = field(cam, "R", where);
  if (!r.is_array() || r.size() != 3) fail(sub(where, "R"), "expected a 3x3 array");
  Pose pose;
  for (int i = 0; i < 3; ++i) {
    pose.R.row(i) = vec<3>(r[i], sub(where, "R") + "[" + std::to_string(i) + "]").transpose();
  }
  pose.T = vec3(cam, "T", where);
  try {
    pose.validate(kRotationTolerance);
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  const double dev = (pose.R * pose.R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (dev > 1e-9) {
    // Snap to the nearest rotation.
    Eigen::JacobiSVD<Mat3> svd(pose.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    pose.R = svd.matrixU() * svd.matrixV().transpose();
  }
  return pose;
}

json pose_json(const Pose& pose, json cam) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back(to_json(Vec3(pose.R.row(i).transpose())));
  cam["R"] = r;
  cam["T"] = to_json(pose.T);
  return cam;
}

CameraModel parse_camera(const json& cam, const std::string& where,
                         const std::filesystem::path& base_dir) {
  const std::string model = text(cam, "model", where);
  const int width = integer(cam, "width", where);
  const int height = integer(cam, "height", where);
  const Pose pose = parse_pose(cam, where);
  try {
    if (model == "pinhole") {
      CentralIntrinsics k;
      k.width = width;
      k.height = height;
      k.fx = number(cam, "fx", where);
      k.fy = number(cam, "fy", where);
      k.cx = number(cam, "cx", where);
      k.cy = number(cam, "cy", where);
      return CameraModel(k, pose);
    }
    if (model == "generic") {
      const auto payload = base_dir / text(cam, "rays", where);
      return CameraModel(read_ray_grid(payload, width, height), pose);
    }
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  fail(sub(where, "model"), "unknown camera model '" + model + "'");
}

RigSide parse_side(const json& doc, const char* name, const std::filesystem::path& base_dir) {
  const json& s = field(doc, name, "");
  RigSide side;
  const json& cams = field(s, "cameras", name);
  if (!cams.is_array()) fail(sub(name, "cameras"), "expected an array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    side.cameras.push_back(parse_camera(
        cams[i], std::string(name) + ".cameras[" + std::to_string(i) + "]", base_dir));
  }
  const json& leds = field(s, "leds", name);
  if (!leds.is_array()) fail(sub(name, "leds"), "expected an array");
  for (std::size_t i = 0; i < leds.size(); ++i) {
    const std::string where = std::string(name) + ".leds[" + std::to_string(i) + "]";
    side.leds.push_back({integer(leds[i], "id", where), vec3(leds[i], "position", where)});
  }
  try {
    side.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  }
  return side;
}

std::string payload_name(const std::string& stem, Side side, std::size_t view) {
  return stem + "." + std::string(to_string(side)) + "." + std::to_string(view) + ".rays";
}

json side_json(const RigSide& side, Side which, const std::string& stem) {
  json cams = json::array();
  for (std::size_t v = 0; v < side.cameras.size(); ++v) {
    const auto& cam = side.cameras[v];
    json c;
    if (cam.is_central()) {
      const auto& k = cam.central();
      c["model"] = "pinhole";
      c["width"] = k.width;
      c["height"] = k.height;
      c["fx"] = k.fx;
      c["fy"] = k.fy;
      c["cx"] = k.cx;
      c["cy"] = k.cy;
    } else {
      c["model"] = "generic";
      c["width"] = cam.width();
      c["height"] = cam.height();
      c["rays"] = payload_name(stem, which, v);
    }
    cams.push_back(pose_json(cam.pose(), c));
  }
  json leds = json::array();
  for (const auto& led : side.leds) {
    json l;
    l["id"] = led.id;
    l["position"] = to_json(led.position);
    leds.push_back(l);
  }
  json out;
  out["cameras"] = cams;
  out["leds"] = leds;
  return out;
}

// ---------------------------------------------------------------------------
// Records.

const char* split_name(Split s) { return s == Split::kCalibration ? "calib" : "test"; }

Split parse_split(const json& obj, const std::string& where) {
  const std::string s = text(obj, "split", where);
  if (s == "calib") return Split::kCalibration;
  if (s == "test") return Split::kTest;
  fail(sub(where, "split"), "expected \"calib\" or \"test\"");
}

json eye_json(const EyeParams& e) {
  json j;
  j["p_e"] = to_json(e.p_e);
  j["r_e"] = e.r_e;
  j["p_c"] = to_json(e.p_c);
  j["r_c"] = e.r_c;
  j["p_p"] = to_json(e.p_p);
  j["r_p"] = e.r_p;
  return j;
}

EyeParams parse_eye(const json& j, const std::string& where) {
  EyeParams e;
  e.p_e = vec3(j, "p_e", where);
  e.r_e = number(j, "r_e", where);
  e.p_c = vec3(j, "p_c", where);
  e.r_c = number(j, "r_c", where);
  e.p_p = vec3(j, "p_p", where);
  e.r_p = number(j, "r_p", where);
  if (!(e.r_e > 0) || !(e.r_c > 0) || !(e.r_p > 0)) {
    throw ValidationError(where + ": eye radii must be positive");
  }
  if (!((e.p_c - e.p_e).norm() > 0)) {
    throw ValidationError(where + ": eyeball and corneal centres coincide");
  }
  const Vec3 axis = (e.p_c - e.p_e).normalized();
  const Vec3 rel = e.p_p - e.p_c;
  if ((rel - rel.dot(axis) * axis).norm() > 1e-6) {
    throw ValidationError(where + ": pupil centre is off the optical axis");
  }
  return e;
}

json ray_json(const GazeRay& r) {
  json j;
  j["origin"] = to_json(r.origin);
  j["direction"] = to_json(r.direction);
  return j;
}

GazeRay parse_ray(const json& j, AxisKind kind, const std::string& where) {
  GazeRay r{vec3(j, "origin", where), vec3(j, "direction", where), kind};
  if (std::abs(r.direction.norm() - 1.0) > 1e-9) {
    throw ValidationError(where + ": gaze direction is not unit norm");
  }
  return r;
}

json glints_json(const FrameObservation& f) {
  json arr = json::array();
  for (const auto& g : f.glints) {
    json j;
    j["view"] = g.view;
    j["px"] = to_json(g.pixel);
    if (g.led_id) j["led"] = *g.led_id;
    arr.push_back(j);
  }
  return arr;
}

FrameObservation parse_glints(const json& arr, Side side, int frame, const std::string& where) {
  if (!arr.is_array()) fail(where, "expected an array of glints");
  FrameObservation f;
  f.side = side;
  f.timestamp = frame;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    GlintObservation g;
    g.view = integer(arr[i], "view", w);
    g.pixel = vec<2>(field(arr[i], "px", w), w + ".px");
    if (arr[i].contains("led")) g.led_id = integer(arr[i], "led", w);
    f.glints.push_back(g);
  }
  try {
    f.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return f;
}

json truth_eye_json(const EyeTruth& t) {
  json j;
  j["eye"] = eye_json(t.eye);
  json k;
  k["alpha_deg"] = t.kappa.alpha_deg;
  k["beta_deg"] = t.kappa.beta_deg;
  j["kappa"] = k;
  j["optical"] = ray_json(t.optical);
  j["visual"] = ray_json(t.visual);
  return j;
}

Kappa parse_kappa_angles(const json& j, Side side, const std::string& where) {
  Kappa k{number(j, "alpha_deg", where), number(j, "beta_deg", where), side};
  if (std::abs(k.alpha_deg) > 15 || std::abs(k.beta_deg) > 15) {
    throw ValidationError(where + ": kappa outside the +/-15 degree sanity bound");
  }
  return k;
}

EyeTruth parse_truth_eye(const json& j, Side side, const std::string& where) {
  EyeTruth t;
  t.eye = parse_eye(field(j, "eye", where), sub(where, "eye"));
  t.kappa = parse_kappa_angles(field(j, "kappa", where), side, sub(where, "kappa"));
  t.optical = parse_ray(field(j, "optical", where), AxisKind::kOptical, sub(where, "optical"));
  t.visual = parse_ray(field(j, "visual", where), AxisKind::kVisual, sub(where, "visual"));
  return t;
}

void check_version(const json& j, const std::string& where) {
  const int v = integer(j, "v", where);
  if (v != kRecordVersion) {
    throw VersionError(where + ": record version " + std::to_string(v) +
                       ", this build reads version " + std::to_string(kRecordVersion));
  }
}

SessionRecord record_from_json(const json& j, const std::string& where) {
  check_version(j, where);
  SessionRecord r;
  r.subject = integer(j, "subject", where);
  r.frame = integer(j, "frame", where);
  r.group = integer(j, "group", where);
  r.split = parse_split(j, where);
  const json& obs = field(j, "obs", where);
  r.left = parse_glints(field(obs, "left", sub(where, "obs")), Side::kLeft, r.frame,
                        where + ".obs.left");
  r.right = parse_glints(field(obs, "right", sub(where, "obs")), Side::kRight, r.frame,
                         where + ".obs.right");
  if (j.contains("gt")) {
    const json& g = j["gt"];
    const std::string w = sub(where, "gt");
    GroundTruth gt;
    gt.target = vec3(g, "target", w);
    gt.convergence = number(g, "convergence", w);
    gt.left = parse_truth_eye(field(g, "left", w), Side::kLeft, sub(w, "left"));
    gt.right = parse_truth_eye(field(g, "right", w), Side::kRight, sub(w, "right"));
    r.truth = gt;
  }
  return r;
}

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::vector<T> out;
  for (const auto& [n, line] : read_lines(path)) {
    const std::string where = path.filename().string() + " line " + std::to_string(n);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": malformed or truncated record (" + e.what() + ")");
    }
    out.push_back(parse(j, where));
  }
  return out;
}

json eye_annotation_json(const EyeAnnotation& a) {
  json j;
  j["ok"] = a.ok;
  if (!a.ok) {
    j["error"] = a.error;
    return j;
  }
  j["p_c"] = to_json(a.p_c);
  j["r_c"] = a.r_c;
  j["rms_px"] = a.rms_px;
  j["converged"] = a.converged;
  j["assigned"] = a.assigned;
  if (a.eye) j["eye"] = eye_json(*a.eye);
  if (a.optical) j["optical"] = ray_json(*a.optical);
  return j;
}

EyeAnnotation parse_eye_annotation(const json& j, const std::string& where) {
  EyeAnnotation a;
  a.ok = boolean(j, "ok", where);
  if (!a.ok) {
    if (j.contains("error")) a.error = text(j, "error", where);
    return a;
  }
  a.p_c = vec3(j, "p_c", where);
  a.r_c = number(j, "r_c", where);
  if (!(a.r_c > 0)) throw ValidationError(where + ": corneal radius must be positive");
  a.rms_px = number(j, "rms_px", where);
  if (!(a.rms_px >= 0)) throw ValidationError(where + ": negative residual");
  a.converged = boolean(j, "converged", where);
  a.assigned = integer(j, "assigned", where);
  if (j.contains("eye")) a.eye = parse_eye(j["eye"], sub(where, "eye"));
  if (j.contains("optical")) {
    a.optical = parse_ray(j["optical"], AxisKind::kOptical, sub(where, "optical"));
  }
  return a;
}

json aggregate_json(const std::optional<Aggregate>& a) {
  if (!a) return nullptr;
  json j;
  j["avg"] = a->avg;
  j["p90"] = a->p90;
  j["median"] = a->median;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

Rig parse_rig_text(const std::string& content, const std::filesystem::path& base_dir) {
  const json doc = parse_json(content, "rig file");
  const int version = integer(doc, "schema_version", "");
  if (version != kRigSchemaVersion) {
    throw VersionError("rig schema version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kRigSchemaVersion));
  }
  text(doc, "frame", "");
  Rig rig;
  rig.left = parse_side(doc, "left", base_dir);
  rig.right = parse_side(doc, "right", base_dir);
  return rig;
}

Rig parse_rig(const std::filesystem::path& path) {
  return parse_rig_text(read_file(path), path.parent_path());
}

std::string serialize_rig(const Rig& rig, const std::string& payload_stem) {
  json doc;
  doc["schema_version"] = kRigSchemaVersion;
  doc["frame"] = "device: right-handed, +X right, +Y up, +Z toward the scene, mm";
  doc["left"] = side_json(rig.left, Side::kLeft, payload_stem);
  doc["right"] = side_json(rig.right, Side::kRight, payload_stem);
  return doc.dump(2) + "\n";
}

void write_rig(const Rig& rig, const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  write_file(path, serialize_rig(rig, stem));
  for (Side s : {Side::kLeft, Side::kRight}) {
    const auto& side = rig.side(s);
    for (std::size_t v = 0; v < side.cameras.size(); ++v) {
      if (!side.cameras[v].is_central()) {
        write_ray_grid(side.cameras[v].grid(), path.parent_path() / payload_name(stem, s, v));
      }
    }
  }
}

namespace {

void to_little_endian(unsigned char* bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + 8);
  }
}

}  // namespace

std::shared_ptr<const GenericRayGrid> read_ray_grid(const std::filesystem::path& path,
                                                    int width, int height) {
  if (width < 2 || height < 2) throw ValidationError("ray grid needs at least 2x2 nodes");
  const std::string bytes = read_file(path);
  const std::size_t nodes = static_cast<std::size_t>(width) * height;
  if (bytes.size() != nodes * 6 * sizeof(double)) {
    throw ValidationError("ray-grid payload " + path.string() + " has " +
                          std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(nodes * 6 * sizeof(double)) + " for " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  std::vector<Vec3> origins(nodes), directions(nodes);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto next = [&p]() {
    unsigned char b[8];
    std::memcpy(b, p, 8);
    to_little_endian(b);
    p += 8;
    double d;
    std::memcpy(&d, b, 8);
    return d;
  };
  for (std::size_t i = 0; i < nodes; ++i) {
    for (int k = 0; k < 3; ++k) origins[i][k] = next();
    for (int k = 0; k < 3; ++k) directions[i][k] = next();
  }
  return std::make_shared<const GenericRayGrid>(width, height, std::move(origins),
                                                std::move(directions));
}

void write_ray_grid(const GenericRayGrid& grid, const std::filesystem::path& path) {
  std::string bytes;
  bytes.reserve(grid.origins().size() * 48);
  auto put = [&bytes](double d) {
    unsigned char b[8];
    std::memcpy(b, &d, 8);
    to_little_endian(b);
    bytes.append(reinterpret_cast<const char*>(b), 8);
  };
  for (std::size_t i = 0; i < grid.origins().size(); ++i) {
    for (int k = 0; k < 3; ++k) put(grid.origins()[i][k]);
    for (int k = 0; k < 3; ++k) put(grid.directions()[i][k]);
  }
  write_file(path, bytes);
}

std::string serialize_record(const SessionRecord& r) {
  json j;
  j["v"] = kRecordVersion;
  j["subject"] = r.subject;
  j["frame"] = r.frame;
  j["group"] = r.group;
  j["split"] = split_name(r.split);
  json obs;
  obs["left"] = glints_json(r.left);
  obs["right"] = glints_json(r.right);
  j["obs"] = obs;
  if (r.truth) {
    json g;
    g["target"] = to_json(r.truth->target);
    g["convergence"] = r.truth->convergence;
    g["left"] = truth_eye_json(r.truth->left);
    g["right"] = truth_eye_json(r.truth->right);
    j["gt"] = g;
  }
  return j.dump();
}

SessionRecord parse_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed or truncated record (") + e.what() + ")");
  }
  return record_from_json(j, "record");
}

void write_session(const std::filesystem::path& path,
                   const std::vector<SessionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  write_file(path, out);
}

std::vector<SessionRecord> read_session(const std::filesystem::path& path) {
  return read_jsonl<SessionRecord>(path, record_from_json);
}

void validate_against(const SessionRecord& record, const Rig& rig) {
  for (Side s : {Side::kLeft, Side::kRight}) {
    const auto& side = rig.side(s);
    for (const auto& g : record.observation(s).glints) {
      if (g.view < 0 || g.view >= static_cast<int>(side.cameras.size())) {
        throw ValidationError("frame " + std::to_string(record.frame) +
                              ": glint references missing " + std::string(to_string(s)) +
                              " view " + std::to_string(g.view));
      }
      if (!side.cameras[g.view].in_domain(g.pixel)) {
        throw ValidationError("frame " + std::to_string(record.frame) +
                              ": glint outside the image of " + std::string(to_string(s)) +
                              " view " + std::to_string(g.view));
      }
      if (g.led_id && !side.find_led(*g.led_id)) {
        throw ValidationError("frame " + std::to_string(record.frame) +
                              ": glint references unknown LED " + std::to_string(*g.led_id));
      }
    }
  }
}

void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["v"] = kRecordVersion;
    j["subject"] = r.subject;
    j["frame"] = r.frame;
    j["group"] = r.group;
    j["split"] = split_name(r.split);
    j["left"] = eye_annotation_json(r.left);
    j["right"] = eye_annotation_json(r.right);
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  return read_jsonl<AnnotationRecord>(path, [](const json& j, const std::string& where) {
    check_version(j, where);
    AnnotationRecord r;
    r.subject = integer(j, "subject", where);
    r.frame = integer(j, "frame", where);
    r.group = integer(j, "group", where);
    r.split = parse_split(j, where);
    r.left = parse_eye_annotation(field(j, "left", where), sub(where, "left"));
    r.right = parse_eye_annotation(field(j, "right", where), sub(where, "right"));
    return r;
  });
}

void write_kappa(const std::filesystem::path& path, const std::vector<SubjectKappa>& kappas) {
  json doc;
  doc["v"] = kRecordVersion;
  json subjects = json::array();
  for (const auto& k : kappas) {
    json s;
    s["subject"] = k.subject;
    s["points"] = k.calibration_points;
    for (Side side : {Side::kLeft, Side::kRight}) {
      const auto& fit = k.eye(side);
      if (!fit) continue;
      json e;
      e["alpha_deg"] = fit->kappa.alpha_deg;
      e["beta_deg"] = fit->kappa.beta_deg;
      e["rms_deg"] = fit->rms_deg;
      e["iterations"] = fit->iterations;
      s[std::string(to_string(side))] = e;
    }
    subjects.push_back(s);
  }
  doc["subjects"] = subjects;
  write_file(path, doc.dump(2) + "\n");
}

std::vector<SubjectKappa> read_kappa(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  const json doc = parse_json(content, path.filename().string());
  check_version(doc, path.filename().string());
  const json& subjects = field(doc, "subjects", "");
  if (!subjects.is_array()) fail("subjects", "expected an array");
  std::vector<SubjectKappa> out;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const std::string where = "subjects[" + std::to_string(i) + "]";
    SubjectKappa k;
    k.subject = integer(subjects[i], "subject", where);
    k.calibration_points = integer(subjects[i], "points", where);
    for (Side side : {Side::kLeft, Side::kRight}) {
      const std::string name(to_string(side));
      if (!subjects[i].contains(name)) continue;
      const json& e = subjects[i][name];
      const std::string w = where + "." + name;
      KappaFit fit;
      fit.kappa = parse_kappa_angles(e, side, w);
      fit.rms_deg = number(e, "rms_deg", w);
      fit.iterations = integer(e, "iterations", w);
      (side == Side::kLeft ? k.left : k.right) = fit;
    }
    out.push_back(k);
  }
  return out;
}

std::string report_json(const EvaluationReport& report) {
  json doc;
  doc["v"] = kRecordVersion;
  doc["camera"] = report.camera_setup;
  doc["columns"] = json::array({"accuracy_deg", "precision_deg", "origin_mm", "convergence_d"});
  json rows = json::array();
  for (const auto& r : report.rows) {
    json j;
    j["eye"] = std::string(to_string(r.tube));
    j["subjects"] = r.subjects;
    j["frames"] = r.frames;
    j["accuracy_deg"] = aggregate_json(r.accuracy_deg);
    j["precision_deg"] = aggregate_json(r.precision_deg);
    j["precision_variance_deg2"] = aggregate_json(r.precision_variance_deg2);
    j["origin_mm"] = aggregate_json(r.origin_mm);
    j["convergence_d"] = aggregate_json(r.convergence_d);
    rows.push_back(j);
  }
  doc["rows"] = rows;
  return doc.dump(2) + "\n";
}

}  // namespace glintkit
