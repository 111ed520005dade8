#include "glintkit/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>

#include "glintkit/errors.h"

namespace glintkit {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

using Key = std::pair<int, int>;  // (subject, frame)

Aggregate aggregate(const std::vector<double>& per_subject) {
  Aggregate a;
  double sum = 0;
  for (double v : per_subject) sum += v;
  a.avg = sum / static_cast<double>(per_subject.size());
  a.p90 = p90(per_subject);
  std::vector<double> s = per_subject;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  a.median = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  return a;
}

double mean(const std::vector<double>& v) {
  double sum = 0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

// Per-frame quantities for one eye tube.
struct FrameScore {
  std::optional<int> group;
  std::optional<double> accuracy;
  std::optional<Vec3> direction;  // predicted, for precision
  std::optional<double> origin;
  std::optional<double> convergence;
};

struct PrecisionStats {
  double std_deg;
  double variance_deg2;
};

// Angular dispersion about the group-mean direction, averaged over groups
// holding at least two frames.
std::optional<PrecisionStats> precision(const std::vector<FrameScore>& frames) {
  std::map<int, std::vector<Vec3>> groups;
  for (const auto& f : frames) {
    if (!f.direction) continue;
    if (!f.group) return std::nullopt;
    groups[*f.group].push_back(*f.direction);
  }
  std::vector<double> stds, vars;
  for (const auto& [id, dirs] : groups) {
    if (dirs.size() < 2) continue;
    Vec3 m = Vec3::Zero();
    for (const auto& d : dirs) m += d;
    m.normalize();
    double ss = 0;
    for (const auto& d : dirs) {
      const double a = std::atan2(d.cross(m).norm(), d.dot(m)) * kRadToDeg;
      ss += a * a;
    }
    const double var = ss / static_cast<double>(dirs.size() - 1);
    vars.push_back(var);
    stds.push_back(std::sqrt(var));
  }
  if (stds.empty()) return std::nullopt;
  return PrecisionStats{mean(stds), mean(vars)};
}

MetricRow score_tube(EyeTube tube, const std::map<int, std::vector<FrameScore>>& by_subject) {
  MetricRow row;
  row.tube = tube;
  std::vector<double> acc, prec, var, orig, conv;
  for (const auto& [subject, frames] : by_subject) {
    std::vector<double> a, o, c;
    for (const auto& f : frames) {
      if (f.accuracy) a.push_back(*f.accuracy);
      if (f.origin) o.push_back(*f.origin);
      if (f.convergence) c.push_back(*f.convergence);
    }
    if (a.empty() && o.empty() && c.empty()) continue;
    ++row.subjects;
    row.frames += static_cast<int>(a.size());
    if (!a.empty()) acc.push_back(mean(a));
    if (!o.empty()) orig.push_back(mean(o));
    if (!c.empty()) conv.push_back(mean(c));
    if (const auto p = precision(frames)) {
      prec.push_back(p->std_deg);
      var.push_back(p->variance_deg2);
    }
  }
  if (!acc.empty()) row.accuracy_deg = aggregate(acc);
  if (!prec.empty()) {
    row.precision_deg = aggregate(prec);
    row.precision_variance_deg2 = aggregate(var);
  }
  if (!orig.empty()) row.origin_mm = aggregate(orig);
  if (!conv.empty()) row.convergence_d = aggregate(conv);
  return row;
}

}  // namespace

std::string_view to_string(EyeTube tube) {
  switch (tube) {
    case EyeTube::kLeft:
      return "L";
    case EyeTube::kRight:
      return "R";
    case EyeTube::kCombined:
      return "C";
  }
  return "?";
}

const MetricRow& EvaluationReport::row(EyeTube tube) const {
  for (const auto& r : rows) {
    if (r.tube == tube) return r;
  }
  throw DomainError("report has no row for eye " + std::string(to_string(tube)));
}

double angular_error(const Vec3& g, const Vec3& g_hat) {
  if (std::abs(g.norm() - 1.0) > 1e-6 || std::abs(g_hat.norm() - 1.0) > 1e-6) {
    throw DomainError("angular_error expects unit vectors");
  }
  const double c = std::clamp(g.dot(g_hat), -1.0, 1.0);
  // atan2 form of arccos(c); stable for nearly parallel vectors.
  return std::atan2(g.cross(g_hat).norm(), c) * kRadToDeg;
}

double p90(std::span<const double> values) {
  if (values.empty()) throw DomainError("P90 of an empty list");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const std::size_t rank = (9 * n + 9) / 10;  // ceil(0.9 n), 1-based
  return s[rank - 1];
}

EvaluationReport evaluate_report(std::span<const GazePrediction> predictions,
                                 std::span<const SessionRecord> ground_truth,
                                 const std::string& camera_setup) {
  std::map<Key, const SessionRecord*> truth;
  for (const auto& r : ground_truth) {
    if (!r.truth) {
      throw AlignmentError("ground-truth record without a truth block (subject " +
                           std::to_string(r.subject) + ", frame " +
                           std::to_string(r.frame) + ")");
    }
    if (!truth.emplace(Key{r.subject, r.frame}, &r).second) {
      throw AlignmentError("duplicate ground-truth record");
    }
  }
  std::map<Key, const GazePrediction*> preds;
  for (const auto& p : predictions) {
    if (!preds.emplace(Key{p.subject, p.frame}, &p).second) {
      throw AlignmentError("duplicate prediction record");
    }
    if (!truth.count({p.subject, p.frame})) {
      throw AlignmentError("prediction without ground truth (subject " +
                           std::to_string(p.subject) + ", frame " +
                           std::to_string(p.frame) + ")");
    }
  }
  if (preds.size() != truth.size()) {
    throw AlignmentError("ground-truth records without predictions");
  }

  std::map<int, std::vector<FrameScore>> left, right, combined;
  for (const auto& [key, pred] : preds) {
    const GroundTruth& gt = *truth.at(key)->truth;
    auto per_eye = [&](const std::optional<GazeRay>& ray, const EyeTruth& eye) {
      FrameScore s;
      s.group = pred->group;
      if (ray) {
        s.accuracy = angular_error(eye.visual.direction, ray->direction);
        s.direction = ray->direction;
        s.origin = (ray->origin - eye.eye.p_c).norm();
      }
      return s;
    };
    left[key.first].push_back(per_eye(pred->left, gt.left));
    right[key.first].push_back(per_eye(pred->right, gt.right));

    FrameScore c;
    c.group = pred->group;
    if (pred->left && pred->right) {
      const Vec3 mid_hat = (pred->left->origin + pred->right->origin) / 2.0;
      const Vec3 mid = (gt.left.eye.p_c + gt.right.eye.p_c) / 2.0;
      c.origin = (mid_hat - mid).norm();
      try {
        const Vec3 fix = fixation_point(*pred->left, *pred->right, gt.target.z());
        const Vec3 dir = (fix - mid_hat).normalized();
        c.accuracy = angular_error((gt.target - mid).normalized(), dir);
        c.direction = dir;
      } catch (const Error&) {
      }
      try {
        const Vec3 fix = pred->fixation ? *pred->fixation
                                        : triangulate_fixation(*pred->left, *pred->right);
        const double d_hat = (mid_hat - fix).norm();
        if (d_hat > 0) c.convergence = diopter_error(gt.convergence, d_hat);
      } catch (const Error&) {
      }
    }
    combined[key.first].push_back(c);
  }

  EvaluationReport report;
  report.camera_setup = camera_setup;
  report.rows.push_back(score_tube(EyeTube::kLeft, left));
  report.rows.push_back(score_tube(EyeTube::kRight, right));
  report.rows.push_back(score_tube(EyeTube::kCombined, combined));
  return report;
}

std::string report_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << "camera,eye,stat,accuracy_deg,precision_deg,origin_mm,convergence_d\n";
  auto cell = [&](const std::optional<Aggregate>& a, bool p90_stat) {
    if (!a) {
      os << ",NA";
    } else {
      os << ',' << (p90_stat ? a->p90 : a->avg);
    }
  };
  for (const auto& row : report.rows) {
    for (bool p90_stat : {false, true}) {
      os << report.camera_setup << ',' << to_string(row.tube) << ','
         << (p90_stat ? "P90" : "Avg");
      cell(row.accuracy_deg, p90_stat);
      cell(row.precision_deg, p90_stat);
      cell(row.origin_mm, p90_stat);
      cell(row.convergence_d, p90_stat);
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace glintkit
