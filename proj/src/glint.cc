#include "glintkit/glint.h"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "glintkit/errors.h"
#include "glintkit/hungarian.h"

namespace glintkit {

namespace {

constexpr double kResidualLimitRad = 1e-9;
constexpr double kOpenGate = std::numeric_limits<double>::infinity();
constexpr double kUnmatchedPenaltyPx2 = 1e4;
constexpr double kRmsConverged = 1e-8;  // px

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

// Specular point for a central camera at `eye_point`. The reflection lies in
// the plane through the sphere centre, camera and LED; the surface normal
// is swept from the camera direction toward the LED direction until it
// bisects the two unit directions.
std::optional<Vec3> specular_point_central(const Vec3& center, double radius,
                                           const Vec3& eye_point,
                                           const Vec3& led) {
  const Vec3 av = eye_point - center;
  const Vec3 bv = led - center;
  const double dc = av.norm();
  const double dl = bv.norm();
  if (!(dc > radius)) throw GeometryError("camera centre inside the corneal sphere");
  if (!(dl > radius)) throw GeometryError("LED inside the corneal sphere");

  const Vec3 a = av / dc;
  const Vec3 b = bv / dl;
  const double cos_g = a.dot(b);
  Vec3 e2 = b - cos_g * a;
  const double sin_g = e2.norm();

  Vec3 n;
  if (sin_g < 1e-14) {
    if (cos_g < 0) return std::nullopt;
    n = a;
  } else {
    e2 /= sin_g;
    const double gamma = std::atan2(sin_g, cos_g);
    const Vec2 cam2(dc, 0.0);
    const Vec2 led2(dl * cos_g, dl * sin_g);
    auto bisector_offset = [&](double phi) {
      const Vec2 nn(std::cos(phi), std::sin(phi));
      const Vec2 p = radius * nn;
      const Vec2 sum = (cam2 - p).normalized() + (led2 - p).normalized();
      return nn.x() * sum.y() - nn.y() * sum.x();
    };
    const double f_lo = bisector_offset(0.0);
    const double f_hi = bisector_offset(gamma);
    double phi;
    if (f_lo == 0) {
      phi = 0;
    } else if (f_hi == 0) {
      phi = gamma;
    } else if (f_lo > 0 && f_hi < 0) {
      std::uintmax_t max_iter = 200;
      const auto bracket = boost::math::tools::toms748_solve(
          bisector_offset, 0.0, gamma, f_lo, f_hi,
          boost::math::tools::eps_tolerance<double>(
              std::numeric_limits<double>::digits - 1),
          max_iter);
      phi = 0.5 * (bracket.first + bracket.second);
    } else {
      return std::nullopt;
    }
    n = std::cos(phi) * a + std::sin(phi) * e2;
  }

  const Vec3 p = center + radius * n;
  if (!(n.dot(eye_point - p) > 0) || !(n.dot(led - p) > 0)) return std::nullopt;
  return p;
}

double central_residual(const Vec3& center, const Vec3& p, const Vec3& eye_point,
                        const Vec3& led) {
  const Vec3 n = (p - center).normalized();
  return angle_between(reflect((p - led).normalized(), n), (eye_point - p).normalized());
}

std::optional<GlintSolution> simulate_glint_central(const Cornea& cornea,
                                                    const Led& led,
                                                    const CameraModel& cam) {
  const Vec3& eye_point = cam.pose().T;
  const auto p = specular_point_central(cornea.center, cornea.radius, eye_point,
                                        led.position);
  if (!p) return std::nullopt;
  if (central_residual(cornea.center, *p, eye_point, led.position) > kResidualLimitRad) {
    return std::nullopt;
  }
  try {
    return GlintSolution{*p, project(cam, *p).pixel};
  } catch (const ProjectionError&) {
    return std::nullopt;
  }
}

// Non-central camera: seed by repeatedly solving the central problem with
// the camera centre replaced by the origin of the ray through the current
// specular point, then minimize the 2D angular residual over the sphere.
std::optional<GlintSolution> simulate_glint_generic(const Cornea& cornea,
                                                    const Led& led,
                                                    const CameraModel& cam) {
  const Vec3& c = cornea.center;
  const double r = cornea.radius;
  Vec3 eye_point = cam.pose().T;
  if (!((led.position - c).norm() > r)) throw GeometryError("LED inside the corneal sphere");
  if (!((eye_point - c).norm() > r)) throw GeometryError("camera centre inside the corneal sphere");

  std::optional<Vec2> hint;
  Vec3 p;
  try {
    for (int k = 0; k < 8; ++k) {
      const auto sp = specular_point_central(c, r, eye_point, led.position);
      if (!sp) return std::nullopt;
      p = *sp;
      hint = project(cam, p, hint).pixel;
      const Ray ray = unproject(cam, *hint);
      if (!((p - ray.origin).dot(ray.direction) > 0)) return std::nullopt;
      if (!((ray.origin - c).norm() > r)) return std::nullopt;
      const double moved = (ray.origin - eye_point).norm();
      eye_point = ray.origin;
      if (moved < 1e-12) break;
    }
  } catch (const Error&) {
    return std::nullopt;
  }

  // Residual: reflected LED ray plus the camera ray direction (zero when
  // the reflection leaves along the pixel ray toward the camera).
  const Vec3 n0 = (p - c).normalized();
  const Vec3 helper = std::abs(n0.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t1 = n0.cross(helper).normalized();
  const Vec3 t2 = n0.cross(t1);
  struct Eval {
    Vec3 residual;
    Vec3 point;
    Vec2 pixel;
    Vec3 normal;
    Vec3 ray_dir;
  };
  auto evaluate = [&](const Vec2& st) -> std::optional<Eval> {
    const Vec3 n = (n0 + st.x() * t1 + st.y() * t2).normalized();
    const Vec3 q = c + r * n;
    try {
      const Vec2 px = project(cam, q, hint).pixel;
      const Ray ray = unproject(cam, px);
      return Eval{reflect((q - led.position).normalized(), n) + ray.direction, q, px,
                  n, ray.direction};
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  Vec2 st(0, 0);
  auto cur = evaluate(st);
  if (!cur) return std::nullopt;
  for (int it = 0; it < 20 && cur->residual.norm() > 1e-14; ++it) {
    constexpr double h = 1e-7;
    Eigen::Matrix<double, 3, 2> J;
    bool ok = true;
    for (int k = 0; k < 2 && ok; ++k) {
      Vec2 sp = st;
      sp[k] += h;
      const auto e = evaluate(sp);
      if (!e) {
        ok = false;
        break;
      }
      J.col(k) = (e->residual - cur->residual) / h;
    }
    if (!ok) break;
    const Vec2 step =
        -(J.transpose() * J).ldlt().solve(J.transpose() * cur->residual);
    if (!step.allFinite()) break;
    const auto cand = evaluate(st + step);
    if (!cand || cand->residual.norm() >= cur->residual.norm()) break;
    st += step;
    cur = cand;
    if (step.norm() < 1e-16) break;
  }

  const double residual = angle_between(
      reflect((cur->point - led.position).normalized(), cur->normal), -cur->ray_dir);
  if (residual > kResidualLimitRad) return std::nullopt;
  if (!(cur->normal.dot(-cur->ray_dir) > 0) ||
      !(cur->normal.dot(led.position - cur->point) > 0)) {
    return std::nullopt;
  }
  return GlintSolution{cur->point, cur->pixel};
}

}  // namespace

void RigSide::validate() const {
  if (cameras.empty()) throw ValidationError("rig side has no cameras");
  std::set<int> ids;
  for (const auto& led : leds) {
    if (!ids.insert(led.id).second) {
      throw ValidationError("duplicate LED id " + std::to_string(led.id));
    }
    if (!led.position.allFinite()) throw ValidationError("non-finite LED position");
  }
}

const Led* RigSide::find_led(int id) const {
  for (const auto& led : leds) {
    if (led.id == id) return &led;
  }
  return nullptr;
}

void Rig::validate() const {
  left.validate();
  right.validate();
}

void FrameObservation::validate() const {
  std::set<std::pair<int, int>> seen;
  for (const auto& g : glints) {
    if (g.led_id && !seen.insert({g.view, *g.led_id}).second) {
      throw ValidationError("repeated glint for view " + std::to_string(g.view) +
                            ", LED " + std::to_string(*g.led_id));
    }
  }
}

Vec3 reflect(const Vec3& d_in, const Vec3& n) { return d_in - 2.0 * d_in.dot(n) * n; }

std::optional<GlintSolution> simulate_glint(const Cornea& cornea, const Led& led,
                                            const CameraModel& cam) {
  if (!(cornea.radius > 0)) throw GeometryError("corneal radius must be positive");
  return cam.is_central() ? simulate_glint_central(cornea, led, cam)
                          : simulate_glint_generic(cornea, led, cam);
}

double reflection_residual(const Cornea& cornea, const Led& led,
                           const CameraModel& cam, const GlintSolution& sol) {
  const Vec3 n = (sol.specular_point - cornea.center).normalized();
  const Vec3 toward_camera = -unproject(cam, sol.pixel).direction;
  return angle_between(reflect((sol.specular_point - led.position).normalized(), n),
                       toward_camera);
}

FrameObservation simulate_frame(const EyeParams& eye, const RigSide& rig, Side side,
                                int timestamp) {
  FrameObservation frame;
  frame.side = side;
  frame.timestamp = timestamp;
  const Cornea cornea{eye.p_c, eye.r_c};
  for (std::size_t v = 0; v < rig.cameras.size(); ++v) {
    const auto& cam = rig.cameras[v];
    for (const auto& led : rig.leds) {
      const auto sol = simulate_glint(cornea, led, cam);
      if (sol && cam.in_domain(sol->pixel)) {
        frame.glints.push_back({static_cast<int>(v), sol->pixel, led.id});
      }
    }
  }
  return frame;
}

GlintAssignment match_glints(std::span<const SimulatedGlint> simulated,
                             std::span<const Vec2> observed, double gate) {
  if (!(gate > 0)) throw DomainError("assignment gate must be positive");
  GlintAssignment out;
  out.led_for_observed.assign(observed.size(), std::nullopt);
  if (observed.empty() || simulated.empty()) return out;

  const auto rows = static_cast<Eigen::Index>(observed.size());
  const auto cols = static_cast<Eigen::Index>(simulated.size());
  Eigen::MatrixXd dist(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      dist(i, j) = (observed[i] - simulated[j].pixel).norm();
    }
  }
  // Out-of-gate pairs cost more than any complete set of in-gate pairs.
  Eigen::MatrixXd cost = dist;
  if (std::isfinite(gate)) {
    const double big = 1.0 + gate * static_cast<double>(std::min(rows, cols) + 1);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (dist(i, j) > gate) cost(i, j) = big;
      }
    }
  }
  const auto match = solve_assignment(cost);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int j = match[i];
    if (j < 0 || dist(i, j) > gate) continue;
    out.led_for_observed[i] = simulated[j].led_id;
    out.total_cost += dist(i, j);
    ++out.assigned;
  }
  return out;
}

namespace {

// Observed glints of one frame grouped by view, plus the forward model.
class CorneaProblem {
 public:
  struct Pair {
    int view;
    int glint;      // index in the frame
    int led_index;  // index in rig.leds
  };

  CorneaProblem(const FrameObservation& frame, const RigSide& rig)
      : frame_(frame), rig_(rig), by_view_(rig.cameras.size()) {
    for (std::size_t i = 0; i < frame.glints.size(); ++i) {
      const auto& g = frame.glints[i];
      if (g.view < 0 || g.view >= static_cast<int>(rig.cameras.size())) {
        throw DomainError("glint references unknown view " + std::to_string(g.view));
      }
      by_view_[g.view].push_back(static_cast<int>(i));
    }
    for (std::size_t k = 0; k < rig.leds.size(); ++k) {
      led_index_[rig.leds[k].id] = static_cast<int>(k);
    }
  }

  int glint_count() const { return static_cast<int>(frame_.glints.size()); }
  const FrameObservation& frame() const { return frame_; }
  const RigSide& rig() const { return rig_; }

  std::vector<SimulatedGlint> simulate_view(int view, const Cornea& cornea) const {
    std::vector<SimulatedGlint> out;
    const auto& cam = rig_.cameras[view];
    for (const auto& led : rig_.leds) {
      const auto sol = simulate_glint(cornea, led, cam);
      if (sol && cam.in_domain(sol->pixel)) out.push_back({sol->pixel, led.id});
    }
    return out;
  }

  struct Matching {
    std::vector<Pair> pairs;
    double cost = 0;  // squared distances plus penalties for unmatched glints
  };

  /// Throws GeometryError when the cornea swallows a camera or LED.
  Matching match(const Cornea& cornea, double gate) const {
    Matching m;
    for (std::size_t v = 0; v < by_view_.size(); ++v) {
      const auto& idx = by_view_[v];
      if (idx.empty()) continue;
      const auto sim = simulate_view(static_cast<int>(v), cornea);
      std::vector<Vec2> obs;
      obs.reserve(idx.size());
      for (int i : idx) obs.push_back(frame_.glints[i].pixel);
      const auto a = match_glints(sim, obs, gate);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (!a.led_for_observed[k]) {
          m.cost += kUnmatchedPenaltyPx2;
          continue;
        }
        const int li = led_index_.at(*a.led_for_observed[k]);
        m.pairs.push_back({static_cast<int>(v), idx[k], li});
        for (const auto& s : sim) {
          if (s.led_id == *a.led_for_observed[k]) {
            m.cost += (s.pixel - obs[k]).squaredNorm();
            break;
          }
        }
      }
    }
    return m;
  }

  /// Pixel residuals for a fixed assignment; false if any glint vanishes.
  bool residuals(const Cornea& cornea, const std::vector<Pair>& pairs,
                 Eigen::VectorXd& out) const {
    out.resize(2 * static_cast<Eigen::Index>(pairs.size()));
    if (!(cornea.radius > 0.5)) return false;
    try {
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& pr = pairs[k];
        const auto sol =
            simulate_glint(cornea, rig_.leds[pr.led_index], rig_.cameras[pr.view]);
        if (!sol) return false;
        out.segment<2>(2 * k) = sol->pixel - frame_.glints[pr.glint].pixel;
      }
    } catch (const GeometryError&) {
      return false;
    }
    return true;
  }

 private:
  const FrameObservation& frame_;
  const RigSide& rig_;
  std::vector<std::vector<int>> by_view_;
  std::map<int, int> led_index_;
};

struct StartResult {
  Eigen::VectorXd x;
  std::vector<CorneaProblem::Pair> pairs;
  double rms = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool valid = false;
};

class CorneaSolver {
 public:
  CorneaSolver(const CorneaProblem& problem, const CorneaOptions& options)
      : problem_(problem), options_(options) {}

  int parameter_count() const { return options_.fixed_radius ? 3 : 4; }

  Cornea cornea(const Eigen::VectorXd& x) const {
    return {x.head<3>(), options_.fixed_radius ? *options_.fixed_radius : x[3]};
  }

  std::optional<CorneaProblem::Matching> try_match(const Eigen::VectorXd& x,
                                                   double gate) const {
    try {
      return problem_.match(cornea(x), gate);
    } catch (const GeometryError&) {
      return std::nullopt;
    }
  }

  // Levenberg-Marquardt with the assignment recomputed at every iteration.
  StartResult run(Eigen::VectorXd x, double gate) const {
    StartResult res;
    const int np = parameter_count();
    const std::size_t min_pairs = std::max(3, (np + 1) / 2);
    double lambda = 1e-3;
    double prev_rms = std::numeric_limits<double>::infinity();
    Eigen::VectorXd r, r_new;

    for (int it = 0; it < options_.max_iterations; ++it) {
      const auto m = try_match(x, gate);
      if (!m || m->pairs.size() < min_pairs) return res;
      const auto& pairs = m->pairs;
      if (!problem_.residuals(cornea(x), pairs, r)) return res;
      const double cost = r.squaredNorm();
      const double rms = std::sqrt(cost / pairs.size());
      res.x = x;
      res.pairs = pairs;
      res.rms = rms;
      res.valid = true;
      if (std::abs(prev_rms - rms) < kRmsConverged) {
        res.converged = true;
        return res;
      }

      Eigen::MatrixXd J(r.size(), np);
      bool jac_ok = true;
      for (int k = 0; k < np && jac_ok; ++k) {
        constexpr double h = 1e-7;
        Eigen::VectorXd xh = x;
        xh[k] += h;
        jac_ok = problem_.residuals(cornea(xh), pairs, r_new);
        if (jac_ok) J.col(k) = (r_new - r) / h;
      }
      if (!jac_ok) return res;

      const Eigen::MatrixXd A = J.transpose() * J;
      const Eigen::VectorXd g = J.transpose() * r;
      bool accepted = false;
      double new_cost = cost;
      while (lambda < 1e10) {
        Eigen::MatrixXd damped = A;
        for (int k = 0; k < np; ++k) {
          damped(k, k) += lambda * std::max(A(k, k), 1e-9);
        }
        const Eigen::VectorXd step = -damped.ldlt().solve(g);
        if (step.allFinite()) {
          const Eigen::VectorXd xn = x + step;
          if (problem_.residuals(cornea(xn), pairs, r_new) &&
              (new_cost = r_new.squaredNorm()) < cost) {
            x = xn;
            lambda = std::max(lambda / 10, 1e-12);
            accepted = true;
            break;
          }
        }
        lambda *= 10;
      }
      if (!accepted) {
        // No descent direction at this assignment: stationary point.
        res.converged = true;
        return res;
      }
      prev_rms = rms;
    }
    return res;
  }

  StartResult solve_from(const Eigen::VectorXd& start) const {
    StartResult coarse = run(start, kOpenGate);
    if (!coarse.valid) return coarse;
    StartResult fine = run(coarse.x, options_.gate_px);
    return fine.valid ? fine : coarse;
  }

 private:
  const CorneaProblem& problem_;
  const CorneaOptions& options_;
};

// Seed along the mean glint ray of the first view with glints.
Vec3 default_initializer(const CorneaProblem& problem, double radius) {
  const auto& frame = problem.frame();
  const int view = frame.glints.front().view;
  Vec2 mean = Vec2::Zero();
  int n = 0;
  for (const auto& g : frame.glints) {
    if (g.view == view) {
      mean += g.pixel;
      ++n;
    }
  }
  mean /= n;
  const Ray ray = unproject(problem.rig().cameras[view], mean);
  double best = std::numeric_limits<double>::infinity();
  Vec3 seed = ray.at(30.0 + radius);
  for (double t = 5.0; t <= 80.0; t += 1.0) {
    const Vec3 c = ray.at(t + radius);
    try {
      const auto m = problem.match({c, radius}, kOpenGate);
      if (m.cost < best) {
        best = m.cost;
        seed = c;
      }
    } catch (const GeometryError&) {
    }
  }
  return seed;
}

bool better(const StartResult& a, const StartResult& b) {
  if (a.valid != b.valid) return a.valid;
  if (a.pairs.size() != b.pairs.size()) return a.pairs.size() > b.pairs.size();
  return a.rms < b.rms;
}

CorneaEstimate to_estimate(const CorneaProblem& problem, const CorneaSolver& solver,
                           const StartResult& best) {
  CorneaEstimate est;
  const Cornea c = solver.cornea(best.x);
  est.p_c = c.center;
  est.r_c = c.radius;
  est.rms_residual = best.rms;
  est.converged = best.converged;
  est.assigned = static_cast<int>(best.pairs.size());
  est.assignment.assign(problem.glint_count(), std::nullopt);
  for (const auto& p : best.pairs) {
    est.assignment[p.glint] = problem.rig().leds[p.led_index].id;
  }
  return est;
}

}  // namespace

CorneaEstimate estimate_cornea(const FrameObservation& frame, const RigSide& rig,
                               const CorneaOptions& options) {
  if (frame.glints.size() < 3) {
    throw InsufficientDataError("cornea estimation needs at least 3 glints, got " +
                                std::to_string(frame.glints.size()));
  }
  if (options.fixed_radius && !(*options.fixed_radius > 0)) {
    throw DomainError("fixed corneal radius must be positive");
  }
  const CorneaProblem problem(frame, rig);
  const CorneaSolver solver(problem, options);

  const double r0 = options.fixed_radius.value_or(options.nominal_radius);
  const Vec3 init = options.init ? *options.init : default_initializer(problem, r0);

  std::vector<Vec3> starts{init};
  if (options.multistart) {
    const double s = options.start_spread_mm;
    for (int i = -1; i <= 1; ++i) {
      for (int j = -1; j <= 1; ++j) {
        for (int k = -1; k <= 1; ++k) {
          if (i == 0 && j == 0 && k == 0) continue;
          starts.push_back(init + s * Vec3(i, j, k));
        }
      }
    }
  }

  StartResult best;
  bool any_valid = false;
  double best_rms_any = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    Eigen::VectorXd x(solver.parameter_count());
    x.head<3>() = s;
    if (!options.fixed_radius) x[3] = r0;
    const StartResult res = solver.solve_from(x);
    if (res.valid) any_valid = true;
    if (!res.valid) continue;
    if (res.rms < best_rms_any) best_rms_any = res.rms;
    if (res.converged && better(res, best)) best = res;
    // A converged, fully assigned zero-residual fit cannot be improved on.
    if (best.converged && best.rms < 1e-6 &&
        static_cast<int>(best.pairs.size()) == problem.glint_count()) {
      break;
    }
  }

  if (!any_valid) {
    throw EstimationError("no start produced a usable glint assignment", best_rms_any);
  }
  if (!best.valid) {
    std::ostringstream os;
    os << "cornea estimation did not converge from any start (best rms "
       << best_rms_any << " px)";
    throw EstimationError(os.str(), best_rms_any);
  }
  return to_estimate(problem, solver, best);
}

SphereFit fit_eyeball(std::span<const Vec3> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 4) throw FitError("sphere fit needs at least 4 points");

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(n);

  // |q|^2 = 2 q.c + k with q = p - centroid, k = r^2 - |c|^2.
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd b(n);
  double scale = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 q = points[i] - centroid;
    A.row(i) << 2 * q.x(), 2 * q.y(), 2 * q.z(), 1.0;
    b[i] = q.squaredNorm();
    scale = std::max(scale, q.norm());
  }
  if (!(scale > 0)) throw FitError("sphere fit points coincide");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-9);
  if (qr.rank() < 4) {
    throw FitError("degenerate point configuration for a sphere fit (coplanar?)");
  }
  const Eigen::VectorXd sol = qr.solve(b);
  Vec3 c = sol.head<3>();
  const double r2 = sol[3] + c.squaredNorm();
  if (!(r2 > 0)) throw FitError("algebraic sphere fit produced no real radius");
  double r = std::sqrt(r2);

  // Geometric refinement of sum (|q_i - c| - r)^2.
  for (int it = 0; it < 50; ++it) {
    Eigen::MatrixXd J(n, 4);
    Eigen::VectorXd res(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec3 d = (points[i] - centroid) - c;
      const double dn = d.norm();
      if (!(dn > 0)) throw FitError("sphere centre coincides with a data point");
      res[i] = dn - r;
      J.row(i) << -(d / dn).transpose(), -1.0;
    }
    const Eigen::VectorXd step = (J.transpose() * J).ldlt().solve(-J.transpose() * res);
    if (!step.allFinite()) throw FitError("geometric sphere refinement diverged");
    c += step.head<3>();
    r += step[3];
    if (step.norm() < 1e-14 * std::max(1.0, r)) break;
  }

  double ss = 0;
  for (const auto& p : points) {
    const double e = ((p - centroid) - c).norm() - r;
    ss += e * e;
  }
  return {c + centroid, r, std::sqrt(ss / static_cast<double>(n))};
}

namespace {

// Shared corneal radius with centres and assignments held fixed.
double refit_shared_radius(
    const std::vector<const CorneaProblem*>& problems, const std::vector<Vec3>& centers,
    const std::vector<std::vector<CorneaProblem::Pair>>& pairs, double r) {
  auto stacked = [&](double radius, Eigen::VectorXd& out) {
    std::vector<Eigen::VectorXd> parts(problems.size());
    Eigen::Index total = 0;
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (!problems[i]->residuals({centers[i], radius}, pairs[i], parts[i])) return false;
      total += parts[i].size();
    }
    out.resize(total);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.segment(at, p.size()) = p;
      at += p.size();
    }
    return true;
  };
  Eigen::VectorXd res, res_h;
  if (!stacked(r, res)) return r;
  for (int it = 0; it < 20; ++it) {
    constexpr double h = 1e-7;
    if (!stacked(r + h, res_h)) break;
    const Eigen::VectorXd J = (res_h - res) / h;
    const double jj = J.squaredNorm();
    if (!(jj > 0)) break;
    const double step = -J.dot(res) / jj;
    Eigen::VectorXd cand;
    if (!stacked(r + step, cand) || cand.squaredNorm() > res.squaredNorm()) break;
    r += step;
    res = cand;
    if (std::abs(step) < 1e-12) break;
  }
  return r;
}

std::vector<CorneaProblem::Pair> pairs_from_estimate(const FrameObservation& frame,
                                                     const RigSide& rig,
                                                     const CorneaEstimate& est) {
  std::vector<CorneaProblem::Pair> pairs;
  for (std::size_t i = 0; i < frame.glints.size(); ++i) {
    if (!est.assignment[i]) continue;
    for (std::size_t k = 0; k < rig.leds.size(); ++k) {
      if (rig.leds[k].id == *est.assignment[i]) {
        pairs.push_back({frame.glints[i].view, static_cast<int>(i), static_cast<int>(k)});
        break;
      }
    }
  }
  return pairs;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SequenceAnnotation annotate_sequence(std::span<const FrameObservation> frames,
                                     const RigSide& rig,
                                     const AnnotationOptions& options) {
  SequenceAnnotation out;
  out.frames.resize(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) out.frames[i].timestamp = frames[i].timestamp;

  auto record_failure = [&](std::size_t i, const Error& e) {
    out.frames[i].ok = false;
    out.frames[i].error = e.what();
  };

  // Stage 1a: independent per-frame estimates with free radius.
  std::vector<double> radii;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    try {
      CorneaOptions opt;
      opt.gate_px = options.gate_px;
      out.frames[i].cornea = estimate_cornea(frames[i], rig, opt);
      out.frames[i].ok = true;
      radii.push_back(out.frames[i].cornea.r_c);
    } catch (const Error& e) {
      record_failure(i, e);
    }
  }
  if (radii.empty()) {
    out.partial = true;
    out.note = "no frame produced a corneal estimate";
    return out;
  }
  double r_c = median(radii);

  // Stage 1b: alternate between centres at a shared radius and the radius.
  std::vector<CorneaProblem> problems;
  problems.reserve(frames.size());
  for (const auto& f : frames) problems.emplace_back(f, rig);

  auto solve_centers = [&]() {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (!out.frames[i].ok) continue;
      try {
        CorneaOptions opt;
        opt.gate_px = options.gate_px;
        opt.fixed_radius = r_c;
        opt.init = out.frames[i].cornea.p_c;
        opt.multistart = false;
        out.frames[i].cornea = estimate_cornea(frames[i], rig, opt);
      } catch (const Error& e) {
        record_failure(i, e);
      }
    }
  };

  for (int a = 0; a < options.alternations; ++a) {
    solve_centers();
    std::vector<const CorneaProblem*> ps;
    std::vector<Vec3> centers;
    std::vector<std::vector<CorneaProblem::Pair>> pairs;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (!out.frames[i].ok) continue;
      ps.push_back(&problems[i]);
      centers.push_back(out.frames[i].cornea.p_c);
      pairs.push_back(pairs_from_estimate(frames[i], rig, out.frames[i].cornea));
    }
    if (ps.empty()) break;
    r_c = refit_shared_radius(ps, centers, pairs, r_c);
  }
  solve_centers();
  out.r_c = r_c;

  // Stage 2: eyeball from the corneal centres.
  std::vector<Vec3> centers;
  for (const auto& f : out.frames) {
    if (f.ok) centers.push_back(f.cornea.p_c);
  }
  if (centers.size() < 4) {
    out.partial = true;
    out.note = "fewer than 4 frames with a corneal estimate; eyeball unavailable";
    return out;
  }
  SphereFit eyeball;
  try {
    eyeball = fit_eyeball(centers);
  } catch (const FitError& e) {
    out.partial = true;
    out.note = std::string("eyeball fit failed: ") + e.what();
    return out;
  }

  std::vector<Vec3> axes;
  for (const auto& c : centers) axes.push_back((c - eyeball.center).normalized());
  double spread = 0;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (std::size_t j = i + 1; j < axes.size(); ++j) {
      spread = std::max(spread, angle_between(axes[i], axes[j]));
    }
  }
  if (spread * 180.0 / std::numbers::pi < options.min_gaze_spread_deg) {
    out.partial = true;
    out.note = "gaze variation below the eyeball-fit minimum; eyeball unavailable";
    return out;
  }
  out.eyeball = eyeball;

  // Stage 3: per-frame eye parameters and optical axes.
  for (auto& f : out.frames) {
    if (!f.ok) continue;
    EyeParams e;
    e.p_e = eyeball.center;
    e.r_e = eyeball.radius;
    e.p_c = f.cornea.p_c;
    e.r_c = f.cornea.r_c;
    try {
      const GazeRay axis = optical_axis(e);
      e.p_p = e.p_c + options.pupil_offset * axis.direction;
      e.r_p = options.pupil_radius;
      f.eye = e;
      f.optical = axis;
    } catch (const Error& err) {
      f.ok = false;
      f.error = err.what();
    }
  }
  return out;
}

}  // namespace glintkit
