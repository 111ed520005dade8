// Brute-force reference for noisy corneal-centre estimation.
//
// For every frame of the shared noisy set, evaluates the matched glint
// objective (squared pixel distance of gated pairs plus a fixed penalty per
// unmatched glint, corneal radius fixed at truth) on every node of the
// absolute 0.05 mm lattice within a cube around the true centre, and reports
// the median distance from the best node to the truth.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "glintkit/glint.h"
#include "noisy_frames.h"

namespace {

using namespace glintkit;

constexpr double kUnmatchedPenaltyPx2 = 1e4;

double objective(const FrameObservation& frame, const RigSide& rig, const Cornea& cornea,
                 double gate) {
  double cost = 0;
  for (std::size_t v = 0; v < rig.cameras.size(); ++v) {
    std::vector<Vec2> obs;
    for (const auto& g : frame.glints) {
      if (g.view == static_cast<int>(v)) obs.push_back(g.pixel);
    }
    if (obs.empty()) continue;
    std::vector<SimulatedGlint> sim;
    for (const auto& led : rig.leds) {
      const auto s = simulate_glint(cornea, led, rig.cameras[v]);
      if (s && rig.cameras[v].in_domain(s->pixel)) sim.push_back({s->pixel, led.id});
    }
    const auto a = match_glints(sim, obs, gate);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      if (!a.led_for_observed[k]) {
        cost += kUnmatchedPenaltyPx2;
        continue;
      }
      for (const auto& s : sim) {
        if (s.led_id == *a.led_for_observed[k]) cost += (s.pixel - obs[k]).squaredNorm();
      }
    }
  }
  return cost;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-grid reference bound for noisy corneal-centre estimation"};
  double half_width = 1.0, step = 0.05, gate = 3 * testing::kNoisySigmaPx;
  int frames = testing::kNoisyFrameCount;
  app.add_option("--half-width", half_width, "Search cube half-width, mm")->capture_default_str();
  app.add_option("--step", step, "Lattice spacing, mm")->capture_default_str();
  app.add_option("--gate", gate, "Matching gate, px")->capture_default_str();
  app.add_option("--frames", frames, "Frames to process")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const Rig rig = default_rig();
  const auto set = testing::noisy_frames(rig);
  frames = std::min<int>(frames, static_cast<int>(set.size()));
  std::vector<double> errors;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < frames; ++i) {
    const auto& f = set[i];
    const Vec3 truth = f.truth.p_c;
    Eigen::Vector3i lo, hi;
    for (int k = 0; k < 3; ++k) {
      lo[k] = static_cast<int>(std::ceil((truth[k] - half_width) / step));
      hi[k] = static_cast<int>(std::floor((truth[k] + half_width) / step));
    }
    double best = std::numeric_limits<double>::infinity();
    Vec3 best_p = truth;
    for (int x = lo[0]; x <= hi[0]; ++x) {
      for (int y = lo[1]; y <= hi[1]; ++y) {
        for (int z = lo[2]; z <= hi[2]; ++z) {
          const Vec3 p(x * step, y * step, z * step);
          const double c = objective(f.noisy, rig.left, {p, f.truth.r_c}, gate);
          if (c < best) {
            best = c;
            best_p = p;
          }
        }
      }
    }
    errors.push_back((best_p - truth).norm());
    std::cout << "frame " << i << " error_mm " << errors.back() << " cost " << best << std::endl;
  }
  std::vector<double> s = errors;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const double median = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout.precision(17);
  std::cout << "median_error_mm " << median << "\nseconds " << secs << "\n";
}
