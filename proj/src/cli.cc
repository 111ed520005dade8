#include "glintkit/cli.h"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "glintkit/errors.h"
#include "glintkit/io.h"

namespace glintkit {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Key = std::pair<int, int>;  // (subject, frame)

std::vector<double> parse_list(const std::string& text, std::size_t n, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0;
    const auto* end = item.data() + item.size();
    const auto [ptr, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      throw UsageError(std::string(flag) + ": '" + text + "' is not a comma-separated number list");
    }
    out.push_back(v);
  }
  if (out.size() != n) {
    throw UsageError(std::string(flag) + " expects " + std::to_string(n) + " values");
  }
  return out;
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("GLINTKIT_SEED");
  if (!env || !*env) return fallback;
  std::uint64_t v = 0;
  const char* end = env + std::string_view(env).size();
  const auto [ptr, ec] = std::from_chars(env, end, v);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(std::string("GLINTKIT_SEED='") + env + "' is not an unsigned integer");
  }
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string rig, out;
  int subjects = 1, calib = kMaxCalibrationPoints, test = 10, test_frames = 1;
  double noise_px = 0;
  std::uint64_t seed = 0;
  bool allow_over_budget = false;
};

void simulate(const SimulateArgs& a, std::ostream& err) {
  const Rig rig = parse_rig(a.rig);
  SceneConfig cfg;
  cfg.seed = seed_from_env(a.seed);
  cfg.glint_noise_px = a.noise_px;
  cfg.test_frames_per_target = a.test_frames;
  if (a.subjects < 1) throw DomainError("--subjects must be at least 1");
  if (a.calib > kMaxCalibrationPoints && a.allow_over_budget) {
    err << "warning: " << a.calib << " calibration targets exceed the "
        << kMaxCalibrationPoints << "-point budget\n";
  }
  std::vector<SessionRecord> records;
  for (int s = 0; s < a.subjects; ++s) {
    Session session = generate_session(rig, cfg, s, a.calib, a.test, a.allow_over_budget);
    for (auto* part : {&session.calibration, &session.test}) {
      for (auto& r : *part) {
        // Noise stream is disjoint from the scene streams of the same record.
        auto rng = record_rng(~cfg.seed, r.subject, r.frame);
        for (Side side : {Side::kLeft, Side::kRight}) {
          auto& obs = r.observation(side);
          obs = add_noise(std::span(&obs, 1), cfg.glint_noise_px, rng).front();
        }
        records.push_back(std::move(r));
      }
    }
  }
  write_session(a.out, records);
}

// ---------------------------------------------------------------------------

void annotate(const std::string& rig_path, const std::string& obs_path,
              const std::string& out_path, double noise_px, std::ostream& err) {
  if (!(noise_px >= 0)) throw UsageError("--noise-px must be non-negative");
  AnnotationOptions options;
  options.gate_px = std::max(2.0, 3.0 * noise_px);
  const Rig rig = parse_rig(rig_path);
  const auto records = read_session(obs_path);
  std::map<int, std::vector<const SessionRecord*>> by_subject;
  std::set<Key> seen;
  for (const auto& r : records) {
    validate_against(r, rig);
    if (!seen.insert({r.subject, r.frame}).second) {
      throw ValidationError("duplicate record for subject " + std::to_string(r.subject) +
                            ", frame " + std::to_string(r.frame));
    }
    by_subject[r.subject].push_back(&r);
  }

  std::vector<AnnotationRecord> out;
  for (auto& [subject, recs] : by_subject) {
    std::sort(recs.begin(), recs.end(),
              [](const SessionRecord* a, const SessionRecord* b) { return a->frame < b->frame; });
    std::vector<AnnotationRecord> annotated(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      annotated[i].subject = subject;
      annotated[i].frame = recs[i]->frame;
      annotated[i].group = recs[i]->group;
      annotated[i].split = recs[i]->split;
    }
    for (Side side : {Side::kLeft, Side::kRight}) {
      std::vector<FrameObservation> frames;
      for (const auto* r : recs) frames.push_back(r->observation(side));
      const SequenceAnnotation seq = annotate_sequence(frames, rig.side(side), options);
      if (seq.partial) {
        err << "warning: subject " << subject << " " << to_string(side) << " eye: " << seq.note
            << "\n";
      }
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const FrameAnnotation& f = seq.frames[i];
        EyeAnnotation& e = annotated[i].eye(side);
        e.ok = f.ok;
        e.error = f.error;
        if (!f.ok) continue;
        e.p_c = f.cornea.p_c;
        e.r_c = f.cornea.r_c;
        e.rms_px = f.cornea.rms_residual;
        e.converged = f.cornea.converged;
        e.assigned = f.cornea.assigned;
        e.eye = f.eye;
        e.optical = f.optical;
      }
    }
    for (auto& a : annotated) out.push_back(std::move(a));
  }
  write_annotations(out_path, out);
}

// ---------------------------------------------------------------------------

std::map<Key, const SessionRecord*> index_truth(const std::vector<SessionRecord>& gt) {
  std::map<Key, const SessionRecord*> idx;
  for (const auto& r : gt) {
    if (!idx.emplace(Key{r.subject, r.frame}, &r).second) {
      throw AlignmentError("duplicate ground-truth record");
    }
  }
  return idx;
}

void calibrate(const std::string& ann_path, const std::string& gt_path, int points,
               const std::string& out_path, std::ostream& err) {
  if (points < 1) throw UsageError("--points must be at least 1");
  if (points > kMaxCalibrationPoints) {
    err << "warning: --points " << points << " exceeds the " << kMaxCalibrationPoints
        << "-point calibration budget; running with the override\n";
  }
  const auto annotations = read_annotations(ann_path);
  const auto gt = read_session(gt_path);
  const auto truth = index_truth(gt);

  std::map<int, std::vector<const AnnotationRecord*>> by_subject;
  for (const auto& a : annotations) {
    if (a.split == Split::kCalibration) by_subject[a.subject].push_back(&a);
  }
  std::vector<SubjectKappa> result;
  for (auto& [subject, recs] : by_subject) {
    std::set<int> groups;
    for (const auto* a : recs) groups.insert(a->group);
    std::set<int> used;
    for (int g : groups) {
      if (static_cast<int>(used.size()) == points) break;
      used.insert(g);
    }
    SubjectKappa k;
    k.subject = subject;
    k.calibration_points = static_cast<int>(used.size());
    for (Side side : {Side::kLeft, Side::kRight}) {
      std::vector<KappaSample> samples;
      for (const auto* a : recs) {
        if (!used.count(a->group)) continue;
        const auto it = truth.find({a->subject, a->frame});
        if (it == truth.end() || !it->second->truth) {
          throw AlignmentError("calibration frame without ground truth (subject " +
                               std::to_string(a->subject) + ", frame " +
                               std::to_string(a->frame) + ")");
        }
        const EyeAnnotation& e = a->eye(side);
        if (e.ok && e.optical) samples.push_back({*e.optical, it->second->truth->target});
      }
      try {
        (side == Side::kLeft ? k.left : k.right) = estimate_kappa(samples, side);
      } catch (const Error& e) {
        err << "warning: subject " << subject << " " << to_string(side)
            << " eye: kappa unavailable: " << e.what() << "\n";
      }
    }
    result.push_back(k);
  }
  write_kappa(out_path, result);
}

// ---------------------------------------------------------------------------

void evaluate(const std::string& pred_path, const std::string& gt_path,
              const std::string& kappa_path, const std::string& report_path, std::ostream& out) {
  const auto annotations = read_annotations(pred_path);
  const auto gt = read_session(gt_path);
  std::map<int, SubjectKappa> kappas;
  for (const auto& k : read_kappa(kappa_path)) kappas[k.subject] = k;

  std::map<Key, const AnnotationRecord*> ann;
  for (const auto& a : annotations) ann[{a.subject, a.frame}] = &a;

  std::vector<SessionRecord> test;
  std::vector<GazePrediction> preds;
  for (const auto& r : gt) {
    if (r.split != Split::kTest) continue;
    const auto it = ann.find({r.subject, r.frame});
    if (it == ann.end()) {
      throw AlignmentError("no annotation for test frame (subject " +
                           std::to_string(r.subject) + ", frame " + std::to_string(r.frame) +
                           ")");
    }
    GazePrediction p;
    p.subject = r.subject;
    p.frame = r.frame;
    p.group = r.group;
    const auto k = kappas.find(r.subject);
    for (Side side : {Side::kLeft, Side::kRight}) {
      const EyeAnnotation& e = it->second->eye(side);
      if (!e.ok || !e.optical || k == kappas.end() || !k->second.eye(side)) continue;
      (side == Side::kLeft ? p.left : p.right) =
          apply_kappa(*e.optical, k->second.eye(side)->kappa);
    }
    preds.push_back(p);
    test.push_back(r);
  }
  const EvaluationReport report = evaluate_report(preds, test);
  const std::string csv = report_csv(report);
  std::filesystem::path json_path(report_path);
  json_path.replace_extension(".json");
  if (json_path == std::filesystem::path(report_path)) json_path += ".json";
  write_text(report_path, csv);
  write_text(json_path, report_json(report));
  out << csv;
}

// ---------------------------------------------------------------------------

struct EpipolarArgs {
  std::string rig, side = "left", pixel, depths = "20,60";
  int view = 0, target_view = 1, samples = 32;
};

void epipolar(const EpipolarArgs& a, std::ostream& out) {
  const auto px = parse_list(a.pixel, 2, "--pixel");
  const auto depths = parse_list(a.depths, 2, "--depths");
  Side side;
  try {
    side = side_from_string(a.side);
  } catch (const Error& e) {
    throw UsageError(std::string("--side: ") + e.what());
  }
  const Rig rig = parse_rig(a.rig);
  const auto& cams = rig.side(side).cameras;
  const int n = static_cast<int>(cams.size());
  if (a.view < 0 || a.view >= n || a.target_view < 0 || a.target_view >= n) {
    throw ValidationError("view index out of range; the " + std::string(to_string(side)) +
                          " side has " + std::to_string(n) + " cameras");
  }
  const auto samples = epipolar_samples(cams[a.view], Vec2(px[0], px[1]), cams[a.target_view],
                                        {depths[0], depths[1]}, a.samples);
  std::ostringstream os;
  os.precision(17);
  os << "index,depth_mm,u,v\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    os << i << ',' << samples[i].depth;
    if (samples[i].pixel) {
      os << ',' << samples[i].pixel->x() << ',' << samples[i].pixel->y() << '\n';
    } else {
      os << ",NA,NA\n";
    }
  }
  out << os.str();
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Glint-based eye model simulation, annotation, calibration and evaluation",
               "glintkit"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic session file");
  c_sim->add_option("--rig", sim.rig, "Rig file")->required();
  c_sim->add_option("--subjects", sim.subjects, "Number of subjects")->capture_default_str();
  c_sim->add_option("--calib", sim.calib, "Calibration targets per subject (two frames each)")
      ->capture_default_str();
  c_sim->add_option("--test", sim.test, "Test targets per subject")->capture_default_str();
  c_sim->add_option("--test-frames", sim.test_frames, "Frames per test target")
      ->capture_default_str();
  c_sim->add_option("--noise-px", sim.noise_px, "Glint pixel noise sigma")->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "Random seed (GLINTKIT_SEED overrides)")
      ->capture_default_str();
  c_sim->add_flag("--allow-over-budget", sim.allow_over_budget,
                  "Permit more calibration targets than the budget");
  c_sim->add_option("--out", sim.out, "Output session file")->required();

  std::string ann_rig, ann_obs, ann_out;
  double ann_noise = 0;
  auto* c_ann = app.add_subcommand("annotate", "Estimate eye parameters from glints");
  c_ann->add_option("--rig", ann_rig, "Rig file")->required();
  c_ann->add_option("--obs", ann_obs, "Session file")->required();
  c_ann->add_option("--out", ann_out, "Output annotation file")->required();
  c_ann->add_option("--noise-px", ann_noise, "Expected glint noise sigma; gate is max(2, 3 sigma)")
      ->capture_default_str();

  std::string cal_ann, cal_gt, cal_out;
  int cal_points = kMaxCalibrationPoints;
  auto* c_cal = app.add_subcommand("calibrate", "Fit per-eye kappa on the calibration split");
  c_cal->add_option("--annotations", cal_ann, "Annotation file")->required();
  c_cal->add_option("--gt", cal_gt, "Session file with ground truth")->required();
  c_cal->add_option("--points", cal_points, "Calibration targets to use")->capture_default_str();
  c_cal->add_option("--out", cal_out, "Output kappa file")->required();

  std::string ev_pred, ev_gt, ev_kappa, ev_report;
  auto* c_ev = app.add_subcommand("evaluate", "Score the test split");
  c_ev->add_option("--pred", ev_pred, "Annotation file")->required();
  c_ev->add_option("--gt", ev_gt, "Session file with ground truth")->required();
  c_ev->add_option("--kappa", ev_kappa, "Kappa file")->required();
  c_ev->add_option("--report", ev_report, "Report CSV; a JSON record is written beside it")
      ->required();

  EpipolarArgs epi;
  auto* c_epi = app.add_subcommand("epipolar", "Sample the epipolar curve of a pixel");
  c_epi->add_option("--rig", epi.rig, "Rig file")->required();
  c_epi->add_option("--side", epi.side, "left or right")->capture_default_str();
  c_epi->add_option("--view", epi.view, "Source view")->required();
  c_epi->add_option("--pixel", epi.pixel, "Source pixel u,v")->required();
  c_epi->add_option("--target-view", epi.target_view, "Target view")->required();
  c_epi->add_option("--samples", epi.samples, "Number of samples")->capture_default_str();
  c_epi->add_option("--depths", epi.depths, "Depth range a,b in mm")->capture_default_str();

  std::string rig_out;
  double rig_ipd = 64.0;
  auto* c_rig = app.add_subcommand("default-rig", "Write the built-in two-eye rig");
  c_rig->add_option("--ipd", rig_ipd, "Interpupillary distance, mm")->capture_default_str();
  c_rig->add_option("--out", rig_out, "Output rig file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*c_sim) simulate(sim, err);
    if (*c_ann) annotate(ann_rig, ann_obs, ann_out, ann_noise, err);
    if (*c_cal) calibrate(cal_ann, cal_gt, cal_points, cal_out, err);
    if (*c_ev) evaluate(ev_pred, ev_gt, ev_kappa, ev_report, out);
    if (*c_epi) epipolar(epi, out);
    if (*c_rig) write_rig(default_rig(rig_ipd), rig_out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPipelineError;
  }
  return kExitOk;
}

}  // namespace glintkit
