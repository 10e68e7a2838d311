#include "defvins/experiment.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>

#include "defvins/errors.hpp"

namespace defvins {

MetricReport evaluate(const RunResult& run, const SimOutput& sc, Variant variant) {
  MetricReport m;
  m.variant = variant;
  m.total_frames = static_cast<int>(sc.keyframe_times.size()) - 1;
  m.tracked_frames = tracked_frames(run.frames);
  m.failed = run.failed;
  m.failure = run.failure;
  m.activations = run.activations;
  const Trajectory est = to_trajectory(run.trajectory);
  const Trajectory gt = to_trajectory(sc.keyframe_times, sc.gt_states);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    m.ate_mm = ate_rmse(est, gt);
  } catch (const InsufficientData&) {
    m.ate_mm = nan;
  }
  try {
    m.rpe_mm = rpe_trans(est, gt, 1);
  } catch (const InsufficientData&) {
    m.rpe_mm = nan;
  }
  return m;
}

std::string metrics_json(const MetricReport& m) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  const nlohmann::json j{{"variant", variant_name(m.variant)}, {"ate_rmse_mm", num(m.ate_mm)},
                         {"rpe_trans_mm", num(m.rpe_mm)},     {"tracked_frames", m.tracked_frames},
                         {"total_frames", m.total_frames},    {"activations", m.activations},
                         {"failed", m.failed},                {"failure", m.failure}};
  return j.dump(2);
}

MetricReport run_experiment(const SimOutput& sc, Variant variant, const EstimatorConfig& cfg, const fs::path& out) {
  const RunResult run = run_estimator(sc, variant, cfg);
  const MetricReport m = evaluate(run, sc, variant);
  if (!out.empty()) {
    fs::create_directories(out);
    write_tum(out / "est_trajectory.tum", to_trajectory(run.trajectory));
    write_diagnostics_csv(out / "diagnostics.csv", run.frames);
    std::ofstream(out / "metrics.json") << metrics_json(m) << '\n';
    if (!run.graph.nodes.empty()) write_graph_json(out / "graph.json", run.graph, run.previous_nodes, run.latest_nodes);
  }
  return m;
}

std::vector<SweepRow> sweep(const std::vector<DeformationLevel>& levels, const std::vector<Variant>& variants,
                            const std::vector<std::uint64_t>& seeds, const SceneConfig& base,
                            const EstimatorConfig& cfg) {
  std::vector<SweepRow> rows;
  for (DeformationLevel level : levels) {
    for (std::uint64_t seed : seeds) {
      SceneConfig sc = base;
      sc.level = level;
      sc.seed = seed;
      const SimOutput sim = simulate(sc);
      for (Variant v : variants) rows.push_back({level, v, seed, run_experiment(sim, v, cfg)});
    }
  }
  return rows;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << std::setprecision(10) << "level,variant,seed,ate_mm,rpe_mm,frames\n";
  for (const auto& r : rows) {
    f << level_name(r.level) << ',' << variant_name(r.variant) << ',' << r.seed << ',' << r.metrics.ate_mm << ','
      << r.metrics.rpe_mm << ',' << r.metrics.tracked_frames << '\n';
  }
}

DeformationGraph reference_graph(const SimOutput& sim, const EstimatorConfig& cfg) {
  std::vector<std::pair<int, Vector3d>> ref;
  for (std::size_t n = 0; n < sim.node_ids.size(); ++n) ref.emplace_back(sim.node_ids[n], sim.nodes_ref[n]);
  const double sigma = cfg.graph_sigma > 0.0 ? cfg.graph_sigma : 0.5 * cfg.graph_radius;
  return build_graph(ref, cfg.graph_radius, sigma, cfg.k_elastic);
}

Segment segment_at(const SimOutput& sim, int first, int keyframes, const DeformationGraph* graph) {
  if (first < 0 || keyframes < 2 || first + keyframes > static_cast<int>(sim.keyframe_times.size())) {
    throw InvalidArgument("segment_at: keyframe range outside the sequence");
  }
  Segment seg;
  ProblemState& s = seg.state;
  WindowMeasurements& m = seg.meas;
  s.biases = sim.biases;
  s.g_hat = sim.g_hat;
  m.camera = sim.config.camera;
  m.graph = graph;
  m.bias_anchor = sim.biases;
  m.gravity_anchor = sim.g_hat;
  for (int k = first; k < first + keyframes; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    s.ids.push_back(k);
    s.times.push_back(sim.keyframe_times[ku]);
    s.poses.push_back(sim.gt_states[ku]);
    NodeSet seen;
    for (const auto& o : sim.tracks[ku]) {
      for (std::size_t n = 0; n < sim.node_ids.size(); ++n) {
        if (sim.node_ids[n] == o.feature_id) seen[o.feature_id] = sim.gt_nodes[ku][n];
      }
    }
    s.nodes.push_back(std::move(seen));
    m.obs.push_back(sim.tracks[ku]);
    m.images.push_back(ku < sim.images.size() && sim.images[ku].width > 0 ? &sim.images[ku] : nullptr);
    if (k > first) {
      const std::size_t a = imu_index(sim.imu, sim.keyframe_times[ku - 1]);
      const std::size_t b = imu_index(sim.imu, sim.keyframe_times[ku]);
      m.preint.push_back(
          preintegrate(std::span<const ImuSample>(sim.imu.data() + a, b - a + 1), sim.biases, sim.config.noise));
    }
  }
  if (graph != nullptr) estimate_pair_gains(s, m);
  return seg;
}

SegmentSet make_segments(const SceneConfig& scene, int count, int keyframes, const EstimatorConfig& cfg) {
  SceneConfig sc = scene;
  const double needed = static_cast<double>(count * keyframes) / sc.keyframe_rate;
  sc.duration = std::max(sc.duration, needed);
  SegmentSet set;
  set.sims.push_back(simulate(sc));
  const SimOutput& sim = set.sims.back();
  set.graphs.push_back(reference_graph(sim, cfg));
  for (int s = 0; s < count; ++s) set.segments.push_back(segment_at(sim, s * keyframes, keyframes, &set.graphs.back()));
  return set;
}

GateTrace gate_trace(const SimOutput& sim, const EstimatorConfig& cfg) {
  GateTrace out;
  ActivationGate gate(cfg.solver.activation_threshold, cfg.solver.activation_window);
  const int n = static_cast<int>(sim.keyframe_times.size());
  for (int k = 1; k < n; ++k) {
    const int first = std::max(0, k + 1 - cfg.solver.window_size);
    Segment seg = segment_at(sim, first, k + 1 - first, nullptr);
    seg.state.landmarks.clear();
    for (std::size_t i = 0; i < sim.node_ids.size(); ++i) {
      seg.state.landmarks[sim.node_ids[i]] = sim.gt_nodes[static_cast<std::size_t>(k)][i];
    }
    for (auto& ns : seg.state.nodes) ns.clear();
    const double rho = rigid_window_rho(seg.state, seg.meas, cfg.weights);
    out.rho.push_back(rho);
    if (gate.update(rho) && out.activation_keyframe < 0) out.activation_keyframe = k;
  }
  return out;
}

}  // namespace defvins
