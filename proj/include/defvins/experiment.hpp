#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "defvins/estimator.hpp"
#include "defvins/io.hpp"
#include "defvins/observability.hpp"
#include "defvins/simulator.hpp"

namespace defvins {

struct MetricReport {
  Variant variant = Variant::Full;
  double ate_mm = 0.0;
  double rpe_mm = 0.0;
  int tracked_frames = 0;
  int total_frames = 0;
  int activations = 0;
  bool failed = false;
  std::string failure;
};

/// ATE and RPE of the run against the scenario's keyframe ground truth. Metrics
/// that cannot be formed (too few poses) are NaN.
MetricReport evaluate(const RunResult& run, const SimOutput& scenario, Variant variant);

std::string metrics_json(const MetricReport& m);

/// Run one variant and, when `out_dir` is non-empty, write est_trajectory.tum,
/// diagnostics.csv, metrics.json and graph.json there.
MetricReport run_experiment(const SimOutput& scenario, Variant variant, const EstimatorConfig& cfg,
                            const fs::path& out_dir = {});

struct SweepRow {
  DeformationLevel level = DeformationLevel::L0;
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  MetricReport metrics;
};

/// Simulate every (level, seed) once and run each variant on it.
std::vector<SweepRow> sweep(const std::vector<DeformationLevel>& levels, const std::vector<Variant>& variants,
                            const std::vector<std::uint64_t>& seeds, const SceneConfig& base,
                            const EstimatorConfig& cfg);

// level,variant,seed,ate_mm,rpe_mm,frames
void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows);

/// Ground-truth windows cut from one simulated sequence, for the conditioning
/// curve and the gate. Node instances are placed on every keyframe for the
/// nodes it observes. Owns the data the measurements point into.
struct SegmentSet {
  std::deque<SimOutput> sims;
  std::deque<DeformationGraph> graphs;
  std::vector<Segment> segments;
};

/// `count` non-overlapping windows of `keyframes` keyframes from a sequence
/// simulated with `scene` (its duration is extended as needed).
SegmentSet make_segments(const SceneConfig& scene, int count, int keyframes, const EstimatorConfig& cfg);

/// Window of keyframes [first, first + keyframes) of a simulation at ground truth.
Segment segment_at(const SimOutput& sim, int first, int keyframes, const DeformationGraph* graph);

/// Deformation graph over the reference nodes of a simulation.
DeformationGraph reference_graph(const SimOutput& sim, const EstimatorConfig& cfg);

/// Gate decisions along a ground-truth sequence: rigid conditioning of the
/// growing (then sliding) window after each keyframe, and the keyframe index
/// at which the gate first activates (-1 if never).
struct GateTrace {
  std::vector<double> rho;
  int activation_keyframe = -1;
};
GateTrace gate_trace(const SimOutput& sim, const EstimatorConfig& cfg);

}  // namespace defvins
