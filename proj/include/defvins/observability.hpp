#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "defvins/problem.hpp"

namespace defvins {

enum class Variant { VNR, VIR, Full };
std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

/// Which rows and columns a variant contributes.
struct VariantSpec {
  AssemblyOptions rows;
  bool drop_velocity = false;
  bool drop_biases = false;
  bool drop_gravity = false;
};
VariantSpec variant_spec(Variant v);

struct ObservabilityMatrix {
  MatrixXd data;
  std::vector<std::string> col_labels;
  std::vector<Family> row_families;  // one entry per row
  std::vector<int> columns;          // kept layout columns, in order
  StateLayout layout;
  ResidualBlockSet blocks;
};

/// Stack the whitened Jacobians of the first `pairs` keyframe pairs of the
/// window in the order inertial, vision, elastic, viscous, photometric,
/// bias (gyro, accel), gravity prior, gravity, node motion. The marginal prior
/// is never part of the matrix.
ObservabilityMatrix assemble(const ProblemState& state, const WindowMeasurements& meas, const CostWeights& weights,
                             const VariantSpec& spec, int pairs, bool dense = true);

/// Static-landmark view of a window: node instances of the latest keyframe that
/// has them become landmarks.
ProblemState rigid_view(const ProblemState& state);

/// Drop landmarks and node instances of features seen from fewer than
/// `min_views` of the first `pairs + 1` keyframes; they would only contribute
/// empty or depth-free columns.
ProblemState prune_landmarks(const ProblemState& state, const WindowMeasurements& meas, int pairs,
                             int min_views = 2);

/// Keyframes [first, first + count) of a window with their measurements.
ProblemState sub_state(const ProblemState& state, int first, int count);
WindowMeasurements sub_measurements(const WindowMeasurements& meas, int first, int count);

struct ObservabilityReport {
  VectorXd singular_values;  // descending, padded with zeros up to the column count
  double rho = 0.0;
  int rank = 0;
  MatrixXd nullspace;  // columns: right singular vectors below tolerance
  std::vector<std::string> gauge_labels;
};

inline constexpr double kDefaultRankTolerance = 1e-8;

/// Full SVD analysis. Throws NumericalFailure if the matrix is not finite.
ObservabilityReport analyze(const MatrixXd& m, double tol = kDefaultRankTolerance);

/// Translation (x, y, z) and rotation about gravity, as unit columns over the
/// kept columns of `om`.
MatrixXd gauge_generators(const ProblemState& state, const ObservabilityMatrix& om);

/// Labels "translation", "yaw", "bias-gravity" or "unclassified" for each
/// null direction of the report.
std::vector<std::string> classify_gauge(const ObservabilityReport& report, const MatrixXd& generators,
                                        const std::vector<int>& bias_gravity_rows, double capture = 0.99);

/// Row indices (in matrix column space) of the accelerometer-bias and gravity
/// columns.
std::vector<int> bias_gravity_columns(const ObservabilityMatrix& om);

/// rho of the matrix restricted to the orthogonal complement of the gauge
/// generators, via SVD.
double gauge_projected_rho(const MatrixXd& m, const MatrixXd& generators);

/// Conditioning from the Gram matrix of the gauge-projected columns; cheaper
/// than an SVD and accurate while rho stays well above sqrt(machine epsilon).
struct GramConditioning {
  double rho = 0.0;
  int rank = 0;
  int nullity = 0;
};
GramConditioning gram_conditioning(const ResidualBlockSet& blocks, const ObservabilityMatrix& om,
                                   const MatrixXd& generators, double tol = kDefaultRankTolerance);

struct Segment {
  ProblemState state;
  WindowMeasurements meas;
};

struct CurveRow {
  Variant variant = Variant::Full;
  int k = 0;
  int segment = 0;
  double log10_rho = 0.0;
  int rank = 0;
  int nullity = 0;
};

std::vector<CurveRow> conditioning_curve(const std::vector<Segment>& segments, int k_max,
                                         const std::vector<Variant>& variants, const CostWeights& weights);

/// Mean log10(rho) per (variant, k).
struct CurveMean {
  Variant variant = Variant::Full;
  int k = 0;
  double mean_log10_rho = 0.0;
};
std::vector<CurveMean> curve_means(const std::vector<CurveRow>& rows);

}  // namespace defvins
