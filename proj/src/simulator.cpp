#include "defvins/simulator.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

namespace defvins {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kKnotSpacing = 0.05;

// Cumulative cubic basis coefficients: Bc(u) = C * [1, u, u^2, u^3].
Eigen::Matrix4d cumulative_basis() {
  Eigen::Matrix4d C;
  C << 6, 0, 0, 0,  //
      5, 3, -3, 1,  //
      1, 3, 3, -2,  //
      0, 0, 0, 1;
  return C / 6.0;
}

// Independent deterministic streams from one scenario seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), 0x5eedu};
  return std::mt19937_64(seq);
}

Rotation base_orientation() {
  Matrix3d m = Matrix3d::Zero();
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  m(2, 2) = -1.0;
  return Rotation(m);
}

}  // namespace

SplineTrajectory::SplineTrajectory(double t0, double dt, std::vector<Vector3d> positions,
                                   std::vector<Rotation> orientations)
    : t0_(t0), dt_(dt), positions_(std::move(positions)), orientations_(std::move(orientations)) {
  if (positions_.size() < 4 || positions_.size() != orientations_.size()) {
    throw InvalidArgument("SplineTrajectory: need >= 4 matching control poses");
  }
  if (!(dt_ > 0.0)) throw InvalidArgument("SplineTrajectory: knot spacing must be positive");
}

TrajectorySample sample_pose(const SplineTrajectory& traj, double t) {
  if (!(t >= traj.t_min() && t <= traj.t_max())) throw DomainError("sample_pose: time outside the knot span");
  const double dt = traj.knot_spacing();
  const double s = (t - traj.t0()) / dt;
  const auto n_seg = static_cast<long>(traj.positions().size()) - 3;
  long i = static_cast<long>(std::floor(s));
  if (i >= n_seg) i = n_seg - 1;
  const double u = s - static_cast<double>(i);

  static const Eigen::Matrix4d C = cumulative_basis();
  const Eigen::Vector4d B = C * Eigen::Vector4d(1, u, u * u, u * u * u);
  const Eigen::Vector4d dB = C * Eigen::Vector4d(0, 1, 2 * u, 3 * u * u) / dt;
  const Eigen::Vector4d ddB = C * Eigen::Vector4d(0, 0, 2, 6 * u) / (dt * dt);

  const auto& P = traj.positions();
  const auto& Q = traj.orientations();
  TrajectorySample out;
  out.p = P[i];
  for (int j = 1; j <= 3; ++j) {
    const Vector3d d = P[i + j] - P[i + j - 1];
    out.p += B(j) * d;
    out.v += dB(j) * d;
    out.a += ddB(j) * d;
  }
  Matrix3d R = Q[i].matrix();
  Vector3d w = Vector3d::Zero();
  for (int j = 1; j <= 3; ++j) {
    const Vector3d omega_j = so3_log<double>(Rotation(Q[i + j - 1].matrix().transpose() * Q[i + j].matrix()));
    const Matrix3d A = so3_exp<double>(Vector3d(B(j) * omega_j)).matrix();
    R = R * A;
    w = A.transpose() * w + dB(j) * omega_j;
  }
  out.R = Rotation::from_matrix(R);
  out.omega = w;
  return out;
}

SyntheticImu synth_imu(const SplineTrajectory& traj, const GravityDirection& g_hat, const ImuBiases& biases,
                       const ImuNoise& noise, double rate, std::uint64_t seed, ImuSynthesis mode, bool add_noise) {
  if (!(rate > 0.0)) throw InvalidArgument("synth_imu: rate must be positive");
  const double dt = 1.0 / rate;
  const Vector3d g = kGravityMagnitude * g_hat.vector();
  const auto n = static_cast<std::size_t>(std::floor((traj.t_max() - traj.t_min()) * rate + 1e-9));
  if (n < 2) throw InsufficientData("synth_imu: trajectory too short for the requested rate");

  std::vector<TrajectorySample> poses(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    poses[k] = sample_pose(traj, std::min(traj.t_min() + static_cast<double>(k) * dt, traj.t_max()));
  }

  auto rng = stream(seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sg = noise.gyro_density * std::sqrt(rate);
  const double sa = noise.accel_density * std::sqrt(rate);

  SyntheticImu out;
  out.samples.resize(n);
  out.truth.resize(n);
  RigidState prop;
  prop.R = poses[0].R;
  prop.v = poses[0].v;
  prop.p = poses[0].p;
  for (std::size_t k = 0; k < n; ++k) {
    Vector3d w, a;
    if (mode == ImuSynthesis::IntervalAverage) {
      w = so3_log<double>(Rotation(poses[k].R.matrix().transpose() * poses[k + 1].R.matrix())) / dt;
      a = poses[k].R.matrix().transpose() * ((poses[k + 1].v - poses[k].v) / dt - g);
    } else {
      w = poses[k].omega;
      a = poses[k].R.matrix().transpose() * (poses[k].a - g);
    }
    out.truth[k] = prop;
    if (mode == ImuSynthesis::IntervalAverage) {
      out.truth[k].R = poses[k].R;
      out.truth[k].v = poses[k].v;
    }
    // Zero-order-hold propagation of the noiseless signal.
    const Vector3d acc_world = out.truth[k].R.matrix() * a + g;
    prop.p = out.truth[k].p + out.truth[k].v * dt + 0.5 * acc_world * dt * dt;
    prop.v = out.truth[k].v + acc_world * dt;
    prop.R = out.truth[k].R * so3_exp<double>(Vector3d(w * dt));

    ImuSample& s = out.samples[k];
    s.t = traj.t_min() + static_cast<double>(k) * dt;
    s.gyro = w + biases.bg;
    s.accel = a + biases.ba;
    if (add_noise) {
      for (int c = 0; c < 3; ++c) s.gyro(c) += sg * normal(rng);
      for (int c = 0; c < 3; ++c) s.accel(c) += sa * normal(rng);
    }
  }
  return out;
}

DeformationLevel parse_level(const std::string& s) {
  if (s == "L0" || s == "0") return DeformationLevel::L0;
  if (s == "L1" || s == "1") return DeformationLevel::L1;
  if (s == "L2" || s == "2") return DeformationLevel::L2;
  if (s == "L3" || s == "3") return DeformationLevel::L3;
  throw InvalidArgument("unknown deformation level '" + s + "' (expected L0..L3)");
}

std::string level_name(DeformationLevel level) { return "L" + std::to_string(static_cast<int>(level)); }

double level_fraction(DeformationLevel level) {
  switch (level) {
    case DeformationLevel::L0: return 0.0;
    case DeformationLevel::L1: return 0.01;
    case DeformationLevel::L2: return 0.03;
    case DeformationLevel::L3: return 0.07;
  }
  return 0.0;
}

double Sheet::height(double x, double y) const {
  const double h = 0.5 * size;
  return bowl * (x * x + y * y) / (2.0 * h * h);
}

Vector3d Sheet::normal(double x, double y) const {
  const double h = 0.5 * size;
  const double k = bowl / (h * h);
  return Vector3d(-k * x, -k * y, 1.0).normalized();
}

double deformation_envelope(const DeformationModel& model, const Vector3d& x0) {
  const Eigen::Vector2d d = (x0 - model.center).head<2>();
  return std::exp(-d.squaredNorm() / (2.0 * model.envelope_width * model.envelope_width));
}

std::vector<Vector3d> deform_nodes(const DeformationModel& model, const Sheet& sheet,
                                   const std::vector<Vector3d>& nodes_ref, double t) {
  std::vector<Vector3d> out = nodes_ref;
  if (model.amplitude == 0.0) return out;
  auto rng = stream(model.seed, 2);
  std::uniform_real_distribution<double> uni(0.0, kTwoPi);
  const double phase = uni(rng);
  const double heading = uni(rng);
  const Vector3d k_dir(std::cos(heading), std::sin(heading), 0.0);
  for (std::size_t i = 0; i < nodes_ref.size(); ++i) {
    const Vector3d& x0 = nodes_ref[i];
    const double arg = kTwoPi * model.frequency * t + kTwoPi * k_dir.dot(x0) / model.wavelength + phase;
    out[i] = x0 + model.amplitude * deformation_envelope(model, x0) * std::sin(arg) * sheet.normal(x0.x(), x0.y());
  }
  return out;
}

SplineTrajectory make_trajectory(const SceneConfig& cfg) {
  const double t_end = cfg.duration + 0.25;
  const auto n_ctrl = static_cast<std::size_t>(std::ceil(t_end / kKnotSpacing)) + 4;
  auto rng = stream(cfg.seed, 3);
  std::uniform_real_distribution<double> uni(0.0, kTwoPi);
  double ph[7];
  for (double& p : ph) p = uni(rng);

  const Rotation base = base_orientation();
  const double A = cfg.translation_amplitude;
  const double w = kTwoPi / 4.0;
  const double rot = cfg.rotation_amplitude_deg * std::numbers::pi / 180.0;
  const Vector3d v_const = cfg.constant_speed * Vector3d(std::cos(ph[6]), std::sin(ph[6]), 0.0);
  const Vector3d start(-0.5 * cfg.duration * v_const.x(), -0.5 * cfg.duration * v_const.y(), cfg.camera_height);

  std::vector<Vector3d> P(n_ctrl);
  std::vector<Rotation> Q(n_ctrl);
  for (std::size_t j = 0; j < n_ctrl; ++j) {
    const double t = (static_cast<double>(j) - 1.0) * kKnotSpacing;
    if (cfg.motion == MotionProfile::ConstantVelocity) {
      P[j] = start + v_const * t;
      Q[j] = base;
      continue;
    }
    P[j] = Vector3d(A * std::sin(w * t + ph[0]), 0.6 * A * std::sin(2.0 * w * t + ph[1]),
                    cfg.camera_height + 0.3 * A * std::sin(1.5 * w * t + ph[2]));
    const Vector3d euler(rot * std::sin(1.1 * w * t + ph[3]), rot * std::sin(1.7 * w * t + ph[4]),
                         rot * std::sin(0.9 * w * t + ph[5]));
    Q[j] = base * so3_exp<double>(euler);
  }
  return SplineTrajectory(0.0, kKnotSpacing, std::move(P), std::move(Q));
}

std::vector<std::vector<Observation>> gen_tracks(const std::vector<RigidState>& poses,
                                                 const std::vector<std::vector<Vector3d>>& node_truth,
                                                 const std::vector<int>& node_ids, const Camera& cam,
                                                 double pixel_sigma, double margin, std::uint64_t seed,
                                                 bool add_noise) {
  auto rng = stream(seed, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<Observation>> out(poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) {
    for (std::size_t n = 0; n < node_ids.size(); ++n) {
      const auto u = try_project(poses[k], node_truth[k][n], cam);
      // Draw noise unconditionally so visibility never shifts the random stream.
      const Vector2d e(normal(rng), normal(rng));
      if (!u || !cam.contains(*u, margin)) continue;
      Observation obs;
      obs.feature_id = node_ids[n];
      obs.z = *u + (add_noise ? Vector2d(pixel_sigma * e) : Vector2d::Zero());
      obs.cov = pixel_sigma * pixel_sigma * Matrix2d::Identity();
      out[k].push_back(obs);
    }
  }
  return out;
}

std::vector<NodeTexture> make_textures(const std::vector<Vector3d>& nodes_ref, std::uint64_t seed) {
  auto rng = stream(seed, 5);
  std::uniform_real_distribution<double> uni(0.0, kTwoPi);
  const double psi1 = uni(rng), psi2 = uni(rng);
  std::vector<NodeTexture> out;
  out.reserve(nodes_ref.size());
  for (const auto& x : nodes_ref) {
    NodeTexture tex;
    tex.base = 0.5 + 0.15 * std::sin(7.0 * x.x() + 3.0 * x.y() + psi1) + 0.08 * std::sin(-4.0 * x.x() + 9.0 * x.y() + psi2);
    const double angle = uni(rng);
    std::uniform_real_distribution<double> mag(0.015, 0.025);
    tex.gradient = mag(rng) * Vector2d(std::cos(angle), std::sin(angle));
    out.push_back(tex);
  }
  return out;
}

IntensityField gen_intensity(const Camera& cam, const RigidState& pose, const std::vector<Vector3d>& nodes,
                             const std::vector<NodeTexture>& textures, double gain, double offset) {
  IntensityField img(cam.width, cam.height, gain * kBackgroundIntensity + offset);
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const auto u = try_project(pose, nodes[n], cam);
    if (!u) continue;
    const int cx = static_cast<int>(std::lround(u->x()));
    const int cy = static_cast<int>(std::lround(u->y()));
    for (int y = cy - kTexturePatchHalfWidth; y <= cy + kTexturePatchHalfWidth; ++y) {
      if (y < 0 || y >= cam.height) continue;
      for (int x = cx - kTexturePatchHalfWidth; x <= cx + kTexturePatchHalfWidth; ++x) {
        if (x < 0 || x >= cam.width) continue;
        const double v = textures[n].base + textures[n].gradient.dot(Vector2d(x, y) - *u);
        img.at(x, y) = gain * v + offset;
      }
    }
  }
  return img;
}

std::size_t imu_index(const std::vector<ImuSample>& imu, double t) {
  if (imu.size() < 2) throw InsufficientData("imu_index: need >= 2 samples");
  const double dt = imu[1].t - imu[0].t;
  const double k = std::round((t - imu[0].t) / dt);
  if (k < 0 || k >= static_cast<double>(imu.size()) || std::abs(imu[static_cast<std::size_t>(k)].t - t) > 1e-6) {
    throw InvalidArgument("imu_index: time not on the IMU grid");
  }
  return static_cast<std::size_t>(k);
}

SimOutput simulate(const SceneConfig& cfg) {
  cfg.camera.validate();
  if (cfg.grid < 2) throw InvalidArgument("simulate: grid must be >= 2");
  SimOutput out;
  out.config = cfg;
  out.biases = cfg.biases;
  out.g_hat = GravityDirection(cfg.gravity_dir);

  const SplineTrajectory traj = make_trajectory(cfg);
  const SyntheticImu imu =
      synth_imu(traj, out.g_hat, cfg.biases, cfg.noise, cfg.imu_rate, cfg.seed, cfg.imu_mode, !cfg.noiseless);
  out.imu = imu.samples;

  const double kf_dt = 1.0 / cfg.keyframe_rate;
  const auto n_kf = static_cast<std::size_t>(std::floor(cfg.duration / kf_dt + 1e-9)) + 1;
  for (std::size_t k = 0; k < n_kf; ++k) {
    const double t = static_cast<double>(k) * kf_dt;
    const std::size_t idx = imu_index(out.imu, t);
    out.keyframe_times.push_back(out.imu[idx].t);
    out.gt_states.push_back(imu.truth[idx]);
  }

  const double half = 0.5 * cfg.sheet.size;
  int id = 0;
  for (int iy = 0; iy < cfg.grid; ++iy) {
    for (int ix = 0; ix < cfg.grid; ++ix) {
      const double x = -half + cfg.sheet.size * ix / (cfg.grid - 1);
      const double y = -half + cfg.sheet.size * iy / (cfg.grid - 1);
      out.nodes_ref.emplace_back(x, y, cfg.sheet.height(x, y));
      out.node_ids.push_back(id++);
    }
  }

  out.deformation.level = cfg.level;
  out.deformation.amplitude = level_fraction(cfg.level) * cfg.sheet.size;
  out.deformation.wavelength = cfg.wavelength;
  out.deformation.frequency = cfg.frequency;
  out.deformation.seed = cfg.seed;
  for (double t : out.keyframe_times) out.gt_nodes.push_back(deform_nodes(out.deformation, cfg.sheet, out.nodes_ref, t));

  out.tracks = gen_tracks(out.gt_states, out.gt_nodes, out.node_ids, cfg.camera, cfg.pixel_sigma, cfg.image_margin,
                          cfg.seed, !cfg.noiseless);

  const auto textures = make_textures(out.nodes_ref, cfg.seed);
  auto rng = stream(cfg.seed, 6);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < n_kf; ++k) {
    const double gain = 1.0 + cfg.gain_jitter * uni(rng);
    const double offset = 0.5 * cfg.gain_jitter * uni(rng);
    out.gains.push_back(gain);
    out.offsets.push_back(offset);
    IntensityField img = gen_intensity(cfg.camera, out.gt_states[k], out.gt_nodes[k], textures, gain, offset);
    if (cfg.image_noise > 0.0 && !cfg.noiseless) {
      for (double& v : img.values) v += cfg.image_noise * normal(rng);
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

}  // namespace defvins
