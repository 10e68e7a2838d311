#include "defvins/io.hpp"

#include <Eigen/Geometry>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "defvins/errors.hpp"

namespace defvins {

using json = nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << std::setprecision(17);
  return f;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  return f;
}

std::vector<double> split_numbers(const std::string& line, char sep, const fs::path& path, std::size_t lineno) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  if (sep == ' ') {
    while (ss >> cell) out.push_back(std::stod(cell));
    return out;
  }
  while (std::getline(ss, cell, sep)) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
    }
  }
  return out;
}

// Data rows of a CSV with a header line, each with exactly `cols` numbers.
std::vector<std::vector<double>> read_csv(const fs::path& path, std::size_t cols) {
  std::ifstream f = open_in(path);
  std::string line;
  std::getline(f, line);
  std::vector<std::vector<double>> rows;
  std::size_t n = 1;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    auto row = split_numbers(line, ',', path, n);
    if (row.size() != cols) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(cols) + " columns");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::size_t keyframe_of(const std::vector<double>& times, double t) {
  auto it = std::lower_bound(times.begin(), times.end(), t - 1e-9);
  if (it == times.end() || std::abs(*it - t) > 1e-9) {
    throw IoError("timestamp " + std::to_string(t) + " does not match any keyframe");
  }
  return static_cast<std::size_t>(it - times.begin());
}

Eigen::Quaterniond quat(const Rotation& R) { return Eigen::Quaterniond(R.matrix()).normalized(); }

Rotation from_quat(double qx, double qy, double qz, double qw) {
  return Rotation::from_matrix(Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix());
}

json vec_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
Vector3d json_vec(const json& j) { return Vector3d(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

std::string motion_name(MotionProfile m) { return m == MotionProfile::Rich ? "rich" : "constant_velocity"; }
MotionProfile parse_motion(const std::string& s) {
  if (s == "rich") return MotionProfile::Rich;
  if (s == "constant_velocity") return MotionProfile::ConstantVelocity;
  throw IoError("unknown motion profile '" + s + "'");
}

json scene_json(const SceneConfig& c) {
  return json{
      {"camera",
       {{"fx", c.camera.fx}, {"fy", c.camera.fy}, {"cx", c.camera.cx}, {"cy", c.camera.cy},
        {"width", c.camera.width}, {"height", c.camera.height}}},
      {"grid", c.grid},
      {"sheet", {{"size", c.sheet.size}, {"bowl", c.sheet.bowl}}},
      {"camera_height", c.camera_height},
      {"imu_rate", c.imu_rate},
      {"keyframe_rate", c.keyframe_rate},
      {"duration", c.duration},
      {"noise", {{"gyro_density", c.noise.gyro_density}, {"accel_density", c.noise.accel_density}}},
      {"pixel_sigma", c.pixel_sigma},
      {"image_noise", c.image_noise},
      {"biases", {{"bg", vec_json(c.biases.bg)}, {"ba", vec_json(c.biases.ba)}}},
      {"gravity_dir", vec_json(c.gravity_dir)},
      {"level", level_name(c.level)},
      {"wavelength", c.wavelength},
      {"frequency", c.frequency},
      {"motion", motion_name(c.motion)},
      {"rotation_amplitude_deg", c.rotation_amplitude_deg},
      {"translation_amplitude", c.translation_amplitude},
      {"constant_speed", c.constant_speed},
      {"gain_jitter", c.gain_jitter},
      {"image_margin", c.image_margin},
      {"noiseless", c.noiseless},
      {"imu_mode", c.imu_mode == ImuSynthesis::IntervalAverage ? "interval_average" : "point_sample"},
      {"seed", c.seed},
  };
}

SceneConfig scene_from(const json& j) {
  SceneConfig c;
  const json& cam = j.at("camera");
  c.camera.fx = cam.at("fx");
  c.camera.fy = cam.at("fy");
  c.camera.cx = cam.at("cx");
  c.camera.cy = cam.at("cy");
  c.camera.width = cam.at("width");
  c.camera.height = cam.at("height");
  c.grid = j.at("grid");
  c.sheet.size = j.at("sheet").at("size");
  c.sheet.bowl = j.at("sheet").at("bowl");
  c.camera_height = j.at("camera_height");
  c.imu_rate = j.at("imu_rate");
  c.keyframe_rate = j.at("keyframe_rate");
  c.duration = j.at("duration");
  c.noise.gyro_density = j.at("noise").at("gyro_density");
  c.noise.accel_density = j.at("noise").at("accel_density");
  c.pixel_sigma = j.at("pixel_sigma");
  c.image_noise = j.at("image_noise");
  c.biases.bg = json_vec(j.at("biases").at("bg"));
  c.biases.ba = json_vec(j.at("biases").at("ba"));
  c.gravity_dir = json_vec(j.at("gravity_dir"));
  c.level = parse_level(j.at("level").get<std::string>());
  c.wavelength = j.at("wavelength");
  c.frequency = j.at("frequency");
  c.motion = parse_motion(j.at("motion").get<std::string>());
  c.rotation_amplitude_deg = j.at("rotation_amplitude_deg");
  c.translation_amplitude = j.at("translation_amplitude");
  c.constant_speed = j.at("constant_speed");
  c.gain_jitter = j.at("gain_jitter");
  c.image_margin = j.at("image_margin");
  c.noiseless = j.at("noiseless");
  c.imu_mode = j.at("imu_mode").get<std::string>() == "point_sample" ? ImuSynthesis::PointSample
                                                                      : ImuSynthesis::IntervalAverage;
  c.seed = j.at("seed");
  return c;
}

json read_json(const fs::path& path) {
  std::ifstream f = open_in(path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

fs::path image_stem(const fs::path& dir, std::size_t k) {
  char name[32];
  std::snprintf(name, sizeof(name), "kf_%04zu", k);
  return dir / "images" / name;
}

}  // namespace

void write_imu_csv(const fs::path& path, const std::vector<ImuSample>& imu) {
  auto f = open_out(path);
  f << "t,wx,wy,wz,ax,ay,az\n";
  for (const auto& s : imu) {
    f << s.t << ',' << s.gyro.x() << ',' << s.gyro.y() << ',' << s.gyro.z() << ',' << s.accel.x() << ','
      << s.accel.y() << ',' << s.accel.z() << '\n';
  }
}

std::vector<ImuSample> read_imu_csv(const fs::path& path) {
  std::vector<ImuSample> out;
  for (const auto& r : read_csv(path, 7)) out.push_back({r[0], Vector3d(r[1], r[2], r[3]), Vector3d(r[4], r[5], r[6])});
  return out;
}

void write_tracks_csv(const fs::path& path, const std::vector<double>& times,
                      const std::vector<std::vector<Observation>>& tracks) {
  auto f = open_out(path);
  f << "t,feature_id,u,v\n";
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    for (const auto& o : tracks[k]) f << times[k] << ',' << o.feature_id << ',' << o.z.x() << ',' << o.z.y() << '\n';
  }
}

std::vector<std::vector<Observation>> read_tracks_csv(const fs::path& path, const std::vector<double>& times,
                                                      double pixel_sigma) {
  std::vector<std::vector<Observation>> out(times.size());
  const Matrix2d cov = pixel_sigma * pixel_sigma * Matrix2d::Identity();
  for (const auto& r : read_csv(path, 4)) {
    out[keyframe_of(times, r[0])].push_back({static_cast<int>(std::lround(r[1])), Vector2d(r[2], r[3]), cov});
  }
  return out;
}

void write_tum(const fs::path& path, const Trajectory& traj) {
  auto f = open_out(path);
  for (const auto& x : traj) {
    const auto q = quat(x.R);
    f << x.t << ' ' << x.p.x() << ' ' << x.p.y() << ' ' << x.p.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z()
      << ' ' << q.w() << '\n';
  }
}

Trajectory read_tum(const fs::path& path) {
  std::ifstream f = open_in(path);
  Trajectory out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const auto r = split_numbers(line, ' ', path, n);
    if (r.size() != 8) throw IoError(path.string() + ":" + std::to_string(n) + ": expected 8 fields");
    out.push_back({r[0], from_quat(r[4], r[5], r[6], r[7]), Vector3d(r[1], r[2], r[3])});
  }
  return out;
}

Trajectory to_trajectory(const std::vector<double>& times, const std::vector<RigidState>& states) {
  Trajectory out;
  for (std::size_t k = 0; k < states.size() && k < times.size(); ++k) out.push_back({times[k], states[k].R, states[k].p});
  return out;
}

Trajectory to_trajectory(const std::vector<TimedPose>& poses) {
  Trajectory out;
  for (const auto& x : poses) out.push_back({x.t, x.state.R, x.state.p});
  return out;
}

void write_states_csv(const fs::path& path, const std::vector<double>& times, const std::vector<RigidState>& states) {
  auto f = open_out(path);
  f << "t,px,py,pz,qx,qy,qz,qw,vx,vy,vz\n";
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto& x = states[k];
    const auto q = quat(x.R);
    f << times[k] << ',' << x.p.x() << ',' << x.p.y() << ',' << x.p.z() << ',' << q.x() << ',' << q.y() << ','
      << q.z() << ',' << q.w() << ',' << x.v.x() << ',' << x.v.y() << ',' << x.v.z() << '\n';
  }
}

std::vector<RigidState> read_states_csv(const fs::path& path) {
  std::vector<RigidState> out;
  for (const auto& r : read_csv(path, 11)) {
    RigidState x;
    x.p = Vector3d(r[1], r[2], r[3]);
    x.R = from_quat(r[4], r[5], r[6], r[7]);
    x.v = Vector3d(r[8], r[9], r[10]);
    out.push_back(x);
  }
  return out;
}

void write_nodes_csv(const fs::path& path, const std::vector<double>& times, const std::vector<int>& ids,
                     const std::vector<std::vector<Vector3d>>& nodes) {
  auto f = open_out(path);
  f << "t,node_id,x,y,z\n";
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    for (std::size_t n = 0; n < ids.size(); ++n) {
      const Vector3d& x = nodes[k][n];
      f << times[k] << ',' << ids[n] << ',' << x.x() << ',' << x.y() << ',' << x.z() << '\n';
    }
  }
}

std::vector<std::vector<Vector3d>> read_nodes_csv(const fs::path& path, const std::vector<double>& times,
                                                  const std::vector<int>& ids) {
  std::map<int, std::size_t> index;
  for (std::size_t n = 0; n < ids.size(); ++n) index[ids[n]] = n;
  std::vector<std::vector<Vector3d>> out(times.size(), std::vector<Vector3d>(ids.size(), Vector3d::Zero()));
  for (const auto& r : read_csv(path, 5)) {
    auto it = index.find(static_cast<int>(std::lround(r[1])));
    if (it == index.end()) throw IoError(path.string() + ": unknown node id");
    out[keyframe_of(times, r[0])][it->second] = Vector3d(r[2], r[3], r[4]);
  }
  return out;
}

void write_intensity(const fs::path& stem, const IntensityField& field, bool pgm) {
  fs::create_directories(stem.parent_path());
  {
    std::ofstream f(fs::path(stem).replace_extension(".bin"), std::ios::binary);
    if (!f) throw IoError("cannot write " + stem.string() + ".bin");
    f.write(reinterpret_cast<const char*>(field.values.data()),
            static_cast<std::streamsize>(field.values.size() * sizeof(double)));
  }
  {
    std::ofstream f(fs::path(stem).replace_extension(".json"));
    f << json{{"width", field.width}, {"height", field.height}, {"scale", 1.0}, {"dtype", "float64"}}.dump(2);
  }
  if (pgm) {
    std::ofstream f(fs::path(stem).replace_extension(".pgm"), std::ios::binary);
    f << "P5\n" << field.width << ' ' << field.height << "\n65535\n";
    for (double v : field.values) {
      const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
      const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
      f.write(bytes, 2);
    }
  }
}

IntensityField read_intensity(const fs::path& stem) {
  const json meta = read_json(fs::path(stem).replace_extension(".json"));
  IntensityField field;
  field.width = meta.at("width");
  field.height = meta.at("height");
  const double scale = meta.value("scale", 1.0);
  field.values.resize(static_cast<std::size_t>(field.width) * static_cast<std::size_t>(field.height));
  std::ifstream f(fs::path(stem).replace_extension(".bin"), std::ios::binary);
  if (!f) throw IoError("cannot read " + stem.string() + ".bin");
  f.read(reinterpret_cast<char*>(field.values.data()),
         static_cast<std::streamsize>(field.values.size() * sizeof(double)));
  if (!f) throw IoError(stem.string() + ".bin: truncated");
  for (double& v : field.values) v /= scale;
  return field;
}

IntensityField read_pgm16(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::string magic;
  int maxval = 0;
  IntensityField field;
  f >> magic >> field.width >> field.height >> maxval;
  f.get();
  if (magic != "P5" || maxval != 65535) throw IoError(path.string() + ": expected a 16-bit P5 image");
  field.values.resize(static_cast<std::size_t>(field.width) * static_cast<std::size_t>(field.height));
  for (double& v : field.values) {
    unsigned char b[2];
    f.read(reinterpret_cast<char*>(b), 2);
    v = static_cast<double>((b[0] << 8) | b[1]) / 65535.0;
  }
  if (!f) throw IoError(path.string() + ": truncated");
  return field;
}

std::string scene_config_json(const SceneConfig& cfg) { return scene_json(cfg).dump(2); }

SceneConfig scene_config_from_json(const std::string& text) {
  try {
    return scene_from(json::parse(text));
  } catch (const json::exception& e) {
    throw IoError(std::string("scene config: ") + e.what());
  }
}

void save_scenario(const fs::path& dir, const SimOutput& sim) {
  fs::create_directories(dir);
  write_imu_csv(dir / "imu.csv", sim.imu);
  write_tracks_csv(dir / "tracks.csv", sim.keyframe_times, sim.tracks);
  write_tum(dir / "gt_trajectory.tum", to_trajectory(sim.keyframe_times, sim.gt_states));
  write_states_csv(dir / "gt_states.csv", sim.keyframe_times, sim.gt_states);
  write_nodes_csv(dir / "gt_nodes.csv", sim.keyframe_times, sim.node_ids, sim.gt_nodes);
  for (std::size_t k = 0; k < sim.images.size(); ++k) write_intensity(image_stem(dir, k), sim.images[k]);
  json nodes_ref = json::array();
  for (const auto& x : sim.nodes_ref) nodes_ref.push_back(vec_json(x));
  const json j{
      {"config", scene_json(sim.config)},
      {"keyframe_times", sim.keyframe_times},
      {"node_ids", sim.node_ids},
      {"nodes_ref", nodes_ref},
      {"g_hat", vec_json(sim.g_hat.vector())},
      {"biases", {{"bg", vec_json(sim.biases.bg)}, {"ba", vec_json(sim.biases.ba)}}},
      {"deformation",
       {{"level", level_name(sim.deformation.level)},
        {"amplitude", sim.deformation.amplitude},
        {"wavelength", sim.deformation.wavelength},
        {"frequency", sim.deformation.frequency},
        {"envelope_width", sim.deformation.envelope_width},
        {"center", vec_json(sim.deformation.center)},
        {"seed", sim.deformation.seed}}},
      {"gains", sim.gains},
      {"offsets", sim.offsets},
  };
  auto f = open_out(dir / "scenario.json");
  f << j.dump(2) << '\n';
}

SimOutput load_scenario(const fs::path& dir) {
  const json j = read_json(dir / "scenario.json");
  SimOutput sim;
  try {
    sim.config = scene_from(j.at("config"));
    sim.keyframe_times = j.at("keyframe_times").get<std::vector<double>>();
    sim.node_ids = j.at("node_ids").get<std::vector<int>>();
    for (const auto& x : j.at("nodes_ref")) sim.nodes_ref.push_back(json_vec(x));
    sim.g_hat = GravityDirection(json_vec(j.at("g_hat")));
    sim.biases.bg = json_vec(j.at("biases").at("bg"));
    sim.biases.ba = json_vec(j.at("biases").at("ba"));
    const json& d = j.at("deformation");
    sim.deformation.level = parse_level(d.at("level").get<std::string>());
    sim.deformation.amplitude = d.at("amplitude");
    sim.deformation.wavelength = d.at("wavelength");
    sim.deformation.frequency = d.at("frequency");
    sim.deformation.envelope_width = d.at("envelope_width");
    sim.deformation.center = json_vec(d.at("center"));
    sim.deformation.seed = d.at("seed");
    sim.gains = j.at("gains").get<std::vector<double>>();
    sim.offsets = j.at("offsets").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw IoError((dir / "scenario.json").string() + ": " + e.what());
  }
  sim.imu = read_imu_csv(dir / "imu.csv");
  sim.tracks = read_tracks_csv(dir / "tracks.csv", sim.keyframe_times, sim.config.pixel_sigma);
  sim.gt_states = read_states_csv(dir / "gt_states.csv");
  sim.gt_nodes = read_nodes_csv(dir / "gt_nodes.csv", sim.keyframe_times, sim.node_ids);
  for (std::size_t k = 0; k < sim.keyframe_times.size(); ++k) {
    const fs::path stem = image_stem(dir, k);
    if (fs::exists(fs::path(stem).replace_extension(".bin"))) {
      sim.images.push_back(read_intensity(stem));
    } else if (fs::exists(fs::path(stem).replace_extension(".pgm"))) {
      sim.images.push_back(read_pgm16(fs::path(stem).replace_extension(".pgm")));
    } else {
      sim.images.emplace_back();
    }
  }
  if (sim.gt_states.size() != sim.keyframe_times.size()) throw IoError("gt_states.csv does not match keyframes");
  return sim;
}

RunConfig load_config(const fs::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw IoError(e.what());
  }
  RunConfig c;
  auto& s = c.estimator.solver;
  auto& w = c.estimator.weights;
  try {
    s.max_iterations = tree.get("solver.max_iterations", s.max_iterations);
    s.cost_tolerance = tree.get("solver.cost_tolerance", s.cost_tolerance);
    s.step_tolerance = tree.get("solver.step_tolerance", s.step_tolerance);
    s.initial_damping = tree.get("solver.initial_damping", s.initial_damping);
    s.damping_up = tree.get("solver.damping_up", s.damping_up);
    s.damping_down = tree.get("solver.damping_down", s.damping_down);
    s.lambda_nr = tree.get("solver.lambda_nr", s.lambda_nr);
    s.window_size = tree.get("solver.window_size", s.window_size);
    c.estimator.min_inliers = tree.get("solver.min_inliers", c.estimator.min_inliers);
    c.estimator.inlier_threshold = tree.get("solver.inlier_threshold", c.estimator.inlier_threshold);
    w.huber_delta = tree.get("solver.huber_delta", w.huber_delta);

    s.lambda_nr = tree.get("nr.lambda_nr", s.lambda_nr);
    c.estimator.graph_radius = tree.get("nr.radius", c.estimator.graph_radius);
    c.estimator.graph_sigma = tree.get("nr.sigma", c.estimator.graph_sigma);
    c.estimator.k_elastic = tree.get("nr.k_elastic", c.estimator.k_elastic);
    w.sigma_visc = tree.get("nr.sigma_visc", w.sigma_visc);
    w.sigma_photo = tree.get("nr.sigma_photo", w.sigma_photo);
    w.sigma_node_motion = tree.get("nr.sigma_node_motion", w.sigma_node_motion);

    c.camera.fx = tree.get("camera.fx", c.camera.fx);
    c.camera.fy = tree.get("camera.fy", c.camera.fy);
    c.camera.cx = tree.get("camera.cx", c.camera.cx);
    c.camera.cy = tree.get("camera.cy", c.camera.cy);
    c.camera.width = tree.get("camera.width", c.camera.width);
    c.camera.height = tree.get("camera.height", c.camera.height);
    c.pixel_sigma = tree.get("camera.pixel_sigma", c.pixel_sigma);

    c.noise.gyro_density = tree.get("imu_noise.gyro_density", c.noise.gyro_density);
    c.noise.accel_density = tree.get("imu_noise.accel_density", c.noise.accel_density);
    w.sigma_bias_gyro = tree.get("imu_noise.sigma_bias_gyro", w.sigma_bias_gyro);
    w.sigma_bias_accel = tree.get("imu_noise.sigma_bias_accel", w.sigma_bias_accel);
    w.sigma_gravity = tree.get("imu_noise.sigma_gravity", w.sigma_gravity);

    s.activation_threshold = tree.get("gate.activation_threshold", s.activation_threshold);
    s.activation_window = tree.get("gate.activation_window", s.activation_window);
    c.rank_tolerance = tree.get("gate.rank_tolerance", c.rank_tolerance);
  } catch (const pt::ptree_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  c.estimator.solver.validate();
  c.camera.validate();
  return c;
}

void save_config(const fs::path& path, const RunConfig& c) {
  auto f = open_out(path);
  const auto& s = c.estimator.solver;
  const auto& w = c.estimator.weights;
  f << "[solver]\n"
    << "max_iterations = " << s.max_iterations << "\ncost_tolerance = " << s.cost_tolerance
    << "\nstep_tolerance = " << s.step_tolerance << "\ninitial_damping = " << s.initial_damping
    << "\ndamping_up = " << s.damping_up << "\ndamping_down = " << s.damping_down
    << "\nwindow_size = " << s.window_size << "\nmin_inliers = " << c.estimator.min_inliers
    << "\ninlier_threshold = " << c.estimator.inlier_threshold << "\nhuber_delta = " << w.huber_delta << "\n\n"
    << "[nr]\nlambda_nr = " << s.lambda_nr << "\nradius = " << c.estimator.graph_radius
    << "\nsigma = " << c.estimator.graph_sigma << "\nk_elastic = " << c.estimator.k_elastic
    << "\nsigma_visc = " << w.sigma_visc << "\nsigma_photo = " << w.sigma_photo
    << "\nsigma_node_motion = " << w.sigma_node_motion << "\n\n"
    << "[camera]\nfx = " << c.camera.fx << "\nfy = " << c.camera.fy << "\ncx = " << c.camera.cx
    << "\ncy = " << c.camera.cy << "\nwidth = " << c.camera.width << "\nheight = " << c.camera.height
    << "\npixel_sigma = " << c.pixel_sigma << "\n\n"
    << "[imu_noise]\ngyro_density = " << c.noise.gyro_density << "\naccel_density = " << c.noise.accel_density
    << "\nsigma_bias_gyro = " << w.sigma_bias_gyro << "\nsigma_bias_accel = " << w.sigma_bias_accel
    << "\nsigma_gravity = " << w.sigma_gravity << "\n\n"
    << "[gate]\nactivation_threshold = " << s.activation_threshold
    << "\nactivation_window = " << s.activation_window << "\nrank_tolerance = " << c.rank_tolerance << '\n';
}

void write_graph_json(const fs::path& path, const DeformationGraph& graph, const NodeSet& prev, const NodeSet& curr) {
  json nodes = json::array(), edges = json::array();
  for (const auto& n : graph.nodes) {
    auto ip = prev.find(n.id);
    auto ic = curr.find(n.id);
    nodes.push_back({{"id", n.id},
                     {"x0", vec_json(n.x0)},
                     {"x_prev", vec_json(ip != prev.end() ? ip->second : n.x_prev)},
                     {"x_curr", vec_json(ic != curr.end() ? ic->second : n.x_curr)}});
  }
  for (const auto& e : graph.edges) edges.push_back({{"i", e.i}, {"j", e.j}, {"d0", e.d0}, {"b", e.b}});
  auto f = open_out(path);
  f << json{{"sigma", graph.sigma}, {"radius", graph.radius}, {"k_elastic", graph.k_elastic}, {"nodes", nodes},
            {"edges", edges}}
           .dump(2)
    << '\n';
}

void write_diagnostics_csv(const fs::path& path, const std::vector<FrameLog>& frames) {
  auto f = open_out(path);
  f << "t,cost,iters,rho_k,nr_active,num_nodes\n";
  for (const auto& x : frames) {
    f << x.t << ',' << x.cost << ',' << x.iterations << ',' << x.rho << ',' << (x.nr_active ? 1 : 0) << ','
      << x.num_nodes << '\n';
  }
}

}  // namespace defvins
