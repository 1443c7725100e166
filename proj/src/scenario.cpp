#include <coverage/scenario.hpp>

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <utility>

namespace coverage {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& constraint) {
  throw ScenarioError(path + ": " + constraint);
}

const Json& member(const Json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) fail(path, "must be an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing");
  return *it;
}

const Json* optional_member(const Json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) fail(path, "must be an object");
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "must be a number");
  return v.get<double>();
}

int as_int(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "must be an integer");
  return v.get<int>();
}

std::uint64_t as_seed(const Json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    fail(path, "must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

bool as_bool(const Json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "must be a boolean");
  return v.get<bool>();
}

Vec2 as_vec2(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "must be an array of 2 numbers");
  return Vec2(as_number(v[0], path + "[0]"), as_number(v[1], path + "[1]"));
}

Vec3 as_vec3(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) fail(path, "must be an array of 3 numbers");
  return Vec3(as_number(v[0], path + "[0]"), as_number(v[1], path + "[1]"),
              as_number(v[2], path + "[2]"));
}

AmbientMatrix as_matrix(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) fail(path, "must be a 3x3 array of numbers");
  AmbientMatrix m;
  for (int r = 0; r < 3; ++r) {
    const Json& row = v[static_cast<std::size_t>(r)];
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || row.size() != 3) fail(row_path, "must be an array of 3 numbers");
    for (int c = 0; c < 3; ++c)
      m(r, c) = as_number(row[static_cast<std::size_t>(c)], row_path + "[" + std::to_string(c) + "]");
  }
  return m;
}

WeightRule as_weight_rule(const Json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "must be \"uniform\" or \"vertex_ratio\"");
  const std::string s = v.get<std::string>();
  if (s == "uniform") return WeightRule::Uniform;
  if (s == "vertex_ratio") return WeightRule::VertexRatio;
  fail(path, "must be \"uniform\" or \"vertex_ratio\"");
}

template <class Make>
auto checked(const std::string& path, Make&& make) {
  try {
    return make();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

SensorConfig parse_sensor(const Json& v, const std::string& path, Rotation& initial) {
  SensorConfig c;
  c.id = as_int(member(v, path, "id"), path + ".id");
  if (c.id < 0) fail(path + ".id", "must be nonnegative");
  c.position = as_vec3(member(v, path, "position"), path + ".position");
  c.focal_length = as_number(member(v, path, "focal_length"), path + ".focal_length");
  if (!(c.focal_length > 0.0)) fail(path + ".focal_length", "must be positive");
  c.plane_width = as_number(member(v, path, "plane_width"), path + ".plane_width");
  if (!(c.plane_width > 0.0)) fail(path + ".plane_width", "must be positive");
  c.plane_height = as_number(member(v, path, "plane_height"), path + ".plane_height");
  if (!(c.plane_height > 0.0)) fail(path + ".plane_height", "must be positive");
  c.cols = as_int(member(v, path, "cols"), path + ".cols");
  if (c.cols < 1) fail(path + ".cols", "must be at least 1");
  c.rows = as_int(member(v, path, "rows"), path + ".rows");
  if (c.rows < 1) fail(path + ".rows", "must be at least 1");
  if (const Json* rule = optional_member(v, path, "weight_rule"))
    c.weight_rule = as_weight_rule(*rule, path + ".weight_rule");
  if (const Json* axes = optional_member(v, path, "axes")) {
    const std::string axes_path = path + ".axes";
    if (!axes->is_array() || axes->empty() || axes->size() > 2)
      fail(axes_path, "must be an array of 1 or 2 unit axes");
    checked(axes_path, [&] {
      if (axes->size() == 1) {
        c.axes = AxisPair(as_vec3((*axes)[0], axes_path + "[0]"));
      } else {
        c.axes = AxisPair(as_vec3((*axes)[0], axes_path + "[0]"),
                          as_vec3((*axes)[1], axes_path + "[1]"));
      }
      return 0;
    });
  }
  if (const Json* rot = optional_member(v, path, "initial_rotation")) {
    const AmbientMatrix m = as_matrix(*rot, path + ".initial_rotation");
    initial = checked(path + ".initial_rotation", [&] { return Rotation(m); });
  } else {
    initial = Rotation();
  }
  return c;
}

TruthFrame parse_frame(const Json& v, const std::string& path) {
  TruthFrame frame;
  const Json& blobs = member(v, path, "blobs");
  if (!blobs.is_array()) fail(path + ".blobs", "must be an array");
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    const std::string blob_path = path + ".blobs[" + std::to_string(b) + "]";
    const Json& bv = blobs[b];
    Blob blob;
    blob.center = as_vec2(member(bv, blob_path, "center"), blob_path + ".center");
    blob.radius = as_number(member(bv, blob_path, "radius"), blob_path + ".radius");
    if (!(blob.radius > 0.0)) fail(blob_path + ".radius", "must be positive");
    blob.importance = as_number(member(bv, blob_path, "importance"), blob_path + ".importance");
    if (!(blob.importance >= 0.0)) fail(blob_path + ".importance", "must be nonnegative");
    frame.blobs.push_back(blob);
  }
  return frame;
}

DescentConfig parse_descent(const Json& v, const std::string& path) {
  DescentConfig config;
  if (const Json* rule = optional_member(v, path, "rule")) {
    if (!rule->is_string()) fail(path + ".rule", "must be \"armijo\" or \"fixed\"");
    const std::string s = rule->get<std::string>();
    if (s == "armijo") {
      ArmijoStep armijo;
      if (const Json* x = optional_member(v, path, "initial_angle")) {
        armijo.initial_angle = as_number(*x, path + ".initial_angle");
        if (!(armijo.initial_angle > 0.0)) fail(path + ".initial_angle", "must be positive");
      }
      if (const Json* x = optional_member(v, path, "shrink")) {
        armijo.shrink = as_number(*x, path + ".shrink");
        if (!(armijo.shrink > 0.0 && armijo.shrink < 1.0))
          fail(path + ".shrink", "must be in (0, 1)");
      }
      if (const Json* x = optional_member(v, path, "slope")) {
        armijo.slope = as_number(*x, path + ".slope");
        if (!(armijo.slope > 0.0 && armijo.slope < 1.0)) fail(path + ".slope", "must be in (0, 1)");
      }
      if (const Json* x = optional_member(v, path, "max_backtracks")) {
        armijo.max_backtracks = as_int(*x, path + ".max_backtracks");
        if (armijo.max_backtracks < 1) fail(path + ".max_backtracks", "must be at least 1");
      }
      config.rule = armijo;
    } else if (s == "fixed") {
      FixedStep fixed;
      if (const Json* x = optional_member(v, path, "fixed_step")) {
        fixed.step = as_number(*x, path + ".fixed_step");
        if (!(fixed.step > 0.0)) fail(path + ".fixed_step", "must be positive");
      }
      config.rule = fixed;
    } else {
      fail(path + ".rule", "must be \"armijo\" or \"fixed\"");
    }
  }
  if (const Json* x = optional_member(v, path, "grad_tol")) {
    config.grad_tol = as_number(*x, path + ".grad_tol");
    if (!(config.grad_tol > 0.0)) fail(path + ".grad_tol", "must be positive");
  }
  if (const Json* x = optional_member(v, path, "max_iters")) {
    config.max_iters = as_int(*x, path + ".max_iters");
    if (config.max_iters < 1) fail(path + ".max_iters", "must be at least 1");
  }
  if (const Json* x = optional_member(v, path, "steps_per_frame")) {
    config.steps_per_frame = as_int(*x, path + ".steps_per_frame");
    if (config.steps_per_frame < 1) fail(path + ".steps_per_frame", "must be at least 1");
  }
  if (const Json* x = optional_member(v, path, "reorthonormalize_every")) {
    config.reorthonormalize_every = as_int(*x, path + ".reorthonormalize_every");
    if (config.reorthonormalize_every < 0)
      fail(path + ".reorthonormalize_every", "must be nonnegative");
  }
  if (const Json* x = optional_member(v, path, "max_sweep_halvings")) {
    config.max_sweep_halvings = as_int(*x, path + ".max_sweep_halvings");
    if (config.max_sweep_halvings < 0) fail(path + ".max_sweep_halvings", "must be nonnegative");
  }
  return config;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(std::string("scenario: not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail("scenario", "must be a JSON object");

  Scenario s;
  if (const Json* seed = optional_member(root, "scenario", "seed"))
    s.seed = as_seed(*seed, "seed");

  const Json& env = member(root, "scenario", "environment");
  s.gamma = as_number(member(env, "environment", "gamma"), "environment.gamma");
  const Json& mission = member(env, "environment", "mission");
  if (!mission.is_array() || mission.size() < 3)
    fail("environment.mission", "must be an array of 3+ vertices");
  for (std::size_t k = 0; k < mission.size(); ++k)
    s.mission.push_back(as_vec2(mission[k], "environment.mission[" + std::to_string(k) + "]"));
  if (const Json* pb = optional_member(env, "environment", "phi_bar")) {
    s.phi_bar = as_number(*pb, "environment.phi_bar");
    if (!(s.phi_bar > 0.0)) fail("environment.phi_bar", "must be positive");
  }
  checked("environment", [&] { return make_environment(s.gamma, s.mission, s.phi_bar); });

  const Json& obj = member(root, "scenario", "objective");
  s.w_diag = as_vec3(member(obj, "objective", "w_diag"), "objective.w_diag");
  for (int k = 0; k < 3; ++k)
    if (!(s.w_diag[k] >= 0.0)) fail("objective.w_diag", "entries must be nonnegative");
  if (const Json* pb = optional_member(obj, "objective", "psi_bar")) {
    s.psi_bar = as_number(*pb, "objective.psi_bar");
    if (!(s.psi_bar > 0.0)) fail("objective.psi_bar", "must be positive");
  }
  if (const Json* m = optional_member(obj, "objective", "components")) {
    s.components = as_int(*m, "objective.components");
    if (s.components < 1) fail("objective.components", "must be at least 1");
  }
  if (const Json* stride = optional_member(obj, "objective", "eval_stride")) {
    s.eval_stride = as_int(*stride, "objective.eval_stride");
    if (s.eval_stride < 1) fail("objective.eval_stride", "must be at least 1");
  }

  const Json& sensors = member(root, "scenario", "sensors");
  if (!sensors.is_array() || sensors.empty()) fail("sensors", "must be a nonempty array");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const std::string path = "sensors[" + std::to_string(i) + "]";
    Rotation initial;
    SensorConfig c = parse_sensor(sensors[i], path, initial);
    c.eval_stride = s.eval_stride;
    checked(path, [&] { return make_sensor(c); });
    s.sensors.push_back(std::move(c));
    s.initial.push_back(initial);
  }
  for (std::size_t i = 0; i < s.sensors.size(); ++i)
    for (std::size_t j = i + 1; j < s.sensors.size(); ++j)
      if (s.sensors[i].id == s.sensors[j].id)
        fail("sensors[" + std::to_string(j) + "].id", "duplicates an earlier sensor id");

  if (const Json* descent = optional_member(root, "scenario", "descent"))
    s.descent = parse_descent(*descent, "descent");

  const Json& movie = member(root, "scenario", "movie");
  if (const Json* b = optional_member(movie, "movie", "binarize"))
    s.movie.synth.binarize = as_bool(*b, "movie.binarize");
  if (const Json* t = optional_member(movie, "movie", "threshold")) {
    s.movie.synth.threshold = as_number(*t, "movie.threshold");
    if (!(s.movie.synth.threshold > 0.0)) fail("movie.threshold", "must be positive");
  }
  if (const Json* n = optional_member(movie, "movie", "noise_sigma")) {
    s.movie.synth.noise_sigma = as_number(*n, "movie.noise_sigma");
    if (!(s.movie.synth.noise_sigma >= 0.0)) fail("movie.noise_sigma", "must be nonnegative");
  }
  const Json& frames = member(movie, "movie", "frames");
  if (!frames.is_array() || frames.empty()) fail("movie.frames", "must be a nonempty array");
  for (std::size_t f = 0; f < frames.size(); ++f)
    s.movie.frames.push_back(parse_frame(frames[f], "movie.frames[" + std::to_string(f) + "]"));

  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("scenario: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str());
}

std::string serialize_scenario(const Scenario& s) {
  Json root;
  root["seed"] = s.seed;

  Json env;
  env["gamma"] = s.gamma;
  Json mission = Json::array();
  for (const Vec2& v : s.mission) mission.push_back({v.x(), v.y()});
  env["mission"] = std::move(mission);
  env["phi_bar"] = s.phi_bar;
  root["environment"] = std::move(env);

  Json obj;
  obj["w_diag"] = {s.w_diag.x(), s.w_diag.y(), s.w_diag.z()};
  obj["psi_bar"] = s.psi_bar;
  obj["components"] = s.components;
  obj["eval_stride"] = s.eval_stride;
  root["objective"] = std::move(obj);

  Json sensors = Json::array();
  for (std::size_t i = 0; i < s.sensors.size(); ++i) {
    const SensorConfig& c = s.sensors[i];
    Json sv;
    sv["id"] = c.id;
    sv["position"] = {c.position.x(), c.position.y(), c.position.z()};
    sv["focal_length"] = c.focal_length;
    sv["plane_width"] = c.plane_width;
    sv["plane_height"] = c.plane_height;
    sv["cols"] = c.cols;
    sv["rows"] = c.rows;
    sv["weight_rule"] = c.weight_rule == WeightRule::Uniform ? "uniform" : "vertex_ratio";
    if (c.axes) {
      Json axes = Json::array();
      axes.push_back({c.axes->primary().x(), c.axes->primary().y(), c.axes->primary().z()});
      if (!c.axes->single_axis())
        axes.push_back(
            {c.axes->secondary().x(), c.axes->secondary().y(), c.axes->secondary().z()});
      sv["axes"] = std::move(axes);
    }
    const AmbientMatrix& m = s.initial[i].matrix();
    Json rot = Json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({m(r, 0), m(r, 1), m(r, 2)});
    sv["initial_rotation"] = std::move(rot);
    sensors.push_back(std::move(sv));
  }
  root["sensors"] = std::move(sensors);

  Json descent;
  if (const ArmijoStep* armijo = std::get_if<ArmijoStep>(&s.descent.rule)) {
    descent["rule"] = "armijo";
    descent["initial_angle"] = armijo->initial_angle;
    descent["shrink"] = armijo->shrink;
    descent["slope"] = armijo->slope;
    descent["max_backtracks"] = armijo->max_backtracks;
  } else {
    descent["rule"] = "fixed";
    descent["fixed_step"] = std::get<FixedStep>(s.descent.rule).step;
  }
  descent["grad_tol"] = s.descent.grad_tol;
  descent["max_iters"] = s.descent.max_iters;
  descent["steps_per_frame"] = s.descent.steps_per_frame;
  descent["reorthonormalize_every"] = s.descent.reorthonormalize_every;
  descent["max_sweep_halvings"] = s.descent.max_sweep_halvings;
  root["descent"] = std::move(descent);

  Json movie;
  movie["binarize"] = s.movie.synth.binarize;
  movie["threshold"] = s.movie.synth.threshold;
  movie["noise_sigma"] = s.movie.synth.noise_sigma;
  Json frames = Json::array();
  for (const TruthFrame& frame : s.movie.frames) {
    Json blobs = Json::array();
    for (const Blob& b : frame.blobs) {
      Json bv;
      bv["center"] = {b.center.x(), b.center.y()};
      bv["radius"] = b.radius;
      bv["importance"] = b.importance;
      blobs.push_back(std::move(bv));
    }
    Json fv;
    fv["blobs"] = std::move(blobs);
    frames.push_back(std::move(fv));
  }
  movie["frames"] = std::move(frames);
  root["movie"] = std::move(movie);

  return root.dump(2) + "\n";
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ScenarioError("scenario: cannot write " + path.string());
  out << serialize_scenario(scenario);
}

Environment environment_of(const Scenario& scenario) {
  return make_environment(scenario.gamma, scenario.mission, scenario.phi_bar);
}

ObjectiveParams objective_params_of(const Scenario& scenario) {
  return make_objective_params(scenario.w_diag.asDiagonal());
}

FitOptions fit_options_of(const Scenario& scenario) {
  FitOptions fit;
  fit.components = scenario.components;
  fit.psi_bar = scenario.psi_bar;
  fit.phi_bar = scenario.phi_bar;
  return fit;
}

std::vector<Sensor> build_sensors(const Scenario& scenario) {
  std::vector<Sensor> sensors;
  sensors.reserve(scenario.sensors.size());
  for (const SensorConfig& c : scenario.sensors) sensors.push_back(make_sensor(c));
  return sensors;
}

}  // namespace coverage
