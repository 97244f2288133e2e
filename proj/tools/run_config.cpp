#include "run_config.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <type_traits>

#include "drum/errors.hpp"

namespace drum::cli {

using nlohmann::json;

void RunConfig::validate() const {
  sensor.validate();
  toy.validate();
  train.validate();
  sampler.validate();
}

namespace {

template <class T>
constexpr ValueKind kind_of() {
  if constexpr (std::is_same_v<T, bool>) {
    return ValueKind::boolean;
  } else if constexpr (std::is_floating_point_v<T>) {
    return ValueKind::real;
  } else {
    return ValueKind::integer;
  }
}

template <class T>
T checked(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw InvalidArgument("expected true or false");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw InvalidArgument("expected a number");
  } else {
    if (!v.is_number_integer()) throw InvalidArgument("expected an integer");
    if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw InvalidArgument("expected a non-negative integer");
    if (v.get<std::uint64_t>() > std::numeric_limits<T>::max()) throw InvalidArgument("integer out of range");
  }
  return v.get<T>();
}

template <class T>
ConfigKey number(std::string key, std::string help, T RunConfig::*member) {
  return {std::move(key), kind_of<T>(), std::move(help),
          [member](RunConfig& c, const json& v) { c.*member = checked<T>(v); },
          [member](const RunConfig& c) { return json(c.*member); }};
}

template <class S, class T>
ConfigKey nested(std::string key, std::string help, S RunConfig::*outer, T S::*inner) {
  return {std::move(key), kind_of<T>(), std::move(help),
          [outer, inner](RunConfig& c, const json& v) { (c.*outer).*inner = checked<T>(v); },
          [outer, inner](const RunConfig& c) { return json((c.*outer).*inner); }};
}

template <class E>
ConfigKey choice(std::string key, std::string help, std::map<std::string, E> names,
                 std::function<E&(RunConfig&)> field) {
  return {std::move(key), ValueKind::text, std::move(help),
          [names, field](RunConfig& c, const json& v) {
            if (!v.is_string()) throw InvalidArgument("expected a string");
            const auto it = names.find(v.get<std::string>());
            if (it == names.end()) {
              std::string allowed;
              for (const auto& [n, _] : names) allowed += (allowed.empty() ? "" : "|") + n;
              throw InvalidArgument("expected one of " + allowed);
            }
            field(c) = it->second;
          },
          [names, field](const RunConfig& c) {
            const E value = field(const_cast<RunConfig&>(c));
            for (const auto& [n, e] : names) {
              if (e == value) return json(n);
            }
            return json();
          }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back(nested("sensor.height", "beam count (image rows)", &RunConfig::sensor, &SensorIntrinsics::height));
  k.push_back(nested("sensor.width", "azimuth bins (image columns)", &RunConfig::sensor, &SensorIntrinsics::width));
  k.push_back(nested("sensor.fov-up", "upper field of view, degrees", &RunConfig::sensor, &SensorIntrinsics::fov_up));
  k.push_back(nested("sensor.fov-down", "lower field of view, degrees", &RunConfig::sensor, &SensorIntrinsics::fov_down));
  k.push_back(nested("sensor.max-range", "maximum range, meters", &RunConfig::sensor, &SensorIntrinsics::max_range));

  k.push_back(number("toy.n-sim", "number of sim-domain scenes", &RunConfig::toy_sim_count));
  k.push_back(number("toy.n-real", "number of real-domain scenes", &RunConfig::toy_real_count));
  k.push_back(nested("toy.n-boxes", "boxes per scene", &RunConfig::toy, &ToySceneConfig::n_boxes));
  k.push_back(nested("toy.drop-base", "base raydrop probability", &RunConfig::toy, &ToySceneConfig::drop_base));
  k.push_back(nested("toy.drop-glass", "raydrop probability on glass and grazing returns", &RunConfig::toy,
                     &ToySceneConfig::drop_glass));
  k.push_back(nested("toy.glass-fraction", "probability that a box is glass", &RunConfig::toy,
                     &ToySceneConfig::glass_fraction));
  k.push_back(nested("toy.seed", "corpus seed", &RunConfig::toy, &ToySceneConfig::seed));
  k.push_back(nested("toy.sensor-height", "sensor height above ground, meters", &RunConfig::toy,
                     &ToySceneConfig::sensor_height));
  k.push_back(nested("toy.enclosure", "surround the scene with a cylindrical wall", &RunConfig::toy,
                     &ToySceneConfig::enclosure));
  k.push_back(nested("toy.enclosure-radius", "wall radius, meters", &RunConfig::toy, &ToySceneConfig::enclosure_radius));

  k.push_back(nested("train.steps", "optimizer steps", &RunConfig::train, &TrainConfig::steps));
  k.push_back(nested("train.batch", "images per step", &RunConfig::train, &TrainConfig::batch));
  k.push_back(nested("train.lr", "learning rate", &RunConfig::train, &TrainConfig::learning_rate));
  k.push_back(nested("train.momentum", "SGD momentum", &RunConfig::train, &TrainConfig::momentum));
  k.push_back(nested("train.grad-clip", "global gradient-norm clip (<= 0 disables)", &RunConfig::train,
                     &TrainConfig::grad_clip));
  k.push_back(nested("train.seed", "training seed", &RunConfig::train, &TrainConfig::seed));
  k.push_back(nested("train.holdout-fraction", "held-out share of the dataset", &RunConfig::train,
                     &TrainConfig::holdout_fraction));
  k.push_back(nested("train.holdout-draws", "fixed noise draws per held-out image", &RunConfig::train,
                     &TrainConfig::holdout_draws));

  k.push_back(nested("sampler.t-init", "SDEdit start time", &RunConfig::sampler, &SamplerConfig::t_init));
  k.push_back(nested("sampler.num-steps", "uniform grid steps over [0, 1]", &RunConfig::sampler,
                     &SamplerConfig::num_steps));
  k.push_back(nested("sampler.cycles", "resampling cycles per step", &RunConfig::sampler,
                     &SamplerConfig::resample_cycles));
  k.push_back(nested("sampler.seed", "translation seed", &RunConfig::sampler, &SamplerConfig::seed));

  auto guidance = [](RunConfig& c) -> GuidanceConfig& { return c.sampler.guidance; };
  k.push_back({"guidance.eta", ValueKind::real, "raydrop mask threshold on normalized range",
               [guidance](RunConfig& c, const json& v) {
                 guidance(c).eta = checked<double>(v);
               },
               [](const RunConfig& c) { return json(c.sampler.guidance.eta); }});
  k.push_back({"guidance.scale", ValueKind::real, "guidance strength",
               [guidance](RunConfig& c, const json& v) {
                 guidance(c).guidance_scale = checked<double>(v);
               },
               [](const RunConfig& c) { return json(c.sampler.guidance.guidance_scale); }});
  k.push_back(choice<JacobianMode>(
      "guidance.jacobian", "exact-vjp or identity-approx",
      {{"exact-vjp", JacobianMode::exact_vjp}, {"identity-approx", JacobianMode::identity_approx}},
      [](RunConfig& c) -> JacobianMode& { return c.sampler.guidance.jacobian_mode; }));
  k.push_back(choice<MaskMode>("guidance.mask", "progressive or none",
                               {{"progressive", MaskMode::progressive}, {"none", MaskMode::none}},
                               [](RunConfig& c) -> MaskMode& { return c.sampler.guidance.mask_mode; }));
  return k;
}

const ConfigKey* find_key(const std::string& key) {
  for (const ConfigKey& k : config_keys()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (const auto& [name, value] : node.items()) {
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    if (value.is_object()) {
      flatten(value, key, out);
    } else {
      out.emplace_back(key, value);
    }
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_value(RunConfig& cfg, const std::string& key, const json& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw InvalidArgument("unknown config key '" + key + "'");
  try {
    k->set(cfg, value);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("config key '" + key + "': " + e.what());
  }
}

void apply_text(RunConfig& cfg, const std::string& key, const std::string& text) {
  const ConfigKey* k = find_key(key);
  if (!k) throw InvalidArgument("unknown config key '" + key + "'");
  json value;
  try {
    switch (k->kind) {
      case ValueKind::text:
        value = text;
        break;
      case ValueKind::boolean:
        if (text == "true" || text == "1") {
          value = true;
        } else if (text == "false" || text == "0") {
          value = false;
        } else {
          throw InvalidArgument("expected true or false");
        }
        break;
      case ValueKind::real:
      case ValueKind::integer:
        value = json::parse(text);
        break;
    }
  } catch (const json::exception&) {
    throw InvalidArgument("config key '" + key + "': cannot parse '" + text + "'");
  }
  apply_value(cfg, key, value);
}

void apply_json(RunConfig& cfg, const json& doc) {
  if (!doc.is_object()) throw InvalidArgument("config file must hold a JSON object");
  std::vector<std::pair<std::string, json>> entries;
  flatten(doc, "", entries);
  for (const auto& [key, value] : entries) apply_value(cfg, key, value);
}

void apply_json_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config file " + path + ": " + e.what());
  }
  apply_json(cfg, doc);
}

json to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const ConfigKey& k : config_keys()) {
    const auto dot = k.key.find('.');
    out[k.key.substr(0, dot)][k.key.substr(dot + 1)] = k.get(cfg);
  }
  return out;
}

}  // namespace drum::cli
