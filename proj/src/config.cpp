#include "densea/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace densea {

using nlohmann::json;

namespace {

const std::set<std::string>& known_modes() {
  static const std::set<std::string> m{"adaptive", "linear",    "none",
                                       "baseline1", "baseline2", "baseline3"};
  return m;
}

[[noreturn]] void bad_type(const std::string& path, const char* want) {
  throw ConfigError("field " + path + " must be " + want);
}

void reject_unknown(const json& j, const std::string& scope,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown key " + scope + key);
  }
}

void get_int(const json& j, const std::string& scope, const char* key, int* out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) bad_type(scope + key, "an integer");
  *out = v.get<int>();
}

void get_u64(const json& j, const std::string& scope, const char* key, uint64_t* out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
    bad_type(scope + key, "a non-negative integer");
  *out = v.get<uint64_t>();
}

void get_double(const json& j, const std::string& scope, const char* key, double* out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) bad_type(scope + key, "a number");
  *out = v.get<double>();
}

void get_bool(const json& j, const std::string& scope, const char* key, bool* out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_boolean()) bad_type(scope + key, "a boolean");
  *out = v.get<bool>();
}

void get_string(const json& j, const std::string& scope, const char* key, std::string* out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_string()) bad_type(scope + key, "a string");
  *out = v.get<std::string>();
}

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("top level must be a JSON object");
  reject_unknown(j, "", {"schema_version", "data", "model", "training"});

  ExperimentConfig c;
  get_int(j, "", "schema_version", &c.schema_version);
  if (c.schema_version != 1)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));

  if (j.contains("data")) {
    const json& d = j.at("data");
    if (!d.is_object()) bad_type("data", "an object");
    reject_unknown(d, "data.",
                   {"n_videos", "n_classes", "feature_dim", "fps", "noise_sigma",
                    "oracle_features", "duration_dependence", "data_seed", "observed_fraction",
                    "predicted_fraction", "train_fraction", "full_fraction"});
    get_int(d, "data.", "n_videos", &c.n_videos);
    get_int(d, "data.", "n_classes", &c.n_classes);
    get_int(d, "data.", "feature_dim", &c.feature_dim);
    get_double(d, "data.", "fps", &c.fps);
    get_double(d, "data.", "noise_sigma", &c.noise_sigma);
    get_bool(d, "data.", "oracle_features", &c.oracle_features);
    get_bool(d, "data.", "duration_dependence", &c.duration_dependence);
    get_u64(d, "data.", "data_seed", &c.data_seed);
    get_double(d, "data.", "observed_fraction", &c.observed_fraction);
    get_double(d, "data.", "predicted_fraction", &c.predicted_fraction);
    get_double(d, "data.", "train_fraction", &c.train_fraction);
    get_double(d, "data.", "full_fraction", &c.full_fraction);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) bad_type("model", "an object");
    reject_unknown(m, "model.",
                   {"hidden_dim", "encoding_dim", "embed_dim", "cond_embed_dim", "max_steps",
                    "attention", "raw_linear_duration"});
    get_int(m, "model.", "hidden_dim", &c.hidden_dim);
    get_int(m, "model.", "encoding_dim", &c.encoding_dim);
    get_int(m, "model.", "embed_dim", &c.embed_dim);
    get_int(m, "model.", "cond_embed_dim", &c.cond_embed_dim);
    get_int(m, "model.", "max_steps", &c.max_steps);
    get_bool(m, "model.", "attention", &c.attention);
    get_bool(m, "model.", "raw_linear_duration", &c.raw_linear_duration);
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    if (!t.is_object()) bad_type("training", "an object");
    reject_unknown(t, "training.",
                   {"mode", "seed", "n1", "n2", "n3", "batch_size", "lr", "momentum", "clip_norm",
                    "val_fraction", "cond_subset_fraction"});
    get_string(t, "training.", "mode", &c.mode);
    get_u64(t, "training.", "seed", &c.seed);
    get_int(t, "training.", "n1", &c.n1);
    get_int(t, "training.", "n2", &c.n2);
    get_int(t, "training.", "n3", &c.n3);
    get_int(t, "training.", "batch_size", &c.batch_size);
    get_double(t, "training.", "lr", &c.lr);
    get_double(t, "training.", "momentum", &c.momentum);
    get_double(t, "training.", "clip_norm", &c.clip_norm);
    get_double(t, "training.", "val_fraction", &c.val_fraction);
    get_double(t, "training.", "cond_subset_fraction", &c.cond_subset_fraction);
  }

  validate_config(c);
  return c;
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  if (c.n_videos < 1) throw ConfigError("data.n_videos must be >= 1");
  if (c.n_classes < 2) throw ConfigError("data.n_classes must be >= 2");
  if (c.feature_dim < 1) throw ConfigError("data.feature_dim must be >= 1");
  if (!(c.fps > 0.0)) throw ConfigError("data.fps must be positive");
  if (c.noise_sigma < 0.0) throw ConfigError("data.noise_sigma must be >= 0");
  if (!(c.observed_fraction > 0.0) || c.observed_fraction >= 1.0)
    throw ConfigError("data.observed_fraction must be in (0, 1)");
  if (!(c.predicted_fraction > 0.0) || c.observed_fraction + c.predicted_fraction > 1.0)
    throw ConfigError("data.predicted_fraction must be positive with observed+predicted <= 1");
  if (!(c.train_fraction > 0.0) || c.train_fraction > 1.0)
    throw ConfigError("data.train_fraction must be in (0, 1]");
  if (!(c.full_fraction > 0.0) || c.full_fraction >= 1.0)
    throw ConfigError("data.full_fraction must be in (0, 1)");
  if (!known_modes().count(c.mode))
    throw ConfigError("training.mode \"" + c.mode +
                      "\" is not one of adaptive/linear/none/baseline1/baseline2/baseline3");
  // shape fields are validated by the backbone itself
  validate_backbone(backbone_of(c));
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("can't open config: " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError("" + path + ": " + e.what());
  }
  return parse_config(j);
}

void save_config(const ExperimentConfig& c, const std::string& path) {
  json j;
  j["schema_version"] = c.schema_version;
  json d;
  d["n_videos"] = c.n_videos;
  d["n_classes"] = c.n_classes;
  d["feature_dim"] = c.feature_dim;
  d["fps"] = c.fps;
  d["noise_sigma"] = c.noise_sigma;
  d["oracle_features"] = c.oracle_features;
  d["duration_dependence"] = c.duration_dependence;
  d["data_seed"] = c.data_seed;
  d["observed_fraction"] = c.observed_fraction;
  d["predicted_fraction"] = c.predicted_fraction;
  d["train_fraction"] = c.train_fraction;
  d["full_fraction"] = c.full_fraction;
  j["data"] = d;
  json m;
  m["hidden_dim"] = c.hidden_dim;
  m["encoding_dim"] = c.encoding_dim;
  m["embed_dim"] = c.embed_dim;
  m["cond_embed_dim"] = c.cond_embed_dim;
  m["max_steps"] = c.max_steps;
  m["attention"] = c.attention;
  m["raw_linear_duration"] = c.raw_linear_duration;
  j["model"] = m;
  json t;
  t["mode"] = c.mode;
  t["seed"] = c.seed;
  t["n1"] = c.n1;
  t["n2"] = c.n2;
  t["n3"] = c.n3;
  t["batch_size"] = c.batch_size;
  t["lr"] = c.lr;
  t["momentum"] = c.momentum;
  t["clip_norm"] = c.clip_norm;
  t["val_fraction"] = c.val_fraction;
  t["cond_subset_fraction"] = c.cond_subset_fraction;
  j["training"] = t;
  std::ofstream f(path);
  if (!f) throw IoError("can't write config: " + path);
  f << j.dump(1) << "\n";
}

GrammarConfig grammar_of(const ExperimentConfig& c) {
  return make_grammar(c.n_classes, c.feature_dim, c.fps, c.noise_sigma, c.oracle_features,
                      c.duration_dependence, c.data_seed);
}

BackboneConfig backbone_of(const ExperimentConfig& c) {
  BackboneConfig b;
  b.feature_dim = c.feature_dim;
  b.n_classes = c.n_classes;
  b.hidden_dim = c.hidden_dim;
  b.encoding_dim = c.encoding_dim;
  b.embed_dim = c.embed_dim;
  b.cond_embed_dim = c.cond_embed_dim;
  b.max_steps = c.max_steps;
  b.attention = c.attention;
  b.raw_linear_duration = c.raw_linear_duration;
  b.conditional = false;
  return b;
}

TrainOptions train_options_of(const ExperimentConfig& c) {
  TrainOptions base = c.mode == "adaptive" ? adaptive_defaults() : linear_defaults();
  TrainOptions o = base;
  o.backbone = backbone_of(c);
  o.seed = c.seed;
  if (c.n1 >= 0) o.n1 = c.n1;
  if (c.n2 >= 0) o.n2 = c.n2;
  if (c.n3 >= 0) o.n3 = c.n3;
  o.batch_size = c.batch_size;
  o.lr = c.lr;
  o.momentum = c.momentum;
  o.clip_norm = c.clip_norm;
  o.val_fraction = c.val_fraction;
  if (c.cond_subset_fraction > 0.0) o.cond_subset_fraction = c.cond_subset_fraction;
  return o;
}

}  // namespace densea
