#include "lossdyn/toy_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lossdyn/error.hpp"

namespace lossdyn {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw Error(Errc::config, "config." + field + ": " + what);
}

json to_json_object(const ToyConfig& c) {
  json j;
  j["feature_dim"] = c.feature_dim;
  j["num_classes"] = c.num_classes;
  j["probe_size"] = c.probe_size;
  j["tier_proportions"] = c.tier_proportions;
  j["tier_concentrations"] = c.tier_concentrations;
  j["tier_thresholds"] = {c.tier_thresholds.lower, c.tier_thresholds.upper};
  j["bulk_size"] = c.bulk_size;
  j["centroid_separation"] = c.centroid_separation;
  j["noise_sigma"] = c.noise_sigma;
  j["annotators"] = c.annotators;
  j["dataset"] = c.dataset;
  j["hidden_dim"] = c.hidden_dim;
  j["method"] = std::string(to_string(c.method));
  j["rank"] = c.rank;
  j["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
  j["dropout"] = c.dropout;
  j["pretrain_lr"] = c.pretrain_lr;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["warmup_fraction"] = c.warmup_fraction;
  j["clip_norm"] = c.clip_norm;
  j["weight_decay"] = c.weight_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["log_every"] = c.log_every;
  j["probe_train_fraction"] = c.probe_train_fraction;
  j["seed"] = c.seed;
  return j;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::config, std::string("config.") + key + ": wrong type");
  }
}

void merge(const json& j, ToyConfig& c) {
  if (!j.is_object()) throw Error(Errc::config, "config: expected a JSON object");
  const json known = to_json_object(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(Errc::config, "config." + key + ": unknown field");
  }
  read_field(j, "feature_dim", c.feature_dim);
  read_field(j, "num_classes", c.num_classes);
  read_field(j, "probe_size", c.probe_size);
  read_field(j, "tier_proportions", c.tier_proportions);
  read_field(j, "tier_concentrations", c.tier_concentrations);
  if (j.contains("tier_thresholds")) {
    std::array<double, 2> t{};
    read_field(j, "tier_thresholds", t);
    c.tier_thresholds = {t[0], t[1]};
  }
  read_field(j, "bulk_size", c.bulk_size);
  read_field(j, "centroid_separation", c.centroid_separation);
  read_field(j, "noise_sigma", c.noise_sigma);
  read_field(j, "annotators", c.annotators);
  read_field(j, "dataset", c.dataset);
  read_field(j, "hidden_dim", c.hidden_dim);
  if (j.contains("method")) {
    std::string m;
    read_field(j, "method", m);
    try {
      c.method = parse_method(m);
    } catch (const Error& e) {
      throw Error(Errc::config, std::string("config.method: ") + e.what());
    }
  }
  read_field(j, "rank", c.rank);
  if (j.contains("alpha")) {
    if (j["alpha"].is_null()) {
      c.alpha.reset();
    } else {
      double a = 0.0;
      read_field(j, "alpha", a);
      c.alpha = a;
    }
  }
  read_field(j, "dropout", c.dropout);
  read_field(j, "pretrain_lr", c.pretrain_lr);
  read_field(j, "pretrain_epochs", c.pretrain_epochs);
  read_field(j, "lr", c.lr);
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "warmup_fraction", c.warmup_fraction);
  read_field(j, "clip_norm", c.clip_norm);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "beta1", c.beta1);
  read_field(j, "beta2", c.beta2);
  read_field(j, "epsilon", c.epsilon);
  read_field(j, "log_every", c.log_every);
  read_field(j, "probe_train_fraction", c.probe_train_fraction);
  read_field(j, "seed", c.seed);
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::config, std::string("config: malformed JSON (") + e.what() + ")");
  }
}

}  // namespace

void ToyConfig::validate() const {
  require(num_classes >= 2, "num_classes", "must be >= 2");
  require(feature_dim >= num_classes, "feature_dim", "must be >= num_classes");
  require(probe_size >= 0, "probe_size", "must be >= 0");
  require(bulk_size >= 0, "bulk_size", "must be >= 0");
  double total = 0.0;
  for (double p : tier_proportions) {
    require(p >= 0.0, "tier_proportions", "entries must be >= 0");
    total += p;
  }
  require(std::abs(total - 1.0) < 1e-9, "tier_proportions", "must sum to 1");
  for (double a : tier_concentrations) require(a > 0.0, "tier_concentrations", "entries must be > 0");
  try {
    lossdyn::validate(tier_thresholds, num_classes);
  } catch (const Error& e) {
    throw Error(Errc::config, std::string("config.tier_thresholds: ") + e.what());
  }
  require(centroid_separation > 0.0, "centroid_separation", "must be > 0");
  require(noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  require(annotators >= 1, "annotators", "must be >= 1");
  require(hidden_dim >= 0, "hidden_dim", "must be >= 0");
  require(method != Method::LowRank || rank >= 1, "rank", "must be >= 1 for the lowrank method");
  require(!alpha || *alpha > 0.0, "alpha", "must be > 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must lie in [0, 1)");
  require(pretrain_lr >= 0.0, "pretrain_lr", "must be >= 0");
  require(pretrain_epochs >= 0, "pretrain_epochs", "must be >= 0");
  require(lr >= 0.0, "lr", "must be >= 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "warmup_fraction", "must lie in [0, 1)");
  require(clip_norm > 0.0, "clip_norm", "must be > 0");
  require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must lie in [0, 1)");
  require(epsilon > 0.0, "epsilon", "must be > 0");
  require(log_every >= 1, "log_every", "must be >= 1");
  require(probe_train_fraction > 0.0 && probe_train_fraction <= 1.0, "probe_train_fraction", "must lie in (0, 1]");
}

std::string config_to_json(const ToyConfig& config) { return to_json_object(config).dump(2); }

ToyConfig config_from_json(const std::string& text) { return apply_overrides(ToyConfig{}, text); }

ToyConfig apply_overrides(const ToyConfig& base, const std::string& overrides_json) {
  ToyConfig c = base;
  merge(parse_json(overrides_json), c);
  c.validate();
  return c;
}

ToyConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace lossdyn
