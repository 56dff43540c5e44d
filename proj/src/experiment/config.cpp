#include "sad/experiment/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "sad/error.hpp"

#ifndef SADKIT_MNIST_DIR
#define SADKIT_MNIST_DIR "data/mnist"
#endif

namespace sad {

using nlohmann::json;

namespace {

constexpr std::pair<Recipe, std::string_view> kRecipes[] = {
    {Recipe::basis_sweep, "basis_sweep"},         {Recipe::sad_sweep, "sad_sweep"},
    {Recipe::alignment_study, "alignment_study"}, {Recipe::theory_fig4, "theory_fig4"},
    {Recipe::impulse_probe, "impulse_probe"},     {Recipe::geometry_report, "geometry_report"},
    {Recipe::sphere_study, "sphere_study"},
};

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  std::ostringstream os;
  if (const auto* d = node.as_date()) os << d->get();
  else if (const auto* tm = node.as_time()) os << tm->get();
  else if (const auto* dt = node.as_date_time()) os << dt->get();
  return os.str();
}

bool is_number(const json& j) { return j.is_number(); }

// Merge `user` over `base`, rejecting keys the base does not know and values
// whose type differs from a non-null default.
void merge_into(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config: '" + path + "' must be a table");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + where + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, where);
      continue;
    }
    if (slot.is_null() || value.is_null()) {
      slot = value;
      continue;
    }
    if (slot.is_number_unsigned() || slot.is_number_integer()) {
      if (!is_number(value)) throw ConfigError("config: '" + where + "' must be a number");
      const double v = value.get<double>();
      if (v != std::floor(v)) throw ConfigError("config: '" + where + "' must be an integer");
      const bool non_negative = slot.is_number_unsigned() || slot.get<std::int64_t>() >= 0;
      if (non_negative && v < 0) throw ConfigError("config: '" + where + "' must be non-negative");
      if (v >= 0)
        slot = value.is_number_float() ? static_cast<std::uint64_t>(v) : value.get<std::uint64_t>();
      else
        slot = value.is_number_float() ? static_cast<std::int64_t>(v) : value.get<std::int64_t>();
      continue;
    }
    if (slot.is_number_float()) {
      if (!is_number(value)) throw ConfigError("config: '" + where + "' must be a number");
      slot = value.get<double>();
      continue;
    }
    if (slot.type() != value.type()) throw ConfigError("config: '" + where + "' has the wrong type");
    slot = value;
  }
}

template <typename T>
T get(const json& j, const char* key, const char* section) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad or missing '") + section + "." + key + "'");
  }
}

ImageShape image_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("config: image must be [channels, height, width]");
  ImageShape s;
  try {
    s.channels = j[0].get<std::size_t>();
    s.height = j[1].get<std::size_t>();
    s.width = j[2].get<std::size_t>();
  } catch (const json::exception&) {
    throw ConfigError("config: image entries must be non-negative integers");
  }
  if (s.size() == 0) throw ConfigError("config: image must be non-empty");
  return s;
}

Activation activation_of(const json& f, const char* key) {
  return parse_activation(get<std::string>(f, key, "family"));
}

json recipe_sweep_defaults(Recipe r) {
  switch (r) {
    case Recipe::sad_sweep:
      return {{"select", "first_middle_last"}, {"per_group", 4}, {"count", 12}, {"export_pgm", true}};
    case Recipe::basis_sweep:
      return {{"basis", "dct"}, {"indices", json::array()}};
    case Recipe::alignment_study:
      return {{"transforms", {"identity", "w_min", "w_max"}}};
    case Recipe::theory_fig4:
      return {{"eigenvalues", {5.0, 4.0, 3.0, 2.0, 1.0}},
              {"sigma", 1.0},
              {"eta", 1e-3},
              {"steps", 20000},
              {"sgd_steps", 0},
              {"sgd_batch", 1},
              {"sgd_init_std", 1e-2},
              {"burn_in", 0.8}};
    case Recipe::impulse_probe:
      return {{"resample", {"area", "nearest"}}, {"row", -1}, {"col", -1}, {"sigma", 1.0}};
    case Recipe::geometry_report:
      return {{"probes", {"delta_zero", "isotropic_gaussian", "around_sample"}}, {"export", 4}};
    case Recipe::sphere_study:
      return {{"groups", {"first", "last"}}};
  }
  return json::object();
}

}  // namespace

std::string_view to_string(Recipe r) {
  for (const auto& [k, s] : kRecipes)
    if (k == r) return s;
  return "?";
}

Recipe parse_recipe(std::string_view label) {
  for (const auto& [k, s] : kRecipes)
    if (s == label) return k;
  throw ConfigError("unknown recipe '" + std::string(label) + "'");
}

const std::vector<Recipe>& all_recipes() {
  static const std::vector<Recipe> all = [] {
    std::vector<Recipe> v;
    for (const auto& [k, s] : kRecipes) v.push_back(k);
    return v;
  }();
  return all;
}

json parse_toml(std::string_view text, const std::string& source) {
  try {
    return toml_to_json(toml::parse(text, source));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ParseError(os.str());
  }
}

json load_config_document(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".toml") return parse_toml(text, path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    if (ext == ".json") throw ParseError(path + ": " + e.what(), e.byte);
  }
  return parse_toml(text, path);
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string default_mnist_dir() { return SADKIT_MNIST_DIR; }

json family_defaults(std::string_view kind) {
  const double gain = std::sqrt(2.0);
  if (kind == "linear") return {{"kind", "linear"}, {"dim", 5}, {"theta_std", 1.0}, {"phi_diagonal", json::array()}};
  if (kind == "mlp")
    return {{"kind", "mlp"},
            {"dim", 16},
            {"hidden_layers", 2},
            {"width", 0},
            {"activation", "silu"},
            {"output_activation", "identity"},
            {"sigma_embedding", true},
            {"weight_gain", gain},
            {"output_weight_std", -1.0},
            {"output_weight_mean", 0.0},
            {"bias_mean", 0.0},
            {"bias_std", 0.0}};
  if (kind == "conv_unet_mini")
    return {{"kind", "conv_unet_mini"},
            {"image", {1, 8, 8}},
            {"channels", 16},
            {"levels", 2},
            {"resample", "area"},
            {"padding", "zero"},
            {"activation", "silu"},
            {"output_activation", "identity"},
            {"sigma_embedding", true},
            {"symmetric_init", false},
            {"weight_gain", gain},
            {"output_weight_std", -1.0},
            {"bias_mean", 0.0},
            {"bias_std", 0.0}};
  if (kind == "token_linear")
    return {{"kind", "token_linear"},
            {"image", {1, 8, 8}},
            {"patch", 2},
            {"flat", false},
            {"weight_std", -1.0},
            {"bias_std", 0.0},
            {"sigma_embedding", false},
            {"symmetric_init", false}};
  throw ConfigError("unknown family kind '" + std::string(kind) + "'");
}

json dataset_defaults(std::string_view kind) {
  if (kind == "rank_one")
    return {{"kind", "rank_one"}, {"n_train", 2000}, {"n_reference", 2000}, {"direction", json::array()}};
  if (kind == "gaussian") return {{"kind", "gaussian"}, {"n_train", 2000}, {"n_reference", 2000}};
  if (kind == "sphere") return {{"kind", "sphere"}, {"n_train", 2000}, {"n_reference", 2000}, {"radius", 0.0}};
  if (kind == "mnist")
    return {{"kind", "mnist"}, {"dir", ""}, {"downscale", 2}, {"n_train", 5000}, {"n_test", 2000}};
  throw ConfigError("unknown dataset kind '" + std::string(kind) + "'");
}

NetworkFamily family_from_json(const json& f) {
  const std::string kind = get<std::string>(f, "kind", "family");
  if (kind == "linear") {
    LinearSpec s;
    const std::size_t d = get<std::size_t>(f, "dim", "family");
    const auto diag = get<std::vector<double>>(f, "phi_diagonal", "family");
    if (!diag.empty() && diag.size() != d) throw ConfigError("config: family.phi_diagonal must have dim entries");
    s.phi = diag.empty() ? Matrix::identity(d) : Matrix::diagonal(diag);
    s.theta_std = get<double>(f, "theta_std", "family");
    return NetworkFamily(s);
  }
  if (kind == "mlp") {
    MlpSpec s;
    s.dim = get<std::size_t>(f, "dim", "family");
    s.hidden_layers = get<std::size_t>(f, "hidden_layers", "family");
    s.width = get<std::size_t>(f, "width", "family");
    s.activation = activation_of(f, "activation");
    s.output_activation = activation_of(f, "output_activation");
    s.sigma_embedding = get<bool>(f, "sigma_embedding", "family");
    s.weight_gain = get<double>(f, "weight_gain", "family");
    s.output_weight_std = get<double>(f, "output_weight_std", "family");
    s.output_weight_mean = get<double>(f, "output_weight_mean", "family");
    s.bias_mean = get<double>(f, "bias_mean", "family");
    s.bias_std = get<double>(f, "bias_std", "family");
    return NetworkFamily(s);
  }
  if (kind == "conv_unet_mini") {
    ConvUnetSpec s;
    s.image = image_from_json(f.at("image"));
    s.channels = get<std::size_t>(f, "channels", "family");
    s.levels = get<std::size_t>(f, "levels", "family");
    s.resample = parse_resample(get<std::string>(f, "resample", "family"));
    s.padding = parse_padding(get<std::string>(f, "padding", "family"));
    s.activation = activation_of(f, "activation");
    s.output_activation = activation_of(f, "output_activation");
    s.sigma_embedding = get<bool>(f, "sigma_embedding", "family");
    s.symmetric_init = get<bool>(f, "symmetric_init", "family");
    s.weight_gain = get<double>(f, "weight_gain", "family");
    s.output_weight_std = get<double>(f, "output_weight_std", "family");
    s.bias_mean = get<double>(f, "bias_mean", "family");
    s.bias_std = get<double>(f, "bias_std", "family");
    return NetworkFamily(s);
  }
  if (kind == "token_linear") {
    TokenLinearSpec s;
    s.image = image_from_json(f.at("image"));
    s.patch = get<std::size_t>(f, "patch", "family");
    s.flat = get<bool>(f, "flat", "family");
    s.weight_std = get<double>(f, "weight_std", "family");
    s.bias_std = get<double>(f, "bias_std", "family");
    s.sigma_embedding = get<bool>(f, "sigma_embedding", "family");
    s.symmetric_init = get<bool>(f, "symmetric_init", "family");
    return NetworkFamily(s);
  }
  throw ConfigError("unknown family kind '" + kind + "'");
}

json ExperimentConfig::defaults(std::optional<Recipe> recipe) {
  json d = {
      {"master_seed", 0},
      {"seeds", 5},
      {"workers", 1},
      {"out", "runs"},
      {"schedule", {{"n_steps", 1000}, {"beta_min", 1e-4}, {"beta_max", 0.02}}},
      {"family", family_defaults("mlp")},
      {"dataset", dataset_defaults("rank_one")},
      {"probe", {{"kind", "delta_zero"}, {"levels", 0}, {"sigma_p", 1.0}}},
      {"geometry", {{"n_samples", 100000}, {"probes_per_draw", 1}}},
      {"train",
       {{"batch_size", 64},
        {"iterations", 2000},
        {"learning_rate", 1e-3},
        {"optimizer", "adam"},
        {"log_every", 100},
        {"ema_window", 500},
        {"fixed_sigma", nullptr}}},
      {"sample", {{"n", 2000}, {"steps", 100}, {"block", 256}, {"langevin_eta", 1e-3}, {"langevin_steps", 2000}}},
      {"metrics", {{"projections", 0}}},
      {"sweep", json::object()},
  };
  if (!recipe) return d;
  d["recipe"] = std::string(to_string(*recipe));
  d["sweep"] = recipe_sweep_defaults(*recipe);
  auto conv = [](std::size_t side) {
    json f = family_defaults("conv_unet_mini");
    f["image"] = {1, side, side};
    return f;
  };
  switch (*recipe) {
    case Recipe::sad_sweep:
      d["seeds"] = 3;
      d["family"]["dim"] = 64;
      break;
    case Recipe::basis_sweep:
      d["family"] = conv(8);
      break;
    case Recipe::alignment_study:
      d["seeds"] = 3;
      d["family"] = conv(14);
      d["dataset"] = dataset_defaults("mnist");
      d["geometry"]["n_samples"] = 20000;
      break;
    case Recipe::theory_fig4:
      d["family"] = family_defaults("linear");
      break;
    case Recipe::impulse_probe:
      d["seeds"] = 10;
      d["family"] = conv(15);
      d["family"]["symmetric_init"] = true;
      break;
    case Recipe::geometry_report:
      d["family"] = conv(14);
      d["dataset"] = dataset_defaults("mnist");
      d["geometry"]["n_samples"] = 10000;
      break;
    case Recipe::sphere_study:
      d["seeds"] = 3;
      d["family"] = conv(8);
      d["dataset"] = dataset_defaults("sphere");
      d["geometry"]["n_samples"] = 20000;
      break;
  }
  return d;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, bool require_recipe) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a table");
  ExperimentConfig c;
  if (doc.contains("recipe")) {
    if (!doc["recipe"].is_string()) throw ConfigError("config: recipe must be a string");
    c.recipe_ = parse_recipe(doc["recipe"].get<std::string>());
  } else if (require_recipe) {
    throw ConfigError("config: missing 'recipe'");
  }
  json base = defaults(c.recipe_);
  // A different kind replaces the section defaults wholesale.
  auto rebase = [&](const char* section, json (*make)(std::string_view)) {
    if (!doc.contains(section) || !doc[section].is_object() || !doc[section].contains("kind")) return;
    const json& k = doc[section]["kind"];
    if (!k.is_string()) throw ConfigError(std::string("config: ") + section + ".kind must be a string");
    if (k.get<std::string>() != base[section]["kind"].get<std::string>()) base[section] = make(k.get<std::string>());
  };
  rebase("family", family_defaults);
  rebase("dataset", dataset_defaults);
  merge_into(base, doc, "");
  c.doc_ = std::move(base);

  // Validate everything up front so that runs fail before doing work.
  const NetworkFamily fam = c.family();
  const TrainConfig tc = c.train_config();
  if (fam.outputs_score() && !tc.fixed_sigma && c.recipe_ != Recipe::theory_fig4)
    throw ConfigError("config: the linear family needs train.fixed_sigma");
  c.schedule();
  parse_probe_kind(get<std::string>(c.doc_["probe"], "kind", "probe"));
  if (c.seeds() == 0) throw ConfigError("config: seeds must be positive");
  if (c.geometry_samples() == 0) throw ConfigError("config: geometry.n_samples must be positive");
  if (get<std::size_t>(c.doc_["sample"], "block", "sample") == 0) throw ConfigError("config: sample.block must be positive");
  if (!(get<double>(c.doc_["sample"], "langevin_eta", "sample") > 0.0))
    throw ConfigError("config: sample.langevin_eta must be positive");
  dataset_defaults(get<std::string>(c.doc_["dataset"], "kind", "dataset"));
  return c;
}

std::uint64_t ExperimentConfig::master_seed() const { return get<std::uint64_t>(doc_, "master_seed", "root"); }
std::size_t ExperimentConfig::seeds() const { return get<std::size_t>(doc_, "seeds", "root"); }
std::size_t ExperimentConfig::workers() const {
  return std::max<std::size_t>(1, get<std::size_t>(doc_, "workers", "root"));
}
std::string ExperimentConfig::out() const { return get<std::string>(doc_, "out", "root"); }

NoiseSchedule ExperimentConfig::schedule() const {
  const json& s = doc_.at("schedule");
  try {
    return make_schedule(get<std::size_t>(s, "n_steps", "schedule"), get<double>(s, "beta_min", "schedule"),
                         get<double>(s, "beta_max", "schedule"));
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

NetworkFamily ExperimentConfig::family() const { return family_from_json(doc_.at("family")); }

TrainConfig ExperimentConfig::train_config() const {
  const json& t = doc_.at("train");
  TrainConfig c;
  c.batch_size = get<std::size_t>(t, "batch_size", "train");
  c.iterations = get<std::size_t>(t, "iterations", "train");
  c.learning_rate = get<double>(t, "learning_rate", "train");
  c.optimizer = parse_optimizer(get<std::string>(t, "optimizer", "train"));
  c.log_every = get<std::size_t>(t, "log_every", "train");
  c.ema_window = get<std::size_t>(t, "ema_window", "train");
  if (!t.at("fixed_sigma").is_null()) c.fixed_sigma = get<double>(t, "fixed_sigma", "train");
  c.seed = master_seed();
  c.validate();
  return c;
}

GeometryOptions ExperimentConfig::geometry_options() const {
  GeometryOptions o;
  o.probes_per_draw = get<std::size_t>(doc_.at("geometry"), "probes_per_draw", "geometry");
  if (o.probes_per_draw == 0) throw ConfigError("config: geometry.probes_per_draw must be positive");
  o.workers = workers();
  return o;
}

std::size_t ExperimentConfig::geometry_samples() const {
  return get<std::size_t>(doc_.at("geometry"), "n_samples", "geometry");
}

ProbeDistribution ExperimentConfig::probe_of_kind(ProbeKind kind, const NoiseSchedule& schedule,
                                                  const Dataset* data) const {
  const json& p = doc_.at("probe");
  const std::vector<double> levels = schedule.sigma_levels(get<std::size_t>(p, "levels", "probe"));
  switch (kind) {
    case ProbeKind::delta_zero:
      return ProbeDistribution::delta_zero(levels);
    case ProbeKind::isotropic_gaussian:
      return ProbeDistribution::isotropic(get<double>(p, "sigma_p", "probe"), levels);
    case ProbeKind::around_sample:
      if (!data) throw ConfigError("config: the around_sample probe needs a dataset");
      return ProbeDistribution::around_sample(std::make_shared<const Matrix>(data->samples), levels,
                                              data->provenance.value("source", std::string("dataset")));
  }
  throw ConfigError("config: unknown probe kind");
}

ProbeDistribution ExperimentConfig::probe(const NoiseSchedule& schedule, const Dataset* data) const {
  return probe_of_kind(parse_probe_kind(get<std::string>(doc_.at("probe"), "kind", "probe")), schedule, data);
}

AncestralOptions ExperimentConfig::ancestral_options() const {
  const json& s = doc_.at("sample");
  AncestralOptions o;
  o.steps = get<std::size_t>(s, "steps", "sample");
  o.block = get<std::size_t>(s, "block", "sample");
  o.workers = 1;
  return o;
}

}  // namespace sad
