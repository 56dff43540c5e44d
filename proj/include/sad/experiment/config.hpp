#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sad/data/dataset.hpp"
#include "sad/diffusion/sampler.hpp"
#include "sad/diffusion/schedule.hpp"
#include "sad/diffusion/train.hpp"
#include "sad/geometry/geometry.hpp"
#include "sad/geometry/probe.hpp"
#include "sad/networks/family.hpp"

namespace sad {

enum class Recipe {
  basis_sweep,
  sad_sweep,
  alignment_study,
  theory_fig4,
  impulse_probe,
  geometry_report,
  sphere_study,
};

std::string_view to_string(Recipe r);
Recipe parse_recipe(std::string_view label);
const std::vector<Recipe>& all_recipes();

/// Reads a TOML or JSON document (chosen by extension, .json or .toml; other
/// extensions try JSON first). Throws ParseError on malformed input.
nlohmann::json load_config_document(const std::string& path);
nlohmann::json parse_toml(std::string_view text, const std::string& source = "<string>");

/// Sets a dotted key ("train.iterations=500"). The value is parsed as JSON
/// when possible and kept as a string otherwise. Throws ConfigError on a
/// malformed assignment.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Resolved experiment configuration.
///
/// The document is the user input merged over the defaults of its recipe (or
/// the generic defaults when no recipe is given); unknown keys are rejected.
/// `to_json()` returns the merged document, which parses back to an equal
/// configuration.
class ExperimentConfig {
 public:
  /// Throws ConfigError on unknown keys, bad labels or invalid values.
  static ExperimentConfig from_json(const nlohmann::json& doc, bool require_recipe = true);
  static nlohmann::json defaults(std::optional<Recipe> recipe);

  const nlohmann::json& to_json() const noexcept { return doc_; }
  std::optional<Recipe> recipe() const noexcept { return recipe_; }
  std::uint64_t master_seed() const;
  std::size_t seeds() const;
  std::size_t workers() const;
  std::string out() const;

  const nlohmann::json& section(const char* name) const { return doc_.at(name); }

  NoiseSchedule schedule() const;
  NetworkFamily family() const;
  TrainConfig train_config() const;
  GeometryOptions geometry_options() const;
  std::size_t geometry_samples() const;
  /// Probe for the configured family; around_sample probes draw from `data`.
  ProbeDistribution probe(const NoiseSchedule& schedule, const Dataset* data = nullptr) const;
  ProbeDistribution probe_of_kind(ProbeKind kind, const NoiseSchedule& schedule, const Dataset* data) const;
  AncestralOptions ancestral_options() const;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return a.doc_ == b.doc_; }

 private:
  nlohmann::json doc_;
  std::optional<Recipe> recipe_;
};

/// Family from a `family` section. Throws ConfigError.
NetworkFamily family_from_json(const nlohmann::json& section);
/// Defaults of a family section for the given kind.
nlohmann::json family_defaults(std::string_view kind);
nlohmann::json dataset_defaults(std::string_view kind);

/// Default location of the bundled MNIST subset.
std::string default_mnist_dir();

}  // namespace sad
