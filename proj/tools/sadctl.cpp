// sadctl: command-line front end for geometry estimation, training, sampling,
// metrics and the experiment recipes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sad/alignment/alignment.hpp"
#include "sad/error.hpp"
#include "sad/experiment/config.hpp"
#include "sad/experiment/recipes.hpp"
#include "sad/experiment/report.hpp"
#include "sad/geometry/geometry.hpp"
#include "sad/numerics/matrix.hpp"
#include "sad/numerics/memory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "TOML or JSON configuration file");
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--seed", o.seed, "Master seed");
  app->add_option("--workers", o.workers, "Worker threads");
  app->add_option("--override", o.overrides, "Dotted key=value override (repeatable)");
}

sad::ExperimentConfig load(const CommonOptions& o, bool require_recipe, const std::string& recipe = {}) {
  json doc = o.config.empty() ? json::object() : sad::load_config_document(o.config);
  if (!recipe.empty()) doc["recipe"] = recipe;
  if (o.seed) doc["master_seed"] = *o.seed;
  if (o.workers) doc["workers"] = *o.workers;
  if (!o.out.empty()) doc["out"] = o.out;
  for (const auto& ov : o.overrides) sad::apply_override(doc, ov);
  return sad::ExperimentConfig::from_json(doc, require_recipe);
}

fs::path out_dir(const sad::ExperimentConfig& c) {
  fs::path p = c.out();
  fs::create_directories(p);
  return p;
}

void log_line(const std::string& s) { std::cerr << "sadctl: " << s << '\n'; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw sad::Error("cannot open " + path.string());
  os << j.dump(2) << '\n';
}

sad::GeometryEstimate estimate(const sad::ExperimentConfig& c, const sad::NetworkFamily& family) {
  std::optional<sad::Dataset> data;
  const sad::NoiseSchedule schedule = c.schedule();
  if (sad::parse_probe_kind(c.section("probe").at("kind").get<std::string>()) == sad::ProbeKind::around_sample) {
    sad::RngStream s = sad::shared_stream(c.master_seed(), 0x64617461);
    data = sad::build_dataset(c, family.dim(), s);
  }
  const sad::ProbeDistribution probe = c.probe(schedule, data ? &*data : nullptr);
  return sad::estimate_geometry(family, probe, c.geometry_samples(), sad::shared_stream(c.master_seed(), 0x67656f6d),
                                c.geometry_options());
}

void write_sads(const fs::path& dir, const sad::SadBasis& sads, const std::optional<sad::ImageShape>& image,
                std::size_t n_export) {
  std::ofstream os(dir / "eigenvalues.csv");
  os << "index,eigenvalue\n";
  char buf[64];
  for (std::size_t i = 0; i < sads.dim(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, sads.eigenvalues[i]);
    os << buf;
  }
  sad::write_csv((dir / "directions.csv").string(), sads.directions);
  for (std::size_t i = 0; i < std::min(n_export, sads.dim()); ++i) {
    for (std::size_t k : {i, sads.dim() - 1 - i}) {
      std::snprintf(buf, sizeof(buf), "sad_%03zu.pgm", k);
      sad::write_pgm((dir / buf).string(), sad::vector_image(sads.direction(k), image));
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  sad::retain_freed_memory();
  CLI::App app{"Score anisotropy toolkit: average geometry, SADs, DSM training and recipes"};
  app.require_subcommand(1);

  CommonOptions geo_o, sads_o, train_o, sample_o, metrics_o, align_o, theory_o, run_o, render_o;

  auto* geometry = app.add_subcommand("geometry", "Estimate the average geometry of a family");
  add_common(geometry, geo_o);

  auto* sads = app.add_subcommand("sads", "Extract score anisotropy directions");
  add_common(sads, sads_o);
  std::string sads_input;
  std::size_t sads_export = 4;
  sads->add_option("--input", sads_input, "Geometry CSV (estimated from the config when omitted)");
  sads->add_option("--export", sads_export, "PGMs exported from each end of the spectrum");

  auto* train = app.add_subcommand("train", "Train a family on the configured dataset");
  add_common(train, train_o);

  auto* sample = app.add_subcommand("sample", "Sample from trained parameters");
  add_common(sample, sample_o);
  std::string sample_params;
  std::optional<std::size_t> sample_n;
  sample->add_option("--params", sample_params, "Parameter blob written by train")->required();
  sample->add_option("-n,--count", sample_n, "Number of samples");

  auto* metrics = app.add_subcommand("metrics", "Sliced Wasserstein distances between two sample CSVs");
  add_common(metrics, metrics_o);
  std::string metrics_a, metrics_b;
  std::size_t metrics_l = 0;
  metrics->add_option("--a", metrics_a, "First sample CSV")->required();
  metrics->add_option("--b", metrics_b, "Second sample CSV")->required();
  metrics->add_option("--projections", metrics_l, "Number of projections (0 selects 64 D)");

  auto* align = app.add_subcommand("align", "Alignment alpha and extremal transforms");
  add_common(align, align_o);
  std::string align_geometry;
  align->add_option("--geometry", align_geometry, "Geometry CSV (estimated from the config when omitted)");

  auto* theory = app.add_subcommand("theory", "Linear DSM rate experiment (theory_fig4 recipe)");
  add_common(theory, theory_o);

  auto* run = app.add_subcommand("run", "Run an experiment recipe");
  add_common(run, run_o);
  std::string run_recipe;
  run->add_option("--recipe", run_recipe, "Recipe name (overrides the config)");

  auto* render = app.add_subcommand("render", "Render a report as a basis heatmap");
  add_common(render, render_o);
  std::string render_report, render_basis = "dct", render_metric = "msw2";
  std::size_t render_h = 0, render_w = 0;
  render->add_option("--report", render_report, "Report CSV")->required();
  render->add_option("--basis", render_basis, "Basis label");
  render->add_option("--height", render_h, "Grid height")->required();
  render->add_option("--width", render_w, "Grid width")->required();
  render->add_option("--metric", render_metric, "Metric column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*geometry) {
      const auto c = load(geo_o, false);
      const fs::path dir = out_dir(c);
      const sad::NetworkFamily family = c.family();
      const sad::GeometryEstimate g = estimate(c, family);
      sad::write_geometry((dir / "geometry.csv").string(), g);
      std::cout << json{{"geometry", (dir / "geometry.csv").string()}, {"n_samples", g.n_samples},
                        {"max_standard_error", g.max_standard_error()}, {"trace", g.g.trace()}}
                       .dump()
                << '\n';
    } else if (*sads) {
      const auto c = load(sads_o, false);
      const fs::path dir = out_dir(c);
      const sad::NetworkFamily family = c.family();
      const sad::SadBasis basis =
          sads_input.empty() ? sad::extract_sads(estimate(c, family)) : sad::extract_sads(sad::read_csv(sads_input));
      write_sads(dir, basis, family.dim() == basis.dim() ? family.image() : std::nullopt, sads_export);
      std::cout << json{{"dim", basis.dim()}, {"min_eigenvalue", basis.eigenvalues.front()},
                        {"max_eigenvalue", basis.eigenvalues.back()}}
                       .dump()
                << '\n';
    } else if (*train) {
      const auto c = load(train_o, false);
      const fs::path dir = out_dir(c);
      const sad::NetworkFamily family = c.family();
      sad::RngStream ds = sad::shared_stream(c.master_seed(), 0x64617461);
      const sad::Dataset data = sad::build_dataset(c, family.dim(), ds);
      log_line("training " + std::string(family.kind()) + " on " + std::to_string(data.size()) + " rows");
      const sad::TrainTrace trace = sad::train(family, data, c.train_config(), c.schedule());
      trace.write_csv((dir / "trace.csv").string());
      sad::save_params((dir / "params.bin").string(), trace.params);
      write_json(dir / "config.json", c.to_json());
      std::cout << json{{"final_loss", trace.losses.empty() ? json(nullptr) : json(trace.losses.back())},
                        {"seconds", trace.seconds}, {"params", (dir / "params.bin").string()}}
                       .dump()
                << '\n';
    } else if (*sample) {
      const auto c = load(sample_o, false);
      const fs::path dir = out_dir(c);
      const sad::NetworkFamily family = c.family();
      const sad::ParamSet params = sad::load_params(sample_params);
      const std::size_t n = sample_n ? *sample_n : c.section("sample").at("n").get<std::size_t>();
      const sad::Matrix x =
          sad::generate_samples(c, family, params, n, sad::shared_stream(c.master_seed(), 0x73616d70));
      sad::write_csv((dir / "samples.csv").string(), x);
      std::cout << json{{"samples", (dir / "samples.csv").string()}, {"n", x.rows()}}.dump() << '\n';
    } else if (*metrics) {
      const auto c = load(metrics_o, false);
      const sad::Matrix a = sad::read_csv(metrics_a);
      const sad::Matrix b = sad::read_csv(metrics_b);
      sad::RngStream s = sad::shared_stream(c.master_seed(), 0x70726f6a);
      const sad::SlicedDistances d = sad::evaluate_samples(a, b, metrics_l, s);
      const json j = {{"sw2", d.sw2}, {"msw2", d.msw2}, {"projections", d.l}};
      if (!metrics_o.out.empty()) write_json(out_dir(c) / "metrics.json", j);
      std::cout << j.dump() << '\n';
    } else if (*align) {
      const auto c = load(align_o, false);
      const fs::path dir = out_dir(c);
      const sad::NetworkFamily family = c.family();
      const sad::Matrix g = align_geometry.empty() ? estimate(c, family).g : sad::read_csv(align_geometry);
      sad::RngStream ds = sad::shared_stream(c.master_seed(), 0x64617461);
      const sad::Dataset data = sad::build_dataset(c, g.rows(), ds);
      const sad::Matrix cm = sad::second_moment(data);
      const sad::ExtremalTransforms ext = sad::extremal_transforms(g, cm);
      sad::write_csv((dir / "w_min.csv").string(), ext.w_min.matrix);
      sad::write_csv((dir / "w_max.csv").string(), ext.w_max.matrix);
      const json j = {{"alpha_identity", sad::alpha(sad::Matrix::identity(g.rows()), g, cm)},
                      {"alpha_w_min", sad::alpha(ext.w_min, g, cm)},
                      {"alpha_w_max", sad::alpha(ext.w_max, g, cm)},
                      {"geometry_tied", ext.geometry_tied},
                      {"moment_tied", ext.moment_tied}};
      write_json(dir / "alignment.json", j);
      std::cout << j.dump() << '\n';
    } else if (*theory || *run) {
      const bool is_theory = theory->parsed();
      const auto c = is_theory ? load(theory_o, true, "theory_fig4") : load(run_o, true, run_recipe);
      sad::RunOptions opts;
      opts.log = log_line;
      const sad::ExperimentReport report = sad::run_experiment(c, opts);
      const fs::path root = fs::path(c.out()) / std::string(sad::to_string(*c.recipe()));
      std::cout << json{{"report", (root / "report.csv").string()}, {"rows", report.rows.size()},
                        {"failures", report.failures()}}
                       .dump()
                << '\n';
      if (report.failures() > 0) return kExitRuntime;
    } else if (*render) {
      const auto c = load(render_o, false);
      const fs::path dir = out_dir(c);
      const sad::OrthoTransform basis = sad::build_basis(sad::parse_basis_kind(render_basis), render_h, render_w);
      const auto rows = sad::read_report_csv(render_report);
      const sad::Matrix grid =
          sad::render_heatmap_grid(rows, basis, render_metric, (dir / ("heatmap_" + render_metric)).string());
      std::cout << json{{"heatmap", (dir / ("heatmap_" + render_metric + ".pgm")).string()},
                        {"rows", grid.rows()}, {"cols", grid.cols()}}
                       .dump()
                << '\n';
    }
  } catch (const sad::ConfigError& e) {
    std::cerr << "sadctl: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const sad::ParseError& e) {
    std::cerr << "sadctl: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "sadctl: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
