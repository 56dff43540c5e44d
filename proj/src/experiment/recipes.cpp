#include "sad/experiment/recipes.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "sad/alignment/alignment.hpp"
#include "sad/bases/basis.hpp"
#include "sad/diffusion/sampler.hpp"
#include "sad/error.hpp"
#include "sad/geometry/geometry.hpp"
#include "sad/numerics/parallel.hpp"
#include "sad/theory/linear_dsm.hpp"

namespace sad {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTaskTag = 0x7461736b;      // "task"
constexpr std::uint64_t kGeometryTag = 0x67656f6d;  // "geom"
constexpr std::uint64_t kDataTag = 0x64617461;      // "data"

// Sub-streams of a task.
enum : std::uint64_t { kTrainData = 0, kTrainSeed = 1, kSampling = 2, kProjections = 3, kReference = 4, kParams = 5 };

struct Context {
  const ExperimentConfig& config;
  const RunOptions& options;
  fs::path root;
  std::mutex log_mutex;

  void log(const std::string& msg) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    options.log(msg);
  }
};

std::string unit_name(const char* prefix, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu", prefix, k);
  return buf;
}

fs::path task_dir(const fs::path& root, const std::string& unit, std::size_t seed) {
  return root / unit / std::to_string(seed);
}

using TaskFn = std::function<void(std::size_t unit, std::size_t seed, const fs::path& dir, ReportRow& row)>;

// Runs units x seeds in unit-major order and isolates failures per task.
std::vector<ReportRow> run_tasks(Context& ctx, const std::vector<std::string>& units, const TaskFn& fn) {
  const std::size_t seeds = ctx.config.seeds();
  std::vector<ReportRow> rows(units.size() * seeds);
  parallel_for(rows.size(), ctx.config.workers(), [&](std::size_t t) {
    const std::size_t unit = t / seeds;
    const std::size_t seed = t % seeds;
    ReportRow& row = rows[t];
    row.unit = units[unit];
    row.seed = seed;
    const fs::path dir = task_dir(ctx.root, units[unit], seed);
    try {
      fs::create_directories(dir);
      fn(unit, seed, dir, row);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    try {
      write_row_csv((dir / "report.csv").string(), row);
    } catch (const std::exception&) {
      // The run-level report still carries the row.
    }
    ctx.log(row.unit + " seed " + std::to_string(seed) + (row.ok ? ": ok" : ": failed: " + row.error));
  });
  return rows;
}

void write_vector_csv(const fs::path& path, const char* header, std::span<const double> values) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string());
  os << "index," << header << '\n';
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, values[i]);
    os << buf;
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string());
  os << j.dump(2) << '\n';
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

GeometryEstimate shared_geometry(Context& ctx, const NetworkFamily& family, const Dataset* data) {
  const NoiseSchedule schedule = ctx.config.schedule();
  const ProbeDistribution probe = ctx.config.probe(schedule, data);
  ctx.log("estimating geometry with " + std::to_string(ctx.config.geometry_samples()) + " samples");
  GeometryEstimate g = estimate_geometry(family, probe, ctx.config.geometry_samples(),
                                         shared_stream(ctx.config.master_seed(), kGeometryTag),
                                         ctx.config.geometry_options());
  write_geometry((ctx.root / "geometry.csv").string(), g);
  return g;
}

// Train on `train_rows`, sample, map back through `inverse` when given and
// compare with `reference`.
void diffusion_task(Context& ctx, const NetworkFamily& family, const Dataset& train_rows, const Matrix& reference,
                    const std::optional<Vector>& direction, const OrthoTransform* inverse, const RngStream& task,
                    const fs::path& dir, ReportRow& row) {
  const ExperimentConfig& cfg = ctx.config;
  TrainConfig tc = cfg.train_config();
  RngStream seed_stream = task.split(kTrainSeed);
  tc.seed = seed_stream.next_u64();
  const TrainTrace trace = train(family, train_rows, tc, cfg.schedule());
  trace.write_csv((dir / "trace.csv").string());
  save_params((dir / "params.bin").string(), trace.params);

  const std::size_t n = cfg.section("sample").at("n").get<std::size_t>();
  Matrix samples = generate_samples(cfg, family, trace.params, n, task.split(kSampling));
  if (inverse) samples = samples * inverse->matrix;
  write_csv((dir / "samples.csv").string(), samples);
  write_csv((dir / "reference.csv").string(), reference);

  RngStream proj = task.split(kProjections);
  const std::size_t l = cfg.section("metrics").at("projections").get<std::size_t>();
  const SlicedDistances sd = evaluate_samples(samples, reference, l, proj);
  if (direction) {
    const Vector a = matvec(samples, *direction);
    const Vector b = matvec(reference, *direction);
    row.set("w2_direction", w2_1d(a, b));
  }
  row.set("sw2", sd.sw2);
  row.set("msw2", sd.msw2);
  row.set("projections", sd.l);
  row.set("final_loss", trace.losses.empty() ? json(nullptr) : json(trace.losses.back()));
  row.set("ema_monotone", trace.ema_monotone(std::min<std::size_t>(5000, tc.iterations)));
  write_json(dir / "timing.json", {{"train_seconds", trace.seconds}});
}

Dataset rank_one_rows(std::span<const double> v, std::size_t n, RngStream stream) {
  return sample_rank_one(v, v.size(), n, stream);
}

std::size_t dataset_count(const ExperimentConfig& cfg, const char* key) {
  return cfg.section("dataset").at(key).get<std::size_t>();
}

// Audit one row: reload its archived samples and recompute MSW2.
json audit_row(const ExperimentConfig& cfg, const fs::path& root, const std::vector<ReportRow>& rows,
               const std::vector<std::string>& units) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ReportRow& r = rows[i];
    if (!r.ok || std::isnan(r.number("msw2"))) continue;
    const fs::path dir = task_dir(root, r.unit, r.seed);
    const Matrix samples = read_csv((dir / "samples.csv").string());
    const Matrix reference = read_csv((dir / "reference.csv").string());
    const auto unit = static_cast<std::size_t>(std::find(units.begin(), units.end(), r.unit) - units.begin());
    RngStream proj = task_stream(cfg.master_seed(), unit, r.seed).split(kProjections);
    const SlicedDistances sd =
        evaluate_samples(samples, reference, cfg.section("metrics").at("projections").get<std::size_t>(), proj);
    return {{"unit", r.unit}, {"seed", r.seed}, {"msw2", r.number("msw2")}, {"recomputed", sd.msw2},
            {"match", sd.msw2 == r.number("msw2")}};
  }
  return nullptr;
}

std::vector<ReportRow> run_sad_sweep(Context& ctx, ExperimentReport& report, std::vector<std::string>& units) {
  const ExperimentConfig& cfg = ctx.config;
  const NetworkFamily family = cfg.family();
  const GeometryEstimate g = shared_geometry(ctx, family, nullptr);
  const SadBasis sads = extract_sads(g);
  write_vector_csv(ctx.root / "eigenvalues.csv", "eigenvalue", sads.eigenvalues);
  const json& sw = cfg.section("sweep");
  const std::vector<std::size_t> picks = select_sads(sw.at("select").get<std::string>(),
                                                     sw.at("per_group").get<std::size_t>(),
                                                     sw.at("count").get<std::size_t>(), sads.dim());
  for (std::size_t k : picks) units.push_back(unit_name("sad", k));
  const bool pgm = sw.at("export_pgm").get<bool>();
  for (std::size_t u = 0; u < picks.size(); ++u) {
    fs::create_directories(ctx.root / units[u]);
    if (pgm) write_pgm((ctx.root / units[u] / "direction.pgm").string(), vector_image(sads.direction(picks[u]), family.image()));
  }
  report.summary["geometry_max_standard_error"] = g.max_standard_error();
  report.summary["selected"] = picks;
  return run_tasks(ctx, units, [&](std::size_t u, std::size_t seed, const fs::path& dir, ReportRow& row) {
    const std::size_t k = picks[u];
    const Vector v = sads.direction(k);
    const RngStream task = task_stream(cfg.master_seed(), u, seed);
    row.set("index", k);
    row.set("eigenvalue", sads.eigenvalues[k]);
    row.set("alpha", static_cast<double>(v.size()) * sads.eigenvalues[k]);
    const Dataset train_rows = rank_one_rows(v, dataset_count(cfg, "n_train"), task.split(kTrainData));
    const Dataset ref = rank_one_rows(v, dataset_count(cfg, "n_reference"), task.split(kReference));
    diffusion_task(ctx, family, train_rows, ref.samples, v, nullptr, task, dir, row);
  });
}

std::pair<std::size_t, std::size_t> grid_shape(const NetworkFamily& family) {
  if (const auto img = family.image()) {
    if (img->channels != 1) throw ConfigError("basis_sweep: named bases need a single-channel image");
    return {img->height, img->width};
  }
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(family.dim()))));
  if (side * side != family.dim()) throw ConfigError("basis_sweep: dimension is not a square image");
  return {side, side};
}

std::vector<ReportRow> run_basis_sweep(Context& ctx, ExperimentReport& report, std::vector<std::string>& units) {
  const ExperimentConfig& cfg = ctx.config;
  const NetworkFamily family = cfg.family();
  const auto [h, w] = grid_shape(family);
  const json& sw = cfg.section("sweep");
  const OrthoTransform basis = build_basis(parse_basis_kind(sw.at("basis").get<std::string>()), h, w);
  std::vector<std::size_t> cols = sw.at("indices").get<std::vector<std::size_t>>();
  if (cols.empty())
    for (std::size_t k = 0; k < basis.dim; ++k) cols.push_back(k);
  for (std::size_t k : cols) {
    if (k >= basis.dim) throw ConfigError("basis_sweep: index " + std::to_string(k) + " out of range");
    units.push_back(unit_name("col", k));
  }
  report.summary["basis"] = layout_to_json(basis);
  std::vector<ReportRow> rows = run_tasks(ctx, units, [&](std::size_t u, std::size_t seed, const fs::path& dir, ReportRow& row) {
    const Vector v = basis.column(cols[u]);
    const RngStream task = task_stream(cfg.master_seed(), u, seed);
    row.set("index", cols[u]);
    row.set("grid_row", basis.index_layout[cols[u]].grid_row);
    row.set("grid_col", basis.index_layout[cols[u]].grid_col);
    const Dataset train_rows = rank_one_rows(v, dataset_count(cfg, "n_train"), task.split(kTrainData));
    const Dataset ref = rank_one_rows(v, dataset_count(cfg, "n_reference"), task.split(kReference));
    diffusion_task(ctx, family, train_rows, ref.samples, v, nullptr, task, dir, row);
  });
  if (cols.size() == basis.dim) {
    try {
      render_heatmap_grid(rows, basis, "msw2", (ctx.root / "heatmap_msw2").string());
      report.summary["heatmap"] = "heatmap_msw2.pgm";
    } catch (const PreconditionError& e) {
      report.summary["heatmap_error"] = e.what();
    }
  }
  return rows;
}

OrthoTransform named_transform(const std::string& label, const ExtremalTransforms& ext, std::size_t dim,
                               const std::optional<ImageShape>& image, RngStream& stream) {
  if (label == "identity") return make_transform(Matrix::identity(dim), BasisKind::identity);
  if (label == "w_min") return ext.w_min;
  if (label == "w_max") return ext.w_max;
  if (label == "random_orthogonal") return random_orthogonal(dim, stream);
  const BasisKind kind = parse_basis_kind(label);
  if (!image || image->channels != 1) throw ConfigError("alignment_study: basis '" + label + "' needs a 1-channel image");
  return build_basis(kind, image->height, image->width);
}

std::vector<ReportRow> run_alignment_study(Context& ctx, ExperimentReport& report, std::vector<std::string>& units) {
  const ExperimentConfig& cfg = ctx.config;
  const NetworkFamily family = cfg.family();
  const DatasetSplit data = cfg.section("dataset").at("kind") == "mnist"
                                ? load_mnist_split(cfg)
                                : DatasetSplit{[&] {
                                                 RngStream s = shared_stream(cfg.master_seed(), kDataTag);
                                                 return build_dataset(cfg, family.dim(), s);
                                               }(),
                                               [&] {
                                                 RngStream s = shared_stream(cfg.master_seed(), kDataTag).split(1);
                                                 return build_dataset(cfg, family.dim(), s);
                                               }()};
  if (data.train.dim() != family.dim())
    throw ConfigError("alignment_study: data dimension " + std::to_string(data.train.dim()) +
                      " does not match the family (" + std::to_string(family.dim()) + ")");
  const GeometryEstimate g = shared_geometry(ctx, family, &data.train);
  const Matrix c = second_moment(data.train);
  const ExtremalTransforms ext = extremal_transforms(g.g, c);
  const auto labels = cfg.section("sweep").at("transforms").get<std::vector<std::string>>();
  std::vector<OrthoTransform> transforms;
  RngStream rs = shared_stream(cfg.master_seed(), kDataTag).split(2);
  for (const auto& l : labels) {
    transforms.push_back(named_transform(l, ext, family.dim(), data.train.image, rs));
    units.push_back(l);
  }
  json alphas = json::object();
  for (std::size_t i = 0; i < labels.size(); ++i) alphas[labels[i]] = alpha(transforms[i], g.g, c);
  report.summary["alpha"] = alphas;
  report.summary["geometry_tied"] = ext.geometry_tied;
  report.summary["moment_tied"] = ext.moment_tied;
  report.summary["geometry_max_standard_error"] = g.max_standard_error();
  return run_tasks(ctx, units, [&](std::size_t u, std::size_t seed, const fs::path& dir, ReportRow& row) {
    const RngStream task = task_stream(cfg.master_seed(), u, seed);
    row.set("transform", labels[u]);
    row.set("alpha", alphas[labels[u]]);
    const Dataset latent = apply_transform(data.train, transforms[u]);
    diffusion_task(ctx, family, latent, data.test.samples, std::nullopt, &transforms[u], task, dir, row);
  });
}

std::vector<ReportRow> run_theory_fig4(Context& ctx, ExperimentReport& report, std::vector<std::string>& units) {
  const ExperimentConfig& cfg = ctx.config;
  const json& sw = cfg.section("sweep");
  const auto lambda = sw.at("eigenvalues").get<std::vector<double>>();
  if (lambda.size() < 2) throw ConfigError("theory_fig4: need at least two eigenvalues");
  for (std::size_t i = 1; i < lambda.size(); ++i)
    if (!(lambda[i] < lambda[i - 1]) || !(lambda[i] > 0.0))
      throw ConfigError("theory_fig4: eigenvalues must be positive and strictly decreasing");
  const std::size_t d = lambda.size();
  Vector root(d);
  for (std::size_t i = 0; i < d; ++i) root[i] = std::sqrt(lambda[i]);
  const Matrix phi = Matrix::diagonal(root);
  const double sigma = sw.at("sigma").get<double>();
  for (std::size_t i = 0; i < d; ++i) units.push_back(unit_name("direction", i + 1));
  std::vector<ReportRow> rows = run_tasks(ctx, units, [&](std::size_t u, std::size_t seed, const fs::path& dir, ReportRow& row) {
    LinearDsmConfig lc;
    lc.phi = phi;
    lc.v = Vector(d, 0.0);
    lc.v[u] = 1.0;
    lc.sigma = sigma;
    lc.eta = sw.at("eta").get<double>();
    lc.steps = sw.at("steps").get<std::size_t>();
    const ErrorTrace tr = gd_mean_trace(lc);
    {
      std::ofstream os(dir / "trace.csv");
      os << "step,error\n";
      char buf[64];
      for (std::size_t t = 0; t < tr.error.size(); ++t) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", t, tr.error[t]);
        os << buf;
      }
    }
    const double predicted = predicted_rate(lambda, u + 1, sigma);
    row.set("index", u + 1);
    row.set("eigenvalue", lambda[u]);
    row.set("predicted_rho", predicted);
    row.set("fitted_rho", tr.fitted_rho);
    row.set("relative_error", std::abs(tr.fitted_rho - predicted) / predicted);
    const std::size_t sgd_steps = sw.at("sgd_steps").get<std::size_t>();
    if (sgd_steps > 0) {
      lc.mode = LinearDsmConfig::Mode::sgd;
      lc.steps = sgd_steps;
      lc.batch = sw.at("sgd_batch").get<std::size_t>();
      lc.init_std = sw.at("sgd_init_std").get<double>();
      lc.burn_in = sw.at("burn_in").get<double>();
      RngStream s = task_stream(cfg.master_seed(), u, seed).split(kTrainSeed);
      const SgdResult res = sgd_simulate(lc, s);
      row.set("sgd_stationary_error", res.stationary_error);
      row.set("sgd_grad_cov_trace", res.grad_cov_trace);
    }
  });
  json rates = json::array();
  for (const auto& r : rows)
    if (r.seed == 0 && r.ok)
      rates.push_back({{"direction", r.get("index")}, {"eigenvalue", r.get("eigenvalue")},
                       {"predicted_rho", r.get("predicted_rho")}, {"fitted_rho", r.get("fitted_rho")}});
  report.summary["rates"] = rates;
  write_json(ctx.root / "rates.json", {{"sigma", sigma}, {"eta", sw.at("eta")}, {"eigenvalues", lambda}, {"rates", rates}});
  return rows;
}

std::vector<ReportRow> run_impulse_probe(Context& ctx, ExperimentReport&, std::vector<std::string>& units) {
  const ExperimentConfig& cfg = ctx.config;
  const json& sw = cfg.section("sweep");
  const auto modes = sw.at("resample").get<std::vector<std::string>>();
  std::vector<NetworkFamily> families;
  for (const auto& m : modes) {
    json f = cfg.section("family");
    if (f.at("kind") != "conv_unet_mini") throw ConfigError("impulse_probe: needs the conv_unet_mini family");
    f["resample"] = m;
    families.push_back(family_from_json(f));
    units.push_back(m);
  }
  const ImageShape img = *families.front().image();
  const long row_cfg = sw.at("row").get<long>();
  const long col_cfg = sw.at("col").get<long>();
  const std::size_t r0 = row_cfg < 0 ? img.height / 2 : static_cast<std::size_t>(row_cfg);
  const std::size_t c0 = col_cfg < 0 ? img.width / 2 : static_cast<std::size_t>(col_cfg);
  const double sigma = sw.at("sigma").get<double>();
  return run_tasks(ctx, units, [&](std::size_t u, std::size_t seed, const fs::path& dir, ReportRow& row) {
    RngStream ps = task_stream(cfg.master_seed(), u, seed).split(kParams);
    const ParamSet params = sample_params(families[u], ps);
    const ImpulseResponse ir = impulse_response(families[u], params, r0, c0, sigma);
    write_pgm((dir / "impulse.pgm").string(), ir.image);
    write_csv((dir / "impulse.csv").string(), ir.image);
    row.set("resample", modes[u]);
    row.set("row", r0);
    row.set("col", c0);
    row.set("asymmetry", ir.asymmetry);
  });
}

std::vector<ReportRow> run_geometry_report(Context& ctx, ExperimentReport& report, std::vector<std::string>& units) {
  const ExperimentConfig& cfg = ctx.config;
  const NetworkFamily family = cfg.family();
  const auto kinds = cfg.section("sweep").at("probes").get<std::vector<std::string>>();
  const std::size_t n_export = cfg.section("sweep").at("export").get<std::size_t>();
  std::optional<Dataset> data;
  for (const auto& k : kinds) {
    units.push_back(k);
    if (parse_probe_kind(k) == ProbeKind::around_sample && !data) {
      if (cfg.section("dataset").at("kind") == "mnist") {
        data = load_mnist_split(cfg).train;
      } else {
        RngStream s = shared_stream(cfg.master_seed(), kDataTag);
        data = build_dataset(cfg, family.dim(), s);
      }
    }
  }
  const NoiseSchedule schedule = cfg.schedule();
  std::vector<SadBasis> bases(units.size() * cfg.seeds());
  GeometryOptions go = cfg.geometry_options();
  go.workers = 1;
  std::vector<ReportRow> rows = run_tasks(ctx, units, [&](std::size_t u, std::size_t seed, const fs::path& dir, ReportRow& row) {
    const ProbeDistribution probe = cfg.probe_of_kind(parse_probe_kind(kinds[u]), schedule, data ? &*data : nullptr);
    const GeometryEstimate g =
        estimate_geometry(family, probe, cfg.geometry_samples(), task_stream(cfg.master_seed(), u, seed), go);
    write_geometry((dir / "geometry.csv").string(), g);
    const SadBasis sads = extract_sads(g);
    write_vector_csv(dir / "eigenvalues.csv", "eigenvalue", sads.eigenvalues);
    write_csv((dir / "directions.csv").string(), sads.directions);
    const std::size_t k = std::min(n_export, sads.dim());
    for (std::size_t i = 0; i < k; ++i) {
      write_pgm((dir / unit_name("sad", i)).string() + ".pgm", vector_image(sads.direction(i), family.image()));
      const std::size_t j = sads.dim() - 1 - i;
      write_pgm((dir / unit_name("sad", j)).string() + ".pgm", vector_image(sads.direction(j), family.image()));
    }
    row.set("probe", kinds[u]);
    row.set("min_eigenvalue", sads.eigenvalues.front());
    row.set("max_eigenvalue", sads.eigenvalues.back());
    row.set("trace", g.g.trace());
    row.set("max_standard_error", g.max_standard_error());
    row.set("distinct_eigenvalues", distinct_eigenvalue_count(sads.eigenvalues, 1e-2));
    row.set("rejected", g.rejected);
    bases[u * cfg.seeds() + seed] = sads;
  });
  // Overlap of the bottom subspaces between probes at seed 0: ||U_a^T U_b||_F^2 / k.
  const std::size_t k = std::max<std::size_t>(1, std::min(n_export, family.dim()));
  json overlap = json::object();
  for (std::size_t a = 0; a < units.size(); ++a)
    for (std::size_t b = a + 1; b < units.size(); ++b) {
      const SadBasis& ua = bases[a * cfg.seeds()];
      const SadBasis& ub = bases[b * cfg.seeds()];
      if (ua.dim() == 0 || ub.dim() == 0) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double c = dot(ua.direction(i), ub.direction(j));
          s += c * c;
        }
      overlap[units[a] + "/" + units[b]] = s / static_cast<double>(k);
    }
  report.summary["bottom_subspace_overlap"] = overlap;
  return rows;
}

std::vector<ReportRow> run_sphere_study(Context& ctx, ExperimentReport& report, std::vector<std::string>& units) {
  const ExperimentConfig& cfg = ctx.config;
  const NetworkFamily family = cfg.family();
  const std::size_t d = family.dim();
  if (d < 3) throw ConfigError("sphere_study: dimension must be at least 3");
  const GeometryEstimate g = shared_geometry(ctx, family, nullptr);
  const SadBasis sads = extract_sads(g);
  write_vector_csv(ctx.root / "eigenvalues.csv", "eigenvalue", sads.eigenvalues);
  const auto groups = cfg.section("sweep").at("groups").get<std::vector<std::string>>();
  std::vector<std::size_t> first;
  for (const auto& grp : groups) {
    if (grp == "first") first.push_back(0);
    else if (grp == "middle") first.push_back(d / 2 - 1);
    else if (grp == "last") first.push_back(d - 3);
    else throw ConfigError("sphere_study: unknown group '" + grp + "' (first, middle, last)");
    units.push_back(grp);
  }
  double radius = cfg.section("dataset").value("radius", 0.0);
  if (!(radius > 0.0)) radius = std::sqrt(static_cast<double>(d));
  report.summary["radius"] = radius;
  return run_tasks(ctx, units, [&](std::size_t u, std::size_t seed, const fs::path& dir, ReportRow& row) {
    Matrix basis3(d, 3);
    double eig = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      basis3.set_col(j, sads.direction(first[u] + j));
      eig += sads.eigenvalues[first[u] + j] / 3.0;
    }
    const RngStream task = task_stream(cfg.master_seed(), u, seed);
    RngStream ds = task.split(kTrainData);
    RngStream rs = task.split(kReference);
    const Dataset train_rows = sphere_dataset(basis3, radius, dataset_count(cfg, "n_train"), ds);
    const Dataset ref = sphere_dataset(basis3, radius, dataset_count(cfg, "n_reference"), rs);
    row.set("group", groups[u]);
    row.set("first_index", first[u]);
    row.set("mean_eigenvalue", eig);
    diffusion_task(ctx, family, train_rows, ref.samples, std::nullopt, nullptr, task, dir, row);
  });
}

}  // namespace

RngStream task_stream(std::uint64_t master_seed, std::size_t unit, std::size_t seed) {
  return RngStream(master_seed, kTaskTag).split(unit).split(seed);
}

RngStream shared_stream(std::uint64_t master_seed, std::uint64_t purpose) { return RngStream(master_seed, purpose); }

DatasetSplit load_mnist_split(const ExperimentConfig& config) {
  const json& ds = config.section("dataset");
  std::string dir = ds.at("dir").get<std::string>();
  if (dir.empty()) dir = default_mnist_dir();
  const fs::path images = fs::path(dir) / "images-idx3-ubyte";
  if (!fs::exists(images)) throw ConfigError("dataset: MNIST images not found at " + images.string());
  const fs::path labels = fs::path(dir) / "labels-idx1-ubyte";
  Dataset all = load_idx(images.string(), fs::exists(labels) ? std::optional<std::string>(labels.string()) : std::nullopt);
  const std::size_t factor = ds.at("downscale").get<std::size_t>();
  if (factor > 1) all = downscale(all, factor);
  const std::size_t n_train = ds.at("n_train").get<std::size_t>();
  const std::size_t n_test = ds.at("n_test").get<std::size_t>();
  if (n_train + n_test > all.size())
    throw ConfigError("dataset: requested " + std::to_string(n_train + n_test) + " MNIST rows, have " +
                      std::to_string(all.size()));
  DatasetSplit out = split(slice(all, 0, n_train + n_test), n_train);
  return out;
}

Dataset build_dataset(const ExperimentConfig& config, std::size_t dim, RngStream& stream) {
  const json& ds = config.section("dataset");
  const std::string kind = ds.at("kind").get<std::string>();
  if (kind == "mnist") return load_mnist_split(config).train;
  const std::size_t n = ds.at("n_train").get<std::size_t>();
  if (kind == "gaussian") {
    Dataset out;
    out.samples = gaussian_matrix(stream, n, dim);
    out.provenance = {{"source", "gaussian"}, {"n", n}, {"stream", stream.stream_id()}};
    return out;
  }
  if (kind == "rank_one") {
    Vector v = ds.at("direction").get<std::vector<double>>();
    if (v.empty()) v.assign(dim, 1.0);
    if (v.size() != dim) throw ConfigError("dataset.direction must have " + std::to_string(dim) + " entries");
    return sample_rank_one(normalized(v), dim, n, stream);
  }
  if (kind == "sphere") {
    if (dim < 3) throw ConfigError("dataset: sphere needs dimension >= 3");
    Matrix basis3(dim, 3);
    for (std::size_t j = 0; j < 3; ++j) basis3(j, j) = 1.0;
    double radius = ds.at("radius").get<double>();
    if (!(radius > 0.0)) radius = std::sqrt(static_cast<double>(dim));
    return sphere_dataset(basis3, radius, n, stream);
  }
  throw ConfigError("unknown dataset kind '" + kind + "'");
}

Matrix generate_samples(const ExperimentConfig& config, const NetworkFamily& family, const ParamSet& params,
                        std::size_t n, const RngStream& stream) {
  if (!family.outputs_score())
    return sample_ancestral(family, params, config.schedule(), n, stream, config.ancestral_options()).samples;
  const TrainConfig tc = config.train_config();
  if (!tc.fixed_sigma) throw ConfigError("sampling a score-output family needs train.fixed_sigma");
  const json& s = config.section("sample");
  RngStream chain = stream;
  const Matrix x0 = gaussian_matrix(chain, n, family.dim());
  auto states = sample_langevin(family_score(family, params, *tc.fixed_sigma), x0, s.at("langevin_eta").get<double>(),
                                s.at("langevin_steps").get<std::size_t>(), chain);
  return std::move(states.back());
}

SlicedDistances evaluate_samples(const Matrix& samples, const Matrix& reference, std::size_t projections,
                                 RngStream& stream) {
  if (samples.cols() != reference.cols()) throw DimensionError("evaluate_samples: dimension mismatch");
  const std::size_t l = projections ? projections : default_projection_count(samples.cols());
  const ProjectionSet p = make_projection_set(samples.cols(), l, stream);
  return sliced_distances(samples, reference, p);
}

std::vector<std::size_t> select_sads(const std::string& rule, std::size_t per_group, std::size_t count, std::size_t dim) {
  std::vector<std::size_t> out;
  if (rule == "all") {
    for (std::size_t k = 0; k < dim; ++k) out.push_back(k);
  } else if (rule == "first_middle_last") {
    if (per_group == 0 || 3 * per_group > dim) throw ConfigError("sweep.per_group must be in [1, dim / 3]");
    const std::size_t mid = dim / 2 - per_group / 2;
    for (std::size_t k = 0; k < per_group; ++k) out.push_back(k);
    for (std::size_t k = 0; k < per_group; ++k) out.push_back(mid + k);
    for (std::size_t k = 0; k < per_group; ++k) out.push_back(dim - per_group + k);
  } else if (rule == "spread") {
    if (count < 2 || count > dim) throw ConfigError("sweep.count must be in [2, dim]");
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(static_cast<std::size_t>(std::lround(static_cast<double>(i) * static_cast<double>(dim - 1) /
                                                         static_cast<double>(count - 1))));
  } else {
    throw ConfigError("unknown SAD selection '" + rule + "' (first_middle_last, spread, all)");
  }
  return out;
}

Matrix vector_image(std::span<const double> v, const std::optional<ImageShape>& image) {
  if (image && image->size() == v.size()) {
    Matrix m(image->height, image->width);
    std::copy_n(v.begin(), image->height * image->width, m.data().begin());
    return m;
  }
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(v.size()))));
  if (side * side == v.size()) return Matrix(side, side, std::vector<double>(v.begin(), v.end()));
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  if (!config.recipe()) throw ConfigError("run: the configuration names no recipe");
  const Recipe recipe = *config.recipe();
  Context ctx{config, options, fs::path(config.out()) / std::string(to_string(recipe)), {}};
  fs::create_directories(ctx.root);
  write_json(ctx.root / "config.json", config.to_json());

  ExperimentReport report;
  report.config = config.to_json();
  const std::string started = utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> units;
  switch (recipe) {
    case Recipe::sad_sweep: report.rows = run_sad_sweep(ctx, report, units); break;
    case Recipe::basis_sweep: report.rows = run_basis_sweep(ctx, report, units); break;
    case Recipe::alignment_study: report.rows = run_alignment_study(ctx, report, units); break;
    case Recipe::theory_fig4: report.rows = run_theory_fig4(ctx, report, units); break;
    case Recipe::impulse_probe: report.rows = run_impulse_probe(ctx, report, units); break;
    case Recipe::geometry_report: report.rows = run_geometry_report(ctx, report, units); break;
    case Recipe::sphere_study: report.rows = run_sphere_study(ctx, report, units); break;
  }
  const json audit = audit_row(config, ctx.root, report.rows, units);
  if (!audit.is_null()) report.summary["audit"] = audit;
  report.environment = {
      {"started", started},
      {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
      {"workers", config.workers()},
      {"hardware_threads", std::thread::hardware_concurrency()},
      {"compiler", __VERSION__},
  };
  report.write_csv((ctx.root / "report.csv").string());
  write_json(ctx.root / "report.json", report.to_json());
  return report;
}

}  // namespace sad
