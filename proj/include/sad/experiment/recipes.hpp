#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sad/data/dataset.hpp"
#include "sad/experiment/config.hpp"
#include "sad/experiment/report.hpp"
#include "sad/metrics/wasserstein.hpp"
#include "sad/networks/family.hpp"
#include "sad/networks/params.hpp"

namespace sad {

struct RunOptions {
  /// Progress messages (one line each); ignored when empty.
  std::function<void(const std::string&)> log;
};

/// Executes the configured recipe under `<out>/<recipe>/` and returns its
/// report. Units x seeds run on `workers` threads; a failing task is
/// recorded in its row and the remaining tasks continue. Writes report.csv,
/// report.json and config.json next to the per-task directories
/// `<unit>/<seed>/`.
ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Stream of task (unit, seed): RngStream(master_seed, tag).split(unit).split(seed).
RngStream task_stream(std::uint64_t master_seed, std::size_t unit, std::size_t seed);
/// Stream shared by every task of a run (geometry, shared datasets).
RngStream shared_stream(std::uint64_t master_seed, std::uint64_t purpose);

/// MNIST subset downscaled per the dataset section, split into train and
/// test rows. Throws ConfigError when the files are missing.
DatasetSplit load_mnist_split(const ExperimentConfig& config);

/// Training rows for the `train` subcommand and generic recipes: rank_one
/// (along dataset.direction, or the normalized all-ones vector), gaussian,
/// sphere (first three canonical axes) or the MNIST train split.
Dataset build_dataset(const ExperimentConfig& config, std::size_t dim, RngStream& stream);

/// Draws n samples from a trained model: ancestral sampling for noise
/// predictors, Langevin chains from N(0, I) at train.fixed_sigma for
/// score-output families.
Matrix generate_samples(const ExperimentConfig& config, const NetworkFamily& family, const ParamSet& params,
                        std::size_t n, const RngStream& stream);

/// SW2 and MSW2 with L projections (0 selects 64 D).
SlicedDistances evaluate_samples(const Matrix& samples, const Matrix& reference, std::size_t projections,
                                 RngStream& stream);

/// SAD indices (ascending eigenvalue order) chosen by a selection rule:
/// "first_middle_last" takes `per_group` from each end and the middle,
/// "spread" takes `count` evenly spaced, "all" takes every index.
std::vector<std::size_t> select_sads(const std::string& rule, std::size_t per_group, std::size_t count, std::size_t dim);

/// Image for PGM export: channel 0 of the image layout when known, a square
/// when dim is a perfect square, a single row otherwise.
Matrix vector_image(std::span<const double> v, const std::optional<ImageShape>& image);

}  // namespace sad
