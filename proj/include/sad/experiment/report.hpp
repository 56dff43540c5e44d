#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sad/bases/basis.hpp"
#include "sad/numerics/matrix.hpp"

namespace sad {

/// One (unit, seed) outcome. Metric fields keep their insertion order; the
/// CSV header is the union of field names in first-appearance order.
struct ReportRow {
  std::string unit;
  std::size_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<std::pair<std::string, nlohmann::json>> fields;

  void set(const std::string& name, nlohmann::json value);
  /// Field value, or null when absent.
  const nlohmann::json& get(const std::string& name) const;
  /// Numeric field; NaN when absent or not a number.
  double number(const std::string& name) const;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<ReportRow> rows;
  /// Non-deterministic facts about the run (timestamps, host); kept out of
  /// the CSV so that its body is reproducible.
  nlohmann::json environment = nlohmann::json::object();
  /// Recipe-level results that are not per-row (fitted rates, audits).
  nlohmann::json summary = nlohmann::json::object();

  std::size_t failures() const;
  std::vector<std::string> columns() const;
  void write_csv(const std::string& path) const;
  nlohmann::json to_json() const;
};

/// Writes a single-row CSV with the same layout as ExperimentReport::write_csv.
void write_row_csv(const std::string& path, const ReportRow& row);

/// Reads a report CSV back into rows (all metric fields as numbers where
/// they parse, strings otherwise). Throws ParseError.
std::vector<ReportRow> read_report_csv(const std::string& path);

/// Per-cell metric means over seeds, laid out by the basis index layout.
///
/// Rows are matched to basis columns through their "index" field. Frequency
/// layouts are centred and mirrored: an H x W layout becomes a (2H - 1) x
/// (2W - 1) grid with the zero-frequency cell in the middle and cell
/// (H - 1 + r, W - 1 + c) holding frequency (|r|, |c|). Throws
/// PreconditionError when a basis column has no ok row.
Matrix heatmap_grid(const std::vector<ReportRow>& rows, const OrthoTransform& basis, const std::string& metric);

/// Writes `<stem>.pgm` and `<stem>.csv` for heatmap_grid and returns the grid.
Matrix render_heatmap_grid(const std::vector<ReportRow>& rows, const OrthoTransform& basis, const std::string& metric,
                           const std::string& stem);

}  // namespace sad
