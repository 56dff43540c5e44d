#include "sad/experiment/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "sad/error.hpp"
#include "sad/geometry/geometry.hpp"

namespace sad {

using nlohmann::json;

namespace {

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
  }
  if (v.is_number() || v.is_boolean()) return v.dump();
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

void write_rows(std::ostream& os, const std::vector<std::string>& columns, const std::vector<const ReportRow*>& rows) {
  os << "unit,seed,status";
  for (const auto& c : columns) os << ',' << c;
  os << ",error\n";
  for (const ReportRow* r : rows) {
    os << csv_cell(r->unit) << ',' << r->seed << ',' << (r->ok ? "ok" : "failed");
    for (const auto& c : columns) os << ',' << csv_cell(r->get(c));
    os << ',' << csv_cell(r->error) << '\n';
  }
}

}  // namespace

void ReportRow::set(const std::string& name, json value) {
  for (auto& [k, v] : fields)
    if (k == name) {
      v = std::move(value);
      return;
    }
  fields.emplace_back(name, std::move(value));
}

const json& ReportRow::get(const std::string& name) const {
  static const json null_value;
  for (const auto& [k, v] : fields)
    if (k == name) return v;
  return null_value;
}

double ReportRow::number(const std::string& name) const {
  const json& v = get(name);
  return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

std::size_t ExperimentReport::failures() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.ok ? 0 : 1;
  return n;
}

std::vector<std::string> ExperimentReport::columns() const {
  std::vector<std::string> cols;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.fields)
      if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
  return cols;
}

void ExperimentReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("report: cannot open " + path);
  std::vector<const ReportRow*> ptrs;
  for (const auto& r : rows) ptrs.push_back(&r);
  write_rows(os, columns(), ptrs);
}

json ExperimentReport::to_json() const {
  json j_rows = json::array();
  for (const auto& r : rows) {
    json row = {{"unit", r.unit}, {"seed", r.seed}, {"status", r.ok ? "ok" : "failed"}};
    for (const auto& [k, v] : r.fields) row[k] = v;
    if (!r.ok) row["error"] = r.error;
    j_rows.push_back(std::move(row));
  }
  return {{"config", config}, {"rows", j_rows}, {"summary", summary}, {"environment", environment},
          {"failures", failures()}};
}

void write_row_csv(const std::string& path, const ReportRow& row) {
  std::ofstream os(path);
  if (!os) throw Error("report: cannot open " + path);
  std::vector<std::string> cols;
  for (const auto& [k, v] : row.fields) cols.push_back(k);
  write_rows(os, cols, {&row});
}

std::vector<ReportRow> read_report_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("report: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("report: empty file " + path);
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "unit" || header[1] != "seed" || header[2] != "status" ||
      header.back() != "error")
    throw ParseError("report: unexpected header in " + path);
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("report: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " cells");
    ReportRow r;
    r.unit = cells[0];
    try {
      r.seed = std::stoull(cells[1]);
    } catch (const std::exception&) {
      throw ParseError("report: bad seed on line " + std::to_string(lineno));
    }
    r.ok = cells[2] == "ok";
    r.error = cells.back();
    for (std::size_t c = 3; c + 1 < header.size(); ++c) {
      const std::string& s = cells[c];
      if (s.empty()) {
        r.fields.emplace_back(header[c], nullptr);
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end && *end == '\0') r.fields.emplace_back(header[c], v);
      else r.fields.emplace_back(header[c], s);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

Matrix heatmap_grid(const std::vector<ReportRow>& rows, const OrthoTransform& basis, const std::string& metric) {
  const std::size_t d = basis.dim;
  if (basis.index_layout.size() != d) throw PreconditionError("heatmap_grid: basis has no index layout");
  std::vector<double> sum(d, 0.0);
  std::vector<std::size_t> count(d, 0);
  for (const auto& r : rows) {
    if (!r.ok) continue;
    const double idx = r.number("index");
    const double v = r.number(metric);
    if (std::isnan(idx) || std::isnan(v)) continue;
    if (idx < 0 || idx >= static_cast<double>(d)) throw PreconditionError("heatmap_grid: row index out of range");
    const auto k = static_cast<std::size_t>(idx);
    sum[k] += v;
    ++count[k];
  }
  std::size_t h = 0;
  std::size_t w = 0;
  for (const auto& bi : basis.index_layout) {
    h = std::max(h, bi.grid_row + 1);
    w = std::max(w, bi.grid_col + 1);
  }
  Matrix cells(h, w, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < d; ++k) {
    if (count[k] == 0) throw PreconditionError("heatmap_grid: no '" + metric + "' row for basis column " + std::to_string(k));
    cells(basis.index_layout[k].grid_row, basis.index_layout[k].grid_col) = sum[k] / static_cast<double>(count[k]);
  }
  if (basis.layout != LayoutKind::frequency) return cells;
  Matrix grid(2 * h - 1, 2 * w - 1);
  for (std::size_t r = 0; r < grid.rows(); ++r)
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      const auto fr = static_cast<std::size_t>(std::abs(static_cast<long>(r) - static_cast<long>(h - 1)));
      const auto fc = static_cast<std::size_t>(std::abs(static_cast<long>(c) - static_cast<long>(w - 1)));
      grid(r, c) = cells(fr, fc);
    }
  return grid;
}

Matrix render_heatmap_grid(const std::vector<ReportRow>& rows, const OrthoTransform& basis, const std::string& metric,
                           const std::string& stem) {
  Matrix grid = heatmap_grid(rows, basis, metric);
  write_pgm(stem + ".pgm", grid);
  write_csv(stem + ".csv", grid);
  return grid;
}

}  // namespace sad
