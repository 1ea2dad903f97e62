#pragma once

// CSV ingestion and export for survival records, PED frames and curves.
//
// Records: id,entry,exit,cause,cluster,<features...> (entry and cluster optional)
// PED:     id,j,tj,delta,exposure,offset,cause[,cluster],<features...>

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "pamm/error.hpp"
#include "pamm/inference.hpp"
#include "pamm/ped.hpp"

namespace pamm {

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& raw, std::size_t line, const std::string& column) {
  const std::string s = trim(raw);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw InputError("line " + std::to_string(line) + ", column '" + column + "': expected a number, got '" +
                     s + "'");
  return v;
}

inline int parse_int(const std::string& raw, std::size_t line, const std::string& column) {
  const std::string s = trim(raw);
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InputError("line " + std::to_string(line) + ", column '" + column + "': expected an integer, got '" +
                     s + "'");
  return v;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_of_row;
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw InputError("line " + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                       " columns, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_of_row.push_back(n);
  }
  if (t.header.empty()) throw InputError("empty CSV file");
  return t;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Records

inline SurvivalData read_records_csv(std::istream& in) {
  const auto t = detail::read_csv(in);
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c].empty()) throw InputError("line 1: empty column name at position " + std::to_string(c + 1));
    if (!col.emplace(t.header[c], c).second) throw InputError("line 1: duplicate column '" + t.header[c] + "'");
  }
  for (const char* req : {"id", "exit", "cause"})
    if (!col.count(req)) throw InputError(std::string("missing required column '") + req + "'");
  if (t.rows.empty()) throw InputError("no records");

  SurvivalData data;
  data.has_clusters = col.count("cluster") > 0;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const auto& h = t.header[c];
    if (h == "id" || h == "entry" || h == "exit" || h == "cause" || h == "cluster") continue;
    feature_cols.push_back(c);
    data.feature_names.push_back(h);
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    const std::size_t line = t.line_of_row[r];
    SurvivalRecord rec;
    rec.id = f[col["id"]];
    if (rec.id.empty()) throw InputError("line " + std::to_string(line) + ", column 'id': empty identifier");
    rec.entry = col.count("entry") ? detail::parse_number(f[col["entry"]], line, "entry") : 0.0;
    rec.exit = detail::parse_number(f[col["exit"]], line, "exit");
    rec.cause = detail::parse_int(f[col["cause"]], line, "cause");
    if (data.has_clusters) rec.cluster = f[col["cluster"]];
    for (std::size_t c : feature_cols) rec.features.push_back(detail::parse_number(f[c], line, t.header[c]));
    try {
      validate(rec);
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(line) + ": " + e.what());
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

inline SurvivalData read_records_csv(const std::string& path) {
  auto in = detail::open_input(path);
  return read_records_csv(in);
}

inline void write_records_csv(std::ostream& out, const SurvivalData& data) {
  out << "id,entry,exit,cause";
  if (data.has_clusters) out << ",cluster";
  for (const auto& f : data.feature_names) out << ',' << detail::csv_field(f);
  out << '\n';
  for (const auto& r : data.records) {
    out << detail::csv_field(r.id) << ',' << format_double(r.entry) << ',' << format_double(r.exit) << ','
        << r.cause;
    if (data.has_clusters) out << ',' << detail::csv_field(r.cluster);
    for (double v : r.features) out << ',' << format_double(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// PED

inline void write_ped_csv(std::ostream& out, const PedFrame& ped) {
  out << "id,j,tj,delta,exposure,offset,cause";
  if (ped.has_clusters) out << ",cluster";
  for (const auto& f : ped.feature_names) out << ',' << detail::csv_field(f);
  out << '\n';
  for (const auto& r : ped.rows) {
    out << detail::csv_field(r.id) << ',' << r.interval << ',' << format_double(r.tj) << ',' << r.status << ','
        << format_double(r.exposure) << ',' << format_double(r.offset) << ',' << r.cause;
    if (ped.has_clusters) out << ',' << detail::csv_field(r.cluster);
    for (double v : r.features) out << ',' << format_double(v);
    out << '\n';
  }
}

/// Reads a PED CSV written by write_ped_csv. Cut points and the expansion
/// flag come from the accompanying cuts document.
inline PedFrame read_ped_csv(std::istream& in, const CutPoints& cuts, int n_causes, bool expanded) {
  const auto t = detail::read_csv(in);
  const std::vector<std::string> fixed{"id", "j", "tj", "delta", "exposure", "offset", "cause"};
  for (std::size_t c = 0; c < fixed.size(); ++c)
    if (c >= t.header.size() || t.header[c] != fixed[c])
      throw InputError("PED CSV: expected column '" + fixed[c] + "' at position " + std::to_string(c + 1));
  if (t.rows.empty()) throw InputError("no PED rows");
  PedFrame ped;
  ped.cuts = cuts;
  ped.n_causes = n_causes;
  ped.expanded = expanded;
  std::size_t first_feature = fixed.size();
  if (t.header.size() > fixed.size() && t.header[fixed.size()] == "cluster") {
    ped.has_clusters = true;
    ++first_feature;
  }
  ped.feature_names.assign(t.header.begin() + static_cast<std::ptrdiff_t>(first_feature), t.header.end());

  // a new record starts whenever the id changes or the interval does not advance
  std::string prev_id;
  std::size_t prev_j = 0;
  const std::size_t K = expanded ? static_cast<std::size_t>(n_causes) : 1;
  std::size_t replica = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    const std::size_t line = t.line_of_row[r];
    PedRow row;
    row.id = f[0];
    const int j = detail::parse_int(f[1], line, "j");
    if (j < 1 || static_cast<std::size_t>(j) > cuts.n_intervals())
      throw InputError("line " + std::to_string(line) + ", column 'j': interval outside the cut points");
    row.interval = static_cast<std::size_t>(j);
    row.tj = detail::parse_number(f[2], line, "tj");
    row.status = detail::parse_int(f[3], line, "delta");
    if (row.status != 0 && row.status != 1)
      throw InputError("line " + std::to_string(line) + ", column 'delta': must be 0 or 1");
    row.exposure = detail::parse_number(f[4], line, "exposure");
    if (!(row.exposure > 0.0))
      throw InputError("line " + std::to_string(line) + ", column 'exposure': must be > 0");
    row.offset = detail::parse_number(f[5], line, "offset");
    row.cause = detail::parse_int(f[6], line, "cause");
    if (ped.has_clusters) row.cluster = f[7];
    for (std::size_t c = first_feature; c < f.size(); ++c)
      row.features.push_back(detail::parse_number(f[c], line, t.header[c]));

    const bool same_unit = row.id == prev_id && row.interval == prev_j;
    if (same_unit && ++replica < K) {
      // another cause replica of the same (record, interval)
    } else {
      replica = 0;
      if (ped.rows.empty() || row.id != prev_id || row.interval <= prev_j) ++ped.n_records;
    }
    row.record = ped.n_records - 1;
    prev_id = row.id;
    prev_j = row.interval;
    ped.rows.push_back(std::move(row));
  }
  return ped;
}

// ---------------------------------------------------------------------------
// Curves

/// `id,t,S[,cif_1..cif_K]` on a time grid for every record.
inline void write_curves_csv(std::ostream& out, const std::vector<std::string>& ids,
                             const std::vector<CifSet>& curves, const std::vector<double>& grid) {
  if (ids.size() != curves.size()) throw InputError("curve export: id count mismatch");
  const std::size_t K = curves.empty() ? 1 : curves.front().n_causes();
  out << "id,t,S";
  if (K >= 2)
    for (std::size_t k = 1; k <= K; ++k) out << ",cif_" << k;
  out << '\n';
  for (std::size_t i = 0; i < curves.size(); ++i)
    for (double t : grid) {
      out << detail::csv_field(ids[i]) << ',' << format_double(t) << ',' << format_double(curves[i].survival(t));
      if (K >= 2)
        for (std::size_t k = 0; k < K; ++k) out << ',' << format_double(curves[i].cif(k, t));
      out << '\n';
    }
}

}  // namespace pamm
