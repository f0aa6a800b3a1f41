#pragma once

// Aggregation of per-example correctness into robust-accuracy tables.
//
// An example counts as robust under a set of (attack, source) columns only
// if it is classified correctly clean and under every column.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "linac/inr.hpp"
#include "linac/json_io.hpp"
#include "linac/lnt1.hpp"

namespace linac::evaluation {

namespace fs = std::filesystem;
using json_io::json;

/// Per-example correctness: clean, and for each (attack, source) pair that
/// was run, under that attack's perturbation computed on that source.
class CorrectnessMask {
 public:
  CorrectnessMask() = default;
  explicit CorrectnessMask(std::vector<bool> clean) : clean_(std::move(clean)) {}

  std::size_t examples() const { return clean_.size(); }
  const std::vector<bool>& clean() const { return clean_; }
  const std::vector<std::string>& attacks() const { return attacks_; }
  const std::vector<std::string>& sources() const { return sources_; }

  void set(const std::string& attack, const std::string& source, std::vector<bool> correct) {
    if (correct.size() != clean_.size())
      throw std::invalid_argument("mask column " + attack + "@" + source + " has " + std::to_string(correct.size()) +
                                  " entries, expected " + std::to_string(clean_.size()));
    if (std::find(attacks_.begin(), attacks_.end(), attack) == attacks_.end()) attacks_.push_back(attack);
    if (std::find(sources_.begin(), sources_.end(), source) == sources_.end()) sources_.push_back(source);
    columns_[{attack, source}] = std::move(correct);
  }

  const std::vector<bool>* get(const std::string& attack, const std::string& source) const {
    auto it = columns_.find({attack, source});
    return it == columns_.end() ? nullptr : &it->second;
  }

  std::size_t column_count() const { return columns_.size(); }

  /// Columns of `other` (same example set) added to this mask.
  void merge(const CorrectnessMask& other) {
    if (other.clean_ != clean_) throw std::invalid_argument("cannot merge masks over different clean results");
    for (const auto& a : other.attacks_)
      for (const auto& s : other.sources_)
        if (const auto* c = other.get(a, s)) set(a, s, *c);
  }

 private:
  std::vector<bool> clean_;
  std::vector<std::string> attacks_, sources_;
  std::map<std::pair<std::string, std::string>, std::vector<bool>> columns_;
};

namespace detail {

inline double mean_of(const std::vector<bool>& v) {
  if (v.empty()) throw std::invalid_argument("empty example set");
  return static_cast<double>(std::count(v.begin(), v.end(), true)) / static_cast<double>(v.size());
}

inline void and_into(std::vector<bool>& acc, const std::vector<bool>& col) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = acc[i] && col[i];
}

}  // namespace detail

inline double clean_accuracy(const CorrectnessMask& m) { return detail::mean_of(m.clean()); }

/// Correct clean and under one (attack, source) column.
inline double robust_accuracy(const CorrectnessMask& m, const std::string& attack, const std::string& source) {
  const auto* col = m.get(attack, source);
  if (!col) throw std::invalid_argument("no mask column " + attack + "@" + source);
  auto acc = m.clean();
  detail::and_into(acc, *col);
  return detail::mean_of(acc);
}

/// Correct clean and under every column.
inline double best_known(const CorrectnessMask& m) {
  if (m.examples() == 0) throw std::invalid_argument("best_known: empty example set");
  if (m.column_count() == 0) throw std::invalid_argument("best_known: no attack columns");
  auto acc = m.clean();
  for (const auto& a : m.attacks())
    for (const auto& s : m.sources())
      if (const auto* c = m.get(a, s)) detail::and_into(acc, *c);
  return detail::mean_of(acc);
}

/// Correct clean and under `attack` from every source it was run from.
inline double best_adversary(const CorrectnessMask& m, const std::string& attack) {
  auto acc = m.clean();
  bool any = false;
  for (const auto& s : m.sources())
    if (const auto* c = m.get(attack, s)) {
      detail::and_into(acc, *c);
      any = true;
    }
  if (!any) throw std::invalid_argument("best_adversary: attack '" + attack + "' has no sources");
  return detail::mean_of(acc);
}

/// Correct clean and under every attack computed on `source`.
inline double best_known_for_source(const CorrectnessMask& m, const std::string& source) {
  auto acc = m.clean();
  bool any = false;
  for (const auto& a : m.attacks())
    if (const auto* c = m.get(a, source)) {
      detail::and_into(acc, *c);
      any = true;
    }
  if (!any) throw std::invalid_argument("no columns for source '" + source + "'");
  return detail::mean_of(acc);
}

/// Fractions in [0, 1]; missing cells are empty.
struct RobustReport {
  double clean = 0;
  std::vector<std::string> attacks;
  std::vector<std::string> sources;
  std::vector<std::vector<std::optional<double>>> cells;  // [attack][source]
  std::vector<double> best_adversary;                     // per attack
  std::vector<std::optional<double>> best_known_per_source;
  double best_known = 0;
  json metadata = json::object();
};

inline RobustReport make_report(const CorrectnessMask& m, json metadata = json::object()) {
  RobustReport r;
  r.clean = clean_accuracy(m);
  r.attacks = m.attacks();
  r.sources = m.sources();
  for (const auto& a : r.attacks) {
    std::vector<std::optional<double>> row;
    for (const auto& s : r.sources)
      row.push_back(m.get(a, s) ? std::optional<double>(robust_accuracy(m, a, s)) : std::nullopt);
    r.cells.push_back(std::move(row));
    r.best_adversary.push_back(best_adversary(m, a));
  }
  for (const auto& s : r.sources) {
    bool any = false;
    for (const auto& a : r.attacks) any |= m.get(a, s) != nullptr;
    r.best_known_per_source.push_back(any ? std::optional<double>(best_known_for_source(m, s)) : std::nullopt);
  }
  r.best_known = best_known(m);
  r.metadata = std::move(metadata);
  return r;
}

/// Percentage with two decimals ("81.91").
inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

inline std::string report_csv(const RobustReport& r) {
  std::ostringstream os;
  os << "attack";
  for (const auto& s : r.sources) os << ',' << s;
  os << ",best_adversary\n";
  for (std::size_t a = 0; a < r.attacks.size(); ++a) {
    os << r.attacks[a];
    for (const auto& c : r.cells[a]) os << ',' << (c ? format_percent(*c) : "");
    os << ',' << format_percent(r.best_adversary[a]) << '\n';
  }
  os << "best_known";
  for (const auto& c : r.best_known_per_source) os << ',' << (c ? format_percent(*c) : "");
  os << ',' << format_percent(r.best_known) << '\n';
  return os.str();
}

/// Table as parsed back from CSV: percentages as written.
struct ParsedReport {
  std::vector<std::string> sources;
  std::vector<std::string> rows;
  std::vector<std::vector<std::optional<double>>> values;  // [row][source..., best_adversary]
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline ParsedReport parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("report CSV is empty");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header.front() != "attack" || header.back() != "best_adversary")
    throw std::runtime_error("report CSV header must be attack,<sources>,best_adversary");
  ParsedReport p;
  p.sources.assign(header.begin() + 1, header.end() - 1);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("report CSV row '" + fields.front() + "' has " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(header.size()));
    p.rows.push_back(fields.front());
    std::vector<std::optional<double>> vals;
    for (std::size_t i = 1; i < fields.size(); ++i)
      vals.push_back(fields[i].empty() ? std::nullopt : std::optional<double>(std::stod(fields[i])));
    p.values.push_back(std::move(vals));
  }
  if (p.rows.empty() || p.rows.back() != "best_known") throw std::runtime_error("report CSV must end with best_known");
  return p;
}

inline json report_json(const RobustReport& r) {
  json j{{"clean_accuracy", r.clean}, {"best_known", r.best_known}, {"attacks", r.attacks}, {"sources", r.sources}};
  json cells = json::array();
  for (const auto& row : r.cells) {
    json jr = json::array();
    for (const auto& c : row) jr.push_back(c ? json(*c) : json(nullptr));
    cells.push_back(jr);
  }
  j["robust_accuracy"] = cells;
  j["best_adversary"] = r.best_adversary;
  j["metadata"] = r.metadata;
  return j;
}

/// Writes `<stem>.csv` and the `<stem>.json` sidecar.
inline RobustReport emit_report(const fs::path& stem, const CorrectnessMask& m, json metadata = json::object()) {
  RobustReport r = make_report(m, std::move(metadata));
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream(stem.string() + ".csv") << report_csv(r);
  std::ofstream(stem.string() + ".json") << report_json(r).dump(2) << '\n';
  return r;
}

// ---------------------------------------------------------------------------
// Mask files: one row per example, one 0/1 column per (attack, source).

inline void save_masks(const fs::path& path, const CorrectnessMask& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  std::vector<std::pair<std::string, std::string>> cols;
  os << "example,clean";
  for (const auto& a : m.attacks())
    for (const auto& s : m.sources())
      if (m.get(a, s)) {
        cols.emplace_back(a, s);
        os << ',' << a << '@' << s;
      }
  os << '\n';
  for (std::size_t i = 0; i < m.examples(); ++i) {
    os << i << ',' << int(m.clean()[i]);
    for (const auto& [a, s] : cols) os << ',' << int((*m.get(a, s))[i]);
    os << '\n';
  }
}

inline CorrectnessMask load_masks(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open mask file " + path.string());
  std::string line;
  std::getline(is, line);
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "example" || header[1] != "clean")
    throw std::runtime_error(path.string() + ": mask header must start with example,clean");
  std::vector<std::vector<bool>> cols(header.size() - 1);
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw std::runtime_error(path.string() + ": ragged row " + std::to_string(row));
    for (std::size_t c = 1; c < f.size(); ++c) {
      if (f[c] != "0" && f[c] != "1") throw std::runtime_error(path.string() + ": mask entries must be 0 or 1");
      cols[c - 1].push_back(f[c] == "1");
    }
    ++row;
  }
  CorrectnessMask m(cols[0]);
  for (std::size_t c = 2; c < header.size(); ++c) {
    const auto at = header[c].rfind('@');
    if (at == std::string::npos) throw std::runtime_error(path.string() + ": column '" + header[c] + "' is not attack@source");
    m.set(header[c].substr(0, at), header[c].substr(at + 1), cols[c - 1]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Encoding characterisation

struct KeyDifference {
  std::size_t image = 0;
  std::int64_t key_a = 0, key_b = 0;
  double max_abs = 0;
  double mean_abs = 0;
};

inline KeyDifference key_difference(std::size_t image, PrivateKey a, PrivateKey b, const Tensor<float>& ta,
                                    const Tensor<float>& tb) {
  if (ta.dims() != tb.dims()) throw std::invalid_argument("activation images differ in shape");
  KeyDifference d{image, a.value, b.value};
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double g = std::abs(static_cast<double>(ta[i]) - static_cast<double>(tb[i]));
    d.max_abs = std::max(d.max_abs, g);
    d.mean_abs += g;
  }
  if (ta.size()) d.mean_abs /= static_cast<double>(ta.size());
  return d;
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max] of the values; the top edge is inclusive.
inline Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) {
    h.edges.assign(bins + 1, 0.0);
    return h;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it, width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + width * static_cast<double>(b));
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

struct CharacterisationSummary {
  double mean_final_error = 0;
  Histogram histogram;
  std::size_t curve_rows = 0;
};

/// Writes curves.csv (image,step,lr,loss,batch_sse), final_errors.csv and
/// final_errors.lnt1, histogram.csv and key_differences.csv under `dir`.
inline CharacterisationSummary characterisation_dump(const fs::path& dir,
                                                     std::span<const std::vector<inr::TraceEntry>> traces,
                                                     std::span<const double> final_errors,
                                                     std::span<const KeyDifference> key_diffs,
                                                     std::size_t bins = 20) {
  fs::create_directories(dir);
  CharacterisationSummary s;
  {
    std::ofstream os(dir / "curves.csv");
    os << "image,step,lr,loss,batch_sse\n" << std::setprecision(9);
    for (std::size_t i = 0; i < traces.size(); ++i)
      for (const auto& t : traces[i]) {
        os << i << ',' << t.step << ',' << t.lr << ',' << t.loss << ',' << t.batch_sse << '\n';
        ++s.curve_rows;
      }
  }
  {
    std::ofstream os(dir / "final_errors.csv");
    os << "image,sse_per_pixel\n" << std::setprecision(12);
    double sum = 0;
    for (std::size_t i = 0; i < final_errors.size(); ++i) {
      os << i << ',' << final_errors[i] << '\n';
      sum += final_errors[i];
    }
    s.mean_final_error = final_errors.empty() ? 0.0 : sum / static_cast<double>(final_errors.size());
    lnt1::save(dir / "final_errors.lnt1",
               Tensor<double>({final_errors.size()}, std::vector<double>(final_errors.begin(), final_errors.end())));
  }
  s.histogram = histogram(final_errors, bins);
  {
    std::ofstream os(dir / "histogram.csv");
    os << "bin_low,bin_high,count\n" << std::setprecision(12);
    for (std::size_t b = 0; b < s.histogram.counts.size(); ++b)
      os << s.histogram.edges[b] << ',' << s.histogram.edges[b + 1] << ',' << s.histogram.counts[b] << '\n';
  }
  {
    std::ofstream os(dir / "key_differences.csv");
    os << "image,key_a,key_b,max_abs_diff,mean_abs_diff\n" << std::setprecision(12);
    for (const auto& d : key_diffs)
      os << d.image << ',' << d.key_a << ',' << d.key_b << ',' << d.max_abs << ',' << d.mean_abs << '\n';
  }
  return s;
}

}  // namespace linac::evaluation
