#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "octex/csv.hpp"
#include "octex/extract.hpp"
#include "octex/field.hpp"

namespace octex {

struct GoldRecord {
  std::string report_id;
  FieldId field;
  double value = 0;
  int decimals = 0;  // as written in the gold file; drives comparison

  friend bool operator==(const GoldRecord&, const GoldRecord&) = default;
};

inline int count_decimals(std::string_view s) {
  const auto dot = s.find('.');
  return dot == std::string_view::npos ? 0 : static_cast<int>(s.size() - dot - 1);
}

inline std::string gold_value_text(const GoldRecord& g) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(g.decimals) << g.value;
  return os.str();
}

inline std::string csv_header_gold() { return "report_id,kind,name,eye,value\n"; }

inline std::string csv_row(const GoldRecord& g) {
  return csv_quote(g.report_id) + "," + std::string(to_string(g.field.kind())) + "," + std::string(g.field.spec().name) +
         "," + std::string(to_string(g.field.eye)) + "," + gold_value_text(g) + "\n";
}

inline std::vector<GoldRecord> parse_gold_csv(std::string_view bytes) {
  const auto rows = parse_csv(bytes);
  if (rows.empty()) throw SchemaError("gold file is empty");
  const std::vector<std::string> header{"report_id", "kind", "name", "eye", "value"};
  if (rows.front() != header) throw SchemaError("gold header must be report_id,kind,name,eye,value");

  std::vector<GoldRecord> out;
  std::set<std::pair<std::string, FieldId>> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = "gold line " + std::to_string(i + 1);
    if (r.size() != 5) throw SchemaError(where + ": expected 5 columns");
    const auto name = field_name_from_string(r[2]);
    if (!name) throw SchemaError(where + ": unknown field name '" + r[2] + "'");
    GoldRecord g;
    g.report_id = r[0];
    g.field = {*name, parse_eye(r[3])};
    if (parse_report_kind(r[1]) != g.field.kind()) throw SchemaError(where + ": kind does not match field " + r[2]);
    const auto parsed = detail::parse_decimal(r[4], 4, 4);
    if (!parsed) throw SchemaError(where + ": value '" + r[4] + "' is not a number");
    g.value = *parsed;
    g.decimals = count_decimals(r[4]);
    if (!seen.emplace(g.report_id, g.field).second)
      throw SchemaError(where + ": duplicate gold value for " + g.report_id + " " + g.field.key());
    out.push_back(std::move(g));
  }
  return out;
}

// A prediction is correct when it equals the gold value at the gold value's
// written precision.
inline bool value_matches(double predicted, const GoldRecord& gold) {
  const double scale = std::pow(10.0, gold.decimals);
  return std::llround(predicted * scale) == std::llround(gold.value * scale);
}

struct Tally {
  std::int64_t detected = 0;
  std::int64_t correct = 0;
};

struct PrecisionRow {
  FieldId field;
  std::int64_t detected = 0;
  std::int64_t correct = 0;

  std::optional<double> precision() const {
    if (detected == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(detected);
  }

  friend bool operator==(const PrecisionRow&, const PrecisionRow&) = default;
};

inline constexpr std::string_view kUndefined = "\xE2\x80\x94";  // em dash, as printed in the tables

inline std::string format_precision(const PrecisionRow& r) {
  const auto p = r.precision();
  if (!p) return std::string(kUndefined);
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << *p;
  return os.str();
}

using GoldIndex = std::map<std::string, std::map<FieldId, const GoldRecord*>>;

inline GoldIndex index_gold(const std::vector<GoldRecord>& gold) {
  GoldIndex idx;
  for (const auto& g : gold) idx[g.report_id][g.field] = &g;
  return idx;
}

namespace detail {

inline void tally_report(const ReportExtraction& rx, const GoldIndex& gold, std::map<FieldId, Tally>& out) {
  const auto& truth = gold.at(rx.report_id);
  for (const auto& f : rx.fields) {
    if (!f.is_detected()) continue;
    auto& t = out[f.field()];
    ++t.detected;
    auto it = truth.find(f.field());
    if (it != truth.end() && value_matches(*f.value(), *it->second)) ++t.correct;
  }
}

}  // namespace detail

// One row per field of every report kind present in predictions or gold,
// in table order. Partial tallies from `parallelism` workers are summed.
inline std::vector<PrecisionRow> score(const std::vector<ReportExtraction>& predictions,
                                       const std::vector<GoldRecord>& gold, unsigned parallelism = 1) {
  const auto idx = index_gold(gold);
  std::vector<std::string> orphans;
  for (const auto& rx : predictions)
    if (!idx.count(rx.report_id)) orphans.push_back(rx.report_id);
  if (!orphans.empty()) {
    std::sort(orphans.begin(), orphans.end());
    orphans.erase(std::unique(orphans.begin(), orphans.end()), orphans.end());
    throw OrphanPredictionError(orphans);
  }

  parallelism = std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(predictions.size())));
  std::vector<std::map<FieldId, Tally>> partial(parallelism);
  if (parallelism == 1) {
    for (const auto& rx : predictions) detail::tally_report(rx, idx, partial[0]);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < parallelism; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < predictions.size(); i += parallelism)
          detail::tally_report(predictions[i], idx, partial[w]);
      });
    for (auto& th : pool) th.join();
  }

  std::set<ReportKind> kinds;
  for (const auto& rx : predictions) kinds.insert(rx.kind);
  for (const auto& g : gold) kinds.insert(g.field.kind());

  std::vector<PrecisionRow> rows;
  for (auto kind : kinds)
    for (const auto& id : all_fields(kind)) {
      PrecisionRow row{id, 0, 0};
      for (const auto& p : partial)
        if (auto it = p.find(id); it != p.end()) {
          row.detected += it->second.detected;
          row.correct += it->second.correct;
        }
      rows.push_back(row);
    }
  return rows;
}

// Text table with OD and OS precision / detected-count column pairs, one line
// per field name in table order.
inline std::string render_table(const std::vector<PrecisionRow>& rows, ReportKind kind) {
  std::map<FieldId, const PrecisionRow*> by_id;
  for (const auto& r : rows)
    if (r.field.kind() == kind) by_id[r.field] = &r;
  std::vector<std::string> missing;
  for (const auto& id : all_fields(kind))
    if (!by_id.count(id)) missing.push_back(id.key());
  if (!missing.empty()) {
    std::string msg = "precision rows missing for:";
    for (const auto& m : missing) msg += " " + m;
    throw ContractError(msg);
  }

  const auto names = field_names(kind);
  std::size_t label_w = 5;
  for (auto n : names) label_w = std::max(label_w, spec_of(n).table_label.size());

  // Right-align by display width; the undefined marker is one column wide.
  auto cell = [](const std::string& s, std::size_t w) {
    const std::size_t shown = s == kUndefined ? 1 : s.size();
    return std::string(w > shown ? w - shown : 0, ' ') + s;
  };
  auto left = [](std::string_view s, std::size_t w) { return std::string(s) + std::string(w - s.size(), ' '); };

  std::ostringstream os;
  os << left("Field", label_w) << " | " << cell("OD Precision", 12) << " | " << cell("OD Detected", 11) << " | "
     << cell("OS Precision", 12) << " | " << cell("OS Detected", 11) << "\n";
  os << std::string(label_w, '-') << "-+-" << std::string(12, '-') << "-+-" << std::string(11, '-') << "-+-"
     << std::string(12, '-') << "-+-" << std::string(11, '-') << "\n";
  for (auto n : names) {
    const auto& od = *by_id.at({n, Eye::OD});
    const auto& os_row = *by_id.at({n, Eye::OS});
    os << left(spec_of(n).table_label, label_w) << " | " << cell(format_precision(od), 12) << " | "
       << cell(std::to_string(od.detected), 11) << " | " << cell(format_precision(os_row), 12) << " | "
       << cell(std::to_string(os_row.detected), 11) << "\n";
  }
  return os.str();
}

inline nlohmann::json to_json(const PrecisionRow& r) {
  nlohmann::json j = {{"name", r.field.spec().name},
                      {"eye", to_string(r.field.eye)},
                      {"detected", r.detected},
                      {"correct", r.correct}};
  if (auto p = r.precision())
    j["precision"] = *p;
  else
    j["precision"] = nullptr;
  return j;
}

inline nlohmann::json precision_json(const std::vector<PrecisionRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  return {{"rows", std::move(arr)}};
}

}  // namespace octex
