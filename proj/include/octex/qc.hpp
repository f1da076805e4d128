#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "octex/csv.hpp"
#include "octex/extract.hpp"
#include "octex/field.hpp"
#include "octex/layout.hpp"
#include "octex/token_stream.hpp"

namespace octex {

enum class QcKind : std::uint8_t {
  OutOfRange,
  LowConfidence,
  OdOsSwapSuspect,
  SequenceShiftSuspect,
  HorizontalFlipSuspect,
  VerticalFlipSuspect,
  SlotConflict,
};

enum class Severity : std::uint8_t { Warn, Reject };

inline std::string_view to_string(QcKind k) {
  switch (k) {
    case QcKind::OutOfRange: return "OutOfRange";
    case QcKind::LowConfidence: return "LowConfidence";
    case QcKind::OdOsSwapSuspect: return "OdOsSwapSuspect";
    case QcKind::SequenceShiftSuspect: return "SequenceShiftSuspect";
    case QcKind::HorizontalFlipSuspect: return "HorizontalFlipSuspect";
    case QcKind::VerticalFlipSuspect: return "VerticalFlipSuspect";
    case QcKind::SlotConflict: return "SlotConflict";
  }
  return "?";
}

inline QcKind parse_qc_kind(std::string_view s) {
  for (auto k : {QcKind::OutOfRange, QcKind::LowConfidence, QcKind::OdOsSwapSuspect, QcKind::SequenceShiftSuspect,
                 QcKind::HorizontalFlipSuspect, QcKind::VerticalFlipSuspect, QcKind::SlotConflict})
    if (to_string(k) == s) return k;
  throw SchemaError("unknown qc flag kind: " + std::string(s));
}

inline std::string_view to_string(Severity s) { return s == Severity::Warn ? "Warn" : "Reject"; }

inline Severity parse_severity(std::string_view s) {
  if (s == "Warn") return Severity::Warn;
  if (s == "Reject") return Severity::Reject;
  throw SchemaError("unknown severity: " + std::string(s));
}

struct QcFlag {
  std::string report_id;
  std::vector<FieldId> fields_involved;
  QcKind kind = QcKind::OutOfRange;
  std::string detail;
  Severity severity = Severity::Warn;

  friend bool operator==(const QcFlag&, const QcFlag&) = default;
};

struct Interval {
  double lo = 0;
  double hi = 0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

// Closed plausibility bounds per value grammar.
struct RangePolicy {
  std::map<ValueType, Interval> bounds{
      {ValueType::ThicknessUm, {0, 300}}, {ValueType::Ratio, {0, 1}},      {ValueType::RimArea, {0, 5}},
      {ValueType::DiscArea, {0.2, 6}},    {ValueType::CupVolume, {0, 2}},  {ValueType::Percent, {0, 100}},
      {ValueType::Signal, {0, 10}},       {ValueType::GclIplUm, {0, 250}},
  };

  const Interval& of(ValueType t) const { return bounds.at(t); }
};

inline constexpr std::pair<ValueType, std::string_view> kRangePolicyKeys[] = {
    {ValueType::ThicknessUm, "thickness_um"}, {ValueType::Ratio, "ratio"},
    {ValueType::RimArea, "rim_area_mm2"},     {ValueType::DiscArea, "disc_area_mm2"},
    {ValueType::CupVolume, "cup_volume_mm3"}, {ValueType::Percent, "symmetry_pct"},
    {ValueType::Signal, "signal"},            {ValueType::GclIplUm, "gclipl_um"},
};

inline void validate_policy(const RangePolicy& p) {
  for (const auto& [type, name] : kRangePolicyKeys) {
    auto it = p.bounds.find(type);
    if (it == p.bounds.end()) throw SchemaError("range policy lacks '" + std::string(name) + "'");
    if (!(it->second.lo < it->second.hi)) throw SchemaError("range policy '" + std::string(name) + "' needs lower < upper");
  }
}

// Keys absent from the document keep their defaults.
inline RangePolicy load_range_policy(std::string_view bytes) {
  RangePolicy p;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("range policy is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("range policy must be a JSON object");
  for (const auto& [key, val] : doc.items()) {
    auto it = std::find_if(std::begin(kRangePolicyKeys), std::end(kRangePolicyKeys),
                           [&](const auto& kv) { return kv.second == key; });
    if (it == std::end(kRangePolicyKeys)) throw SchemaError("unknown range policy key '" + key + "'");
    if (!val.is_array() || val.size() != 2 || !val[0].is_number() || !val[1].is_number())
      throw SchemaError("range policy '" + key + "' must be [lower, upper]");
    p.bounds[it->first] = {val[0].get<double>(), val[1].get<double>()};
  }
  validate_policy(p);
  return p;
}

// ---------------------------------------------------------------------------
// Digit flips

// Mirror image of a digit string: "86" -> "68".
inline std::string hflip(std::string_view digits) { return {digits.rbegin(), digits.rend()}; }

// 180 degree rotation: reverse, then 6<->9 (0, 1, 8 map to themselves).
// Undefined when any digit has no rotated form.
inline std::optional<std::string> vflip(std::string_view digits) {
  std::string out;
  out.reserve(digits.size());
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    switch (*it) {
      case '0': case '1': case '8': out.push_back(*it); break;
      case '6': out.push_back('9'); break;
      case '9': out.push_back('6'); break;
      default: return std::nullopt;
    }
  }
  return out;
}

inline bool is_rotatable(std::string_view digits) { return !digits.empty() && vflip(digits).has_value(); }

struct NeighborStats {
  double median = 0;
  double iqr = 0;

  bool typical(double v) const { return v >= median - 3.0 * iqr && v <= median + 3.0 * iqr; }
};

// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return 0.0;
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline std::optional<NeighborStats> neighbor_stats(std::vector<double> values) {
  if (values.size() < 3) return std::nullopt;
  std::sort(values.begin(), values.end());
  return NeighborStats{quantile_sorted(values, 0.5), quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25)};
}

// Warns when a detected integer value is implausible (out of range or far
// from its neighbours) while its horizontal or vertical flip is plausible.
// The value itself is never changed.
inline std::vector<QcFlag> flag_flip_candidates(const std::string& report_id, const ExtractedField& field,
                                                const std::optional<NeighborStats>& neighbors,
                                                const RangePolicy& policy = {}) {
  std::vector<QcFlag> flags;
  const auto type = field.field().spec().type;
  if (!field.is_detected() || !is_integer_type(type) || type == ValueType::Signal) return flags;
  const auto& range = policy.of(type);
  auto plausible = [&](double v) { return range.contains(v) && (!neighbors || neighbors->typical(v)); };
  const double value = *field.value();
  if (plausible(value)) return flags;

  const std::string digits = std::to_string(std::llround(value));
  auto consider = [&](const std::optional<std::string>& variant, QcKind kind) {
    if (!variant || *variant == digits) return;
    const double alt = std::stod(*variant);
    if (!plausible(alt)) return;
    flags.push_back({report_id, {field.field()}, kind, "read " + digits + ", flipped candidate " + *variant,
                     Severity::Warn});
  };
  consider(hflip(digits), QcKind::HorizontalFlipSuspect);
  consider(vflip(digits), QcKind::VerticalFlipSuspect);
  return flags;
}

// ---------------------------------------------------------------------------
// Detectors

inline std::string describe_value(const ExtractedField& f) {
  return format_value(*f.value(), f.field().spec().type);
}

inline std::vector<QcFlag> check_ranges(const std::string& report_id, const std::vector<ExtractedField>& fields,
                                        const RangePolicy& policy = {}) {
  std::vector<QcFlag> flags;
  for (const auto& f : fields) {
    if (!f.is_detected()) continue;
    const auto& r = policy.of(f.field().spec().type);
    if (r.contains(*f.value())) continue;
    std::ostringstream d;
    d << describe_value(f) << " outside [" << r.lo << ", " << r.hi << "]";
    flags.push_back({report_id, {f.field()}, QcKind::OutOfRange, d.str(), Severity::Reject});
  }
  return flags;
}

inline constexpr double kLowConfidenceThreshold = 0.90;

inline std::vector<QcFlag> check_confidence(const std::string& report_id, const std::vector<ExtractedField>& fields,
                                            double threshold = kLowConfidenceThreshold) {
  std::vector<QcFlag> flags;
  for (const auto& f : fields) {
    if (!f.is_detected() || *f.conf() >= threshold) continue;
    std::ostringstream d;
    d << "confidence " << *f.conf() << " below " << threshold;
    flags.push_back({report_id, {f.field()}, QcKind::LowConfidence, d.str(), Severity::Warn});
  }
  return flags;
}

// Flags a field pair when the OD value was read from the OS column and the OS
// value from the OD column. Fields without token provenance are skipped.
inline std::vector<QcFlag> detect_od_os_swap(const std::string& report_id, const std::vector<ExtractedField>& fields,
                                             const TokenStream& tokens, const LayoutTemplate& t) {
  std::map<std::int64_t, const OcrToken*> by_id;
  for (const auto& tok : tokens.tokens) by_id[tok.id] = &tok;

  // Page x of every supporting token; empty when provenance is unknown.
  auto page_xs = [&](const ExtractedField& f) {
    std::vector<double> xs;
    for (auto id : f.token_ids()) {
      auto it = by_id.find(id);
      if (it == by_id.end()) return std::vector<double>{};
      const Region* r = t.find_region(it->second->crop_id);
      if (!r) return std::vector<double>{};
      xs.push_back(to_page(*r, Point{it->second->bbox.cx(), it->second->bbox.cy()}).x);
    }
    return xs;
  };

  std::map<FieldName, std::map<Eye, const ExtractedField*>> pairs;
  for (const auto& f : fields)
    if (f.is_detected()) pairs[f.field().name][f.field().eye] = &f;

  std::vector<QcFlag> flags;
  for (const auto& [name, eyes] : pairs) {
    if (eyes.size() != 2) continue;
    const auto& od = *eyes.at(Eye::OD);
    const auto& os = *eyes.at(Eye::OS);
    const auto od_x = page_xs(od);
    const auto os_x = page_xs(os);
    if (od_x.empty() || os_x.empty()) continue;
    const bool od_right = std::all_of(od_x.begin(), od_x.end(), [&](double x) { return x > t.os_column_x_min; });
    const bool os_left = std::all_of(os_x.begin(), os_x.end(), [&](double x) { return x < t.od_column_x_max; });
    if (!(od_right && os_left)) continue;
    flags.push_back({report_id, {od.field(), os.field()}, QcKind::OdOsSwapSuspect,
                     "OD " + describe_value(od) + " read from the OS column, OS " + describe_value(os) +
                         " from the OD column",
                     Severity::Warn});
  }
  return flags;
}

// One increment ahead: a contested hour whose predecessor came up empty.
// `clock_fields` are one eye's hours 1..12.
inline std::vector<QcFlag> detect_sequence_shift(const std::string& report_id,
                                                 const std::vector<ExtractedField>& clock_fields,
                                                 const std::vector<SlotConflict>& conflicts) {
  std::vector<QcFlag> flags;
  if (clock_fields.size() != 12) throw ContractError("detect_sequence_shift needs exactly 12 clock fields");
  const Eye eye = clock_fields.front().field().eye;
  auto field_of = [&](int hour) -> const ExtractedField& {
    for (const auto& f : clock_fields)
      if (f.field().name == clock_field(hour)) return f;
    throw ContractError("clock fields lack hour " + std::to_string(hour));
  };
  for (int h = 1; h <= 12; ++h) {
    const FieldId here{clock_field(h), eye};
    const bool contested = std::any_of(conflicts.begin(), conflicts.end(), [&](const SlotConflict& c) {
      return c.cause == ConflictCause::Competing && !c.fields.empty() && c.fields.front() == here;
    });
    if (!contested) continue;
    const int prev = h == 1 ? 12 : h - 1;
    if (field_of(prev).is_detected()) continue;
    flags.push_back({report_id, {{clock_field(prev), eye}, here}, QcKind::SequenceShiftSuspect,
                     "hour " + std::to_string(h) + " is contested while hour " + std::to_string(prev) +
                         " is empty; the value may belong to hour " + std::to_string(prev),
                     Severity::Warn});
  }
  return flags;
}

inline std::vector<QcFlag> slot_conflict_flags(const std::string& report_id, const std::vector<SlotConflict>& conflicts) {
  std::vector<QcFlag> flags;
  for (const auto& c : conflicts) {
    std::string ids;
    for (auto id : c.token_ids) ids += (ids.empty() ? "" : " ") + std::to_string(id);
    flags.push_back({report_id, c.fields, QcKind::SlotConflict, std::string(to_string(c.cause)) + " tokens " + ids,
                     Severity::Warn});
  }
  return flags;
}

struct QcOptions {
  RangePolicy policy;
  double low_confidence = kLowConfidenceThreshold;
};

// Every detector over one report, in a fixed order. Swap detection needs the
// report's token stream and template and is skipped without them.
inline std::vector<QcFlag> run_qc(const ReportExtraction& rx, const QcOptions& opt = {},
                                  const TokenStream* tokens = nullptr, const LayoutTemplate* t = nullptr) {
  std::vector<QcFlag> flags = check_ranges(rx.report_id, rx.fields, opt.policy);
  auto append = [&](std::vector<QcFlag> more) {
    for (auto& f : more) flags.push_back(std::move(f));
  };
  append(check_confidence(rx.report_id, rx.fields, opt.low_confidence));
  if (tokens && t) append(detect_od_os_swap(rx.report_id, rx.fields, *tokens, *t));
  append(slot_conflict_flags(rx.report_id, rx.slot_conflicts));

  if (rx.kind == ReportKind::Rnfl)
    for (auto eye : kEyes) {
      std::vector<ExtractedField> clock;
      for (int h = 1; h <= 12; ++h) clock.push_back(rx.at({clock_field(h), eye}));
      append(detect_sequence_shift(rx.report_id, clock, rx.slot_conflicts));
    }

  // Flip screens: grid values against their ring, everything else by range.
  for (const auto& f : rx.fields) {
    if (!f.is_detected()) continue;
    const auto placement = f.field().spec().placement;
    std::optional<NeighborStats> stats;
    if (placement == FieldPlacement::ClockHour || placement == FieldPlacement::Sector) {
      std::vector<double> others;
      for (const auto& g : rx.fields)
        if (g.is_detected() && g.field().eye == f.field().eye && g.field().spec().placement == placement &&
            g.field() != f.field())
          others.push_back(*g.value());
      stats = neighbor_stats(std::move(others));
    }
    append(flag_flip_candidates(rx.report_id, f, stats, opt.policy));
  }
  return flags;
}

// Reject flags remove the involved values; Warn flags leave them intact.
inline ReportExtraction apply_rejects(ReportExtraction rx, const std::vector<QcFlag>& flags) {
  std::set<FieldId> rejected;
  for (const auto& f : flags)
    if (f.severity == Severity::Reject && f.report_id == rx.report_id)
      for (const auto& id : f.fields_involved) rejected.insert(id);
  for (auto& f : rx.fields)
    if (f.is_detected() && rejected.count(f.field())) f = f.downgraded(MissReason::QcReject);
  return rx;
}

inline nlohmann::json to_json(const QcFlag& f) {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& id : f.fields_involved) fields.push_back(id.key());
  return {{"kind", to_string(f.kind)}, {"severity", to_string(f.severity)}, {"fields", std::move(fields)},
          {"detail", f.detail}};
}

inline QcFlag parse_qc_flag(const std::string& report_id, const nlohmann::json& j) {
  QcFlag f;
  f.report_id = report_id;
  f.kind = parse_qc_kind(detail::require_string(j, "kind"));
  f.severity = parse_severity(detail::require_string(j, "severity"));
  f.detail = j.value("detail", "");
  for (const auto& k : detail::require(j, "fields")) f.fields_involved.push_back(parse_field_key(k.get<std::string>()));
  return f;
}

inline std::string csv_header_flags() { return "report_id,kind,severity,fields,detail\n"; }

inline std::string csv_row(const QcFlag& f) {
  std::string fields;
  for (const auto& id : f.fields_involved) fields += (fields.empty() ? "" : ";") + id.key();
  return csv_quote(f.report_id) + "," + std::string(to_string(f.kind)) + "," + std::string(to_string(f.severity)) + "," +
         csv_quote(fields) + "," + csv_quote(f.detail) + "\n";
}

}  // namespace octex
