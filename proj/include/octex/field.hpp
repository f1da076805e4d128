#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "octex/error.hpp"

namespace octex {

enum class ReportKind : std::uint8_t { Rnfl, Gcc };
enum class Eye : std::uint8_t { OD, OS };

inline constexpr std::array<Eye, 2> kEyes{Eye::OD, Eye::OS};

inline std::string_view to_string(ReportKind k) { return k == ReportKind::Rnfl ? "rnfl" : "gcc"; }
inline std::string_view to_string(Eye e) { return e == Eye::OD ? "OD" : "OS"; }

inline ReportKind parse_report_kind(std::string_view s) {
  if (s == "rnfl") return ReportKind::Rnfl;
  if (s == "gcc") return ReportKind::Gcc;
  throw SchemaError("report kind must be \"rnfl\" or \"gcc\", got \"" + std::string(s) + "\"");
}

inline Eye parse_eye(std::string_view s) {
  if (s == "OD") return Eye::OD;
  if (s == "OS") return Eye::OS;
  throw SchemaError("eye must be \"OD\" or \"OS\", got \"" + std::string(s) + "\"");
}

inline Eye other_eye(Eye e) { return e == Eye::OD ? Eye::OS : Eye::OD; }

// Value grammar of a field. Integer grammars parse whole numbers; the rest
// are decimals with at most two fractional digits.
enum class ValueType : std::uint8_t {
  Signal,       // N/10
  ThicknessUm,  // RNFL thickness, integer micrometres
  GclIplUm,     // GCL+IPL thickness, integer micrometres
  Ratio,        // cup-to-disc, [0,1]
  RimArea,      // mm^2
  DiscArea,     // mm^2
  CupVolume,    // mm^3
  Percent,      // symmetry, [0,100]
};

inline bool is_integer_type(ValueType t) {
  return t == ValueType::Signal || t == ValueType::ThicknessUm || t == ValueType::GclIplUm;
}

inline int decimals_of(ValueType t) { return is_integer_type(t) ? 0 : 2; }

// How a field is located on the page.
enum class FieldPlacement : std::uint8_t { LabelRow, Quadrant, ClockHour, Sector };

// Canonical field names, in the row order of the published precision tables.
enum class FieldName : std::uint8_t {
  RnflSignalStrength,
  RnflAvgThickness,
  RnflSymmetry,
  RnflRimArea,
  RnflDiscArea,
  RnflAvgCdRatio,
  RnflVertCdRatio,
  RnflCupVolume,
  RnflQuadSuperior,
  RnflQuadTemporal,
  RnflQuadNasal,
  RnflQuadInferior,
  RnflClock1,
  RnflClock2,
  RnflClock3,
  RnflClock4,
  RnflClock5,
  RnflClock6,
  RnflClock7,
  RnflClock8,
  RnflClock9,
  RnflClock10,
  RnflClock11,
  RnflClock12,
  GccSignalStrength,
  GccSectorSuperior,
  GccSectorSuperiorNasal,
  GccSectorInferiorNasal,
  GccSectorInferior,
  GccSectorInferiorTemporal,
  GccSectorSuperiorTemporal,
  GccAvgGclIpl,
  GccMinGclIpl,
};

inline constexpr std::size_t kFieldNameCount = 33;

struct FieldSpec {
  FieldName id;
  std::string_view name;         // canonical string, e.g. "rnfl.clock.5"
  ReportKind kind;
  ValueType type;
  FieldPlacement placement;
  std::string_view table_label;  // row label in rendered precision tables
  std::string_view anchor;       // printed label for LabelRow fields
  int slot;                      // clock hour 1..12, quadrant 0..3, sector 0..5; -1 otherwise
};

// clang-format off
inline constexpr std::array<FieldSpec, kFieldNameCount> kFieldCatalog{{
  {FieldName::RnflSignalStrength, "rnfl.signal_strength", ReportKind::Rnfl, ValueType::Signal,      FieldPlacement::LabelRow, "Signal Strength",       "signal strength", -1},
  {FieldName::RnflAvgThickness,   "rnfl.avg_thickness",   ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::LabelRow, "Avg. RNFL Thickness",   "average rnfl thickness", -1},
  {FieldName::RnflSymmetry,       "rnfl.symmetry",        ReportKind::Rnfl, ValueType::Percent,     FieldPlacement::LabelRow, "RNFL Symmetry",         "rnfl symmetry", -1},
  {FieldName::RnflRimArea,        "rnfl.rim_area",        ReportKind::Rnfl, ValueType::RimArea,     FieldPlacement::LabelRow, "Rim Area",              "rim area", -1},
  {FieldName::RnflDiscArea,       "rnfl.disc_area",       ReportKind::Rnfl, ValueType::DiscArea,    FieldPlacement::LabelRow, "Disc Area",             "disc area", -1},
  {FieldName::RnflAvgCdRatio,     "rnfl.avg_cd_ratio",    ReportKind::Rnfl, ValueType::Ratio,       FieldPlacement::LabelRow, "Avg. C/D ratio",        "average c/d ratio", -1},
  {FieldName::RnflVertCdRatio,    "rnfl.vert_cd_ratio",   ReportKind::Rnfl, ValueType::Ratio,       FieldPlacement::LabelRow, "Vertical C/D ratio",    "vertical c/d ratio", -1},
  {FieldName::RnflCupVolume,      "rnfl.cup_volume",      ReportKind::Rnfl, ValueType::CupVolume,   FieldPlacement::LabelRow, "Cup Volume",            "cup volume", -1},
  {FieldName::RnflQuadSuperior,   "rnfl.quadrant.superior", ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::Quadrant, "Superior Quadrant",  "", 0},
  {FieldName::RnflQuadTemporal,   "rnfl.quadrant.temporal", ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::Quadrant, "Temporal Quadrant",  "", 3},
  {FieldName::RnflQuadNasal,      "rnfl.quadrant.nasal",    ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::Quadrant, "Nasal Quadrant",     "", 1},
  {FieldName::RnflQuadInferior,   "rnfl.quadrant.inferior", ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::Quadrant, "Inferior Quadrant",  "", 2},
  {FieldName::RnflClock1,  "rnfl.clock.1",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 1",  "", 1},
  {FieldName::RnflClock2,  "rnfl.clock.2",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 2",  "", 2},
  {FieldName::RnflClock3,  "rnfl.clock.3",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 3",  "", 3},
  {FieldName::RnflClock4,  "rnfl.clock.4",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 4",  "", 4},
  {FieldName::RnflClock5,  "rnfl.clock.5",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 5",  "", 5},
  {FieldName::RnflClock6,  "rnfl.clock.6",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 6",  "", 6},
  {FieldName::RnflClock7,  "rnfl.clock.7",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 7",  "", 7},
  {FieldName::RnflClock8,  "rnfl.clock.8",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 8",  "", 8},
  {FieldName::RnflClock9,  "rnfl.clock.9",  ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 9",  "", 9},
  {FieldName::RnflClock10, "rnfl.clock.10", ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 10", "", 10},
  {FieldName::RnflClock11, "rnfl.clock.11", ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 11", "", 11},
  {FieldName::RnflClock12, "rnfl.clock.12", ReportKind::Rnfl, ValueType::ThicknessUm, FieldPlacement::ClockHour, "Clock Hour 12", "", 12},
  {FieldName::GccSignalStrength,         "gcc.signal_strength",          ReportKind::Gcc, ValueType::Signal,   FieldPlacement::LabelRow, "Signal Strength",            "signal strength", -1},
  {FieldName::GccSectorSuperior,         "gcc.sector.superior",          ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::Sector,   "Superior Quadrant",          "", 0},
  {FieldName::GccSectorSuperiorNasal,    "gcc.sector.superior_nasal",    ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::Sector,   "Superior-nasal Quadrant",    "", 1},
  {FieldName::GccSectorInferiorNasal,    "gcc.sector.inferior_nasal",    ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::Sector,   "Inferior-nasal Quadrant",    "", 2},
  {FieldName::GccSectorInferior,         "gcc.sector.inferior",          ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::Sector,   "Inferior Quadrant",          "", 3},
  {FieldName::GccSectorInferiorTemporal, "gcc.sector.inferior_temporal", ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::Sector,   "Inferior-temporal Quadrant", "", 4},
  {FieldName::GccSectorSuperiorTemporal, "gcc.sector.superior_temporal", ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::Sector,   "Superior-temporal Quadrant", "", 5},
  {FieldName::GccAvgGclIpl,              "gcc.avg_gclipl",               ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::LabelRow, "Avg. GCL & IPL Thickness",   "average gcl + ipl thickness", -1},
  {FieldName::GccMinGclIpl,              "gcc.min_gclipl",               ReportKind::Gcc, ValueType::GclIplUm, FieldPlacement::LabelRow, "Min. GCL & IPL Thickness",   "minimum gcl + ipl thickness", -1},
}};
// clang-format on

inline const FieldSpec& spec_of(FieldName n) { return kFieldCatalog[static_cast<std::size_t>(n)]; }

inline std::optional<FieldName> field_name_from_string(std::string_view s) {
  for (const auto& f : kFieldCatalog)
    if (f.name == s) return f.id;
  return std::nullopt;
}

// Names for one report kind, in table order.
inline std::vector<FieldName> field_names(ReportKind kind) {
  std::vector<FieldName> out;
  for (const auto& f : kFieldCatalog)
    if (f.kind == kind) out.push_back(f.id);
  return out;
}

inline FieldName clock_field(int hour) {
  return static_cast<FieldName>(static_cast<int>(FieldName::RnflClock1) + (hour - 1));
}

// Quadrant slots are ordered superior, nasal, inferior, temporal (clockwise
// from the top in an unmirrored grid).
inline FieldName quadrant_field(int slot) {
  constexpr std::array<FieldName, 4> q{FieldName::RnflQuadSuperior, FieldName::RnflQuadNasal,
                                       FieldName::RnflQuadInferior, FieldName::RnflQuadTemporal};
  return q[static_cast<std::size_t>(slot)];
}

inline FieldName sector_field(int slot) {
  return static_cast<FieldName>(static_cast<int>(FieldName::GccSectorSuperior) + slot);
}

struct FieldId {
  FieldName name{};
  Eye eye{};

  const FieldSpec& spec() const { return spec_of(name); }
  ReportKind kind() const { return spec().kind; }

  // "rnfl.clock.5:OD"
  std::string key() const { return std::string(spec().name) + ":" + std::string(to_string(eye)); }

  friend bool operator==(const FieldId&, const FieldId&) = default;
  friend auto operator<=>(const FieldId&, const FieldId&) = default;
};

inline FieldId parse_field_key(std::string_view key) {
  const auto colon = key.rfind(':');
  if (colon == std::string_view::npos) throw SchemaError("field key without eye suffix: " + std::string(key));
  const auto name = field_name_from_string(key.substr(0, colon));
  if (!name) throw SchemaError("unknown field name: " + std::string(key.substr(0, colon)));
  return {*name, parse_eye(key.substr(colon + 1))};
}

// Every (name, eye) pair for a kind: 48 for RNFL, 18 for GCC.
inline std::vector<FieldId> all_fields(ReportKind kind) {
  std::vector<FieldId> out;
  for (auto n : field_names(kind))
    for (auto e : kEyes) out.push_back({n, e});
  return out;
}

enum class FieldStatus : std::uint8_t { Detected, NotDetected };

enum class MissReason : std::uint8_t {
  AnchorMissing,
  ValueUnparseable,
  ColumnAmbiguous,
  NoToken,   // no token in the grid slot
  QcReject,  // downgraded by a Reject flag
};

inline std::string_view to_string(MissReason r) {
  switch (r) {
    case MissReason::AnchorMissing: return "anchor_missing";
    case MissReason::ValueUnparseable: return "value_unparseable";
    case MissReason::ColumnAmbiguous: return "column_ambiguous";
    case MissReason::NoToken: return "no_token";
    case MissReason::QcReject: return "qc_reject";
  }
  return "unknown";
}

inline MissReason parse_miss_reason(std::string_view s) {
  for (auto r : {MissReason::AnchorMissing, MissReason::ValueUnparseable, MissReason::ColumnAmbiguous,
                 MissReason::NoToken, MissReason::QcReject})
    if (to_string(r) == s) return r;
  throw SchemaError("unknown reason code: " + std::string(s));
}

// One extracted field. A value, confidence and token ids exist iff the field
// was detected; construct through detected()/not_detected().
class ExtractedField {
 public:
  static ExtractedField detected(FieldId field, double value, double conf, std::vector<std::int64_t> token_ids) {
    ExtractedField f;
    f.field_ = field;
    f.value_ = value;
    f.conf_ = conf;
    f.token_ids_ = std::move(token_ids);
    return f;
  }

  static ExtractedField not_detected(FieldId field, MissReason reason) {
    ExtractedField f;
    f.field_ = field;
    f.reason_ = reason;
    return f;
  }

  const FieldId& field() const { return field_; }
  FieldStatus status() const { return value_ ? FieldStatus::Detected : FieldStatus::NotDetected; }
  bool is_detected() const { return value_.has_value(); }
  const std::optional<double>& value() const { return value_; }
  std::optional<double> conf() const { return value_ ? std::optional<double>(conf_) : std::nullopt; }
  const std::vector<std::int64_t>& token_ids() const { return token_ids_; }
  std::optional<MissReason> reason() const { return reason_; }

  ExtractedField downgraded(MissReason reason) const { return not_detected(field_, reason); }

 private:
  ExtractedField() = default;

  FieldId field_{};
  std::optional<double> value_;
  double conf_ = 0.0;
  std::vector<std::int64_t> token_ids_;
  std::optional<MissReason> reason_;
};

// Renders a value in its grammar: "85", "0.76", "1.20".
inline std::string format_value(double value, ValueType type) {
  if (is_integer_type(type)) return std::to_string(std::llround(value));
  const long long hundredths = std::llround(value * 100.0);
  const long long whole = hundredths / 100;
  const long long frac = std::llabs(hundredths % 100);
  std::string out = (hundredths < 0 && whole == 0 ? "-" : "") + std::to_string(whole) + ".";
  if (frac < 10) out += "0";
  out += std::to_string(frac);
  return out;
}

}  // namespace octex
