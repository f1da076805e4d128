#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octex/field.hpp"
#include "octex/geometry.hpp"
#include "octex/grammar.hpp"
#include "octex/layout.hpp"
#include "octex/token_stream.hpp"

namespace octex {

// Everything extracted from one report.
struct ReportExtraction {
  std::string report_id;
  ReportKind kind = ReportKind::Rnfl;
  std::string template_id;
  std::vector<ExtractedField> fields;  // all (name, eye) pairs, canonical order
  std::vector<SlotConflict> slot_conflicts;
  std::map<Eye, FoveaPoint> fovea;     // GCC only; not scored

  const ExtractedField& at(const FieldId& id) const {
    for (const auto& f : fields)
      if (f.field() == id) return f;
    throw ContractError("extraction of " + report_id + " has no field " + id.key());
  }
};

// ---------------------------------------------------------------------------
// Grid strategies

inline std::vector<FieldId> clock_slot_fields(Eye eye) {
  std::vector<FieldId> f;
  for (int slot = 0; slot < 12; ++slot) f.push_back({clock_field(ClockGeometry::hour_of_slot(slot)), eye});
  return f;
}

// Twelve fields, hour 1 through hour 12, plus any conflicts.
inline GridAssignment assign_clock_hours(const std::vector<OcrToken>& tokens, const ClockGeometry& geom, Eye eye) {
  auto g = assign_slots(tokens, geom.frame(), clock_slot_fields(eye), ValueType::ThicknessUm, geom.boundary_guard_deg);
  // Slot order starts at hour 12; report hours 1..12.
  std::rotate(g.fields.begin(), g.fields.begin() + 1, g.fields.end());
  return g;
}

// Quadrants by angular position: superior up, inferior down, nasal and
// temporal resolved by the laterality mirror. Fields in table order.
inline GridAssignment extract_quadrants(const std::vector<OcrToken>& tokens, const ClockGeometry& geom, Eye eye) {
  std::vector<FieldId> slots;
  for (int s = 0; s < 4; ++s) slots.push_back({quadrant_field(s), eye});
  auto g = assign_slots(tokens, geom.frame(), slots, ValueType::ThicknessUm, geom.boundary_guard_deg);
  std::sort(g.fields.begin(), g.fields.end(),
            [](const ExtractedField& a, const ExtractedField& b) { return a.field().name < b.field().name; });
  return g;
}

inline GridAssignment extract_sectors(const std::vector<OcrToken>& tokens, const SectorGeometry& geom, Eye eye) {
  std::vector<FieldId> slots;
  for (int s = 0; s < 6; ++s) slots.push_back({sector_field(s), eye});
  return assign_slots(tokens, geom.frame(), slots, ValueType::GclIplUm, geom.boundary_guard_deg);
}

// ---------------------------------------------------------------------------
// Label-anchored rows

namespace detail {

enum class Column : std::uint8_t { OD, OS, Middle };

inline Column column_of(const LayoutTemplate& t, const Region& r, const OcrToken& tok) {
  const double x = to_page(r, Point{tok.bbox.cx(), tok.bbox.cy()}).x;
  if (x < t.od_column_x_max) return Column::OD;
  if (x > t.os_column_x_min) return Column::OS;
  return Column::Middle;
}

struct AnchorHit {
  std::size_t row = 0;
  std::set<std::int64_t> anchor_ids;
  std::vector<std::string> trailing_words;  // words after the label inside the last anchor token
  const OcrToken* last_anchor = nullptr;
};

// Finds the first row whose joined text contains `label`, skipping rows
// already claimed by another field of the same region.
inline std::optional<AnchorHit> find_anchor(const std::vector<std::vector<OcrToken>>& rows, std::string_view label,
                                            const std::set<std::size_t>& taken) {
  const auto label_words = text::words(text::normalize(label));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (taken.count(r)) continue;
    std::vector<std::string> words;
    std::vector<std::size_t> owner;  // token index per word
    for (std::size_t i = 0; i < rows[r].size(); ++i)
      for (auto& w : text::words(text::normalize(rows[r][i].text))) {
        words.push_back(std::move(w));
        owner.push_back(i);
      }
    std::string joined;
    for (const auto& w : words) joined += (joined.empty() ? "" : " ") + w;
    const auto at = match_label(joined, label);
    if (!at) continue;
    AnchorHit hit;
    hit.row = r;
    const std::size_t end = *at + label_words.size();
    for (std::size_t w = *at; w < end; ++w) hit.anchor_ids.insert(rows[r][owner[w]].id);
    const std::size_t last_tok = owner[end - 1];
    hit.last_anchor = &rows[r][last_tok];
    for (std::size_t w = end; w < words.size() && owner[w] == last_tok; ++w) hit.trailing_words.push_back(words[w]);
    return hit;
  }
  return std::nullopt;
}

struct CellPick {
  std::optional<double> value;
  double conf = 0.0;
  std::int64_t token_id = -1;
  MissReason reason = MissReason::ValueUnparseable;
};

// Chooses the value of one column cell. Equal values from overlapping
// detections collapse to the longest token; distinct values are ambiguous.
inline CellPick pick_cell(const std::vector<const OcrToken*>& cell, ValueType type) {
  CellPick pick;
  std::vector<std::pair<const OcrToken*, double>> ok;
  for (const auto* t : cell) {
    const auto r = parse_value(t->text, type);
    if (r) ok.emplace_back(t, *r.value);
  }
  if (ok.empty()) return pick;
  for (std::size_t i = 1; i < ok.size(); ++i)
    if (ok[i].second != ok[0].second) {
      pick.reason = MissReason::ColumnAmbiguous;
      return pick;
    }
  const auto best = std::max_element(ok.begin(), ok.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.first->text.size(), a.first->conf, -a.first->id) <
           std::make_tuple(b.first->text.size(), b.first->conf, -b.first->id);
  });
  pick.value = best->second;
  pick.conf = best->first->conf;
  pick.token_id = best->first->id;
  return pick;
}

}  // namespace detail

// Extracts every label-row field (signal strength, table parameters) of the
// template's report kind: find the label, then read the OD and OS cells of
// the same row.
inline std::vector<ExtractedField> extract_label_fields(const TokenStream& ts, const LayoutTemplate& t) {
  std::vector<ExtractedField> out;
  for (const auto& region : t.regions) {
    if (region.geometry_kind != GeometryKind::LabelValue && region.geometry_kind != GeometryKind::ColumnPair) continue;
    std::vector<FieldName> names;
    for (const auto& f : region.expected_fields)
      if (std::find(names.begin(), names.end(), f.name) == names.end()) names.push_back(f.name);
    if (names.empty()) continue;

    const auto rows = reading_rows(tokens_in_crop(ts, region.name));
    std::set<std::size_t> taken_rows;
    for (const auto name : names) {
      const auto& spec = spec_of(name);
      const auto hit = detail::find_anchor(rows, spec.anchor, taken_rows);
      if (!hit) {
        for (auto e : kEyes) out.push_back(ExtractedField::not_detected({name, e}, MissReason::AnchorMissing));
        continue;
      }
      taken_rows.insert(hit->row);

      std::map<detail::Column, std::vector<const OcrToken*>> cells;
      for (const auto& tok : rows[hit->row]) {
        if (hit->anchor_ids.count(tok.id)) continue;
        cells[detail::column_of(t, region, tok)].push_back(&tok);
      }

      std::map<Eye, detail::CellPick> picks;
      for (auto e : kEyes)
        picks[e] = detail::pick_cell(cells[e == Eye::OD ? detail::Column::OD : detail::Column::OS], spec.type);

      // Values glued to the label ("Signal Strength: 8/10 9/10") read left to
      // right when the columns themselves are empty.
      if (!picks[Eye::OD].value && !picks[Eye::OS].value && hit->trailing_words.size() == 2) {
        const auto a = parse_value(hit->trailing_words[0], spec.type);
        const auto b = parse_value(hit->trailing_words[1], spec.type);
        if (a && b) {
          const auto* tok = hit->last_anchor;
          picks[Eye::OD] = {a.value, tok->conf, tok->id, MissReason::ValueUnparseable};
          picks[Eye::OS] = {b.value, tok->conf, tok->id, MissReason::ValueUnparseable};
        }
      }

      const bool middle_values = std::any_of(cells[detail::Column::Middle].begin(), cells[detail::Column::Middle].end(),
                                             [&](const OcrToken* tok) { return bool(parse_value(tok->text, spec.type)); });
      for (auto e : kEyes) {
        const auto& p = picks[e];
        if (p.value) {
          out.push_back(ExtractedField::detected({name, e}, *p.value, p.conf, {p.token_id}));
        } else {
          const auto reason = middle_values ? MissReason::ColumnAmbiguous : p.reason;
          out.push_back(ExtractedField::not_detected({name, e}, reason));
        }
      }
    }
  }
  return out;
}

// The eight global RNFL parameters per eye.
inline std::vector<ExtractedField> extract_global_params(const TokenStream& ts, const LayoutTemplate& t) {
  if (t.report_kind != ReportKind::Rnfl) throw ContractError("extract_global_params needs an RNFL template");
  return extract_label_fields(ts, t);
}

// Signal strength and average/minimum GCL+IPL thickness per eye.
inline std::vector<ExtractedField> extract_gcc_globals(const TokenStream& ts, const LayoutTemplate& t) {
  if (t.report_kind != ReportKind::Gcc) throw ContractError("extract_gcc_globals needs a GCC template");
  return extract_label_fields(ts, t);
}

// Fovea annotations, one per eye column.
inline std::map<Eye, FoveaPoint> extract_fovea(const TokenStream& ts, const LayoutTemplate& t) {
  std::map<Eye, FoveaPoint> out;
  for (const auto& tok : ts.tokens) {
    const auto p = parse_fovea(tok.text);
    if (!p) continue;
    const Region* r = t.find_region(tok.crop_id);
    if (!r) continue;
    const auto col = detail::column_of(t, *r, tok);
    if (col == detail::Column::Middle) continue;
    out.emplace(col == detail::Column::OD ? Eye::OD : Eye::OS, *p);
  }
  return out;
}

inline void sort_canonical(std::vector<ExtractedField>& fields) {
  std::sort(fields.begin(), fields.end(),
            [](const ExtractedField& a, const ExtractedField& b) { return a.field() < b.field(); });
}

// Runs every strategy the template's regions call for and returns exactly one
// field per (name, eye) of the report kind.
inline ReportExtraction extract_report(const TokenStream& ts, const LayoutTemplate& t) {
  check_stream_binds(ts, t);
  ReportExtraction rx;
  rx.report_id = ts.report_id;
  rx.kind = t.report_kind;
  rx.template_id = t.template_id;
  rx.fields = extract_label_fields(ts, t);

  for (const auto& region : t.regions) {
    if (region.geometry_kind != GeometryKind::ClockGrid && region.geometry_kind != GeometryKind::SectorGrid) continue;
    const Eye eye = *region.eye();
    const auto tokens = tokens_in_crop(ts, region.name);
    GridAssignment g;
    if (region.geometry_kind == GeometryKind::ClockGrid) {
      g = assign_clock_hours(tokens, clock_geometry_for(t, region, eye), eye);
    } else if (region.expected_fields.front().spec().placement == FieldPlacement::Quadrant) {
      g = extract_quadrants(tokens, clock_geometry_for(t, region, eye), eye);
    } else {
      g = extract_sectors(tokens, sector_geometry_for(t, region, eye), eye);
    }
    for (auto& f : g.fields)
      if (std::find(region.expected_fields.begin(), region.expected_fields.end(), f.field()) !=
          region.expected_fields.end())
        rx.fields.push_back(std::move(f));
    for (auto& c : g.conflicts) rx.slot_conflicts.push_back(std::move(c));
  }

  // Any field the template claims but no strategy produced stays visible.
  std::set<FieldId> have;
  for (const auto& f : rx.fields) have.insert(f.field());
  for (const auto& id : all_fields(t.report_kind))
    if (!have.count(id)) rx.fields.push_back(ExtractedField::not_detected(id, MissReason::NoToken));
  sort_canonical(rx.fields);

  if (t.report_kind == ReportKind::Gcc) rx.fovea = extract_fovea(ts, t);
  return rx;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json value_json(double v, ValueType type) {
  if (is_integer_type(type)) return static_cast<std::int64_t>(std::llround(v));
  return v;
}

inline nlohmann::json to_json(const ExtractedField& f) {
  nlohmann::json j = {{"name", f.field().spec().name},
                      {"eye", to_string(f.field().eye)},
                      {"status", f.is_detected() ? "detected" : "not_detected"}};
  if (f.is_detected()) {
    j["value"] = value_json(*f.value(), f.field().spec().type);
    j["conf"] = *f.conf();
    j["token_ids"] = f.token_ids();
  } else {
    j["value"] = nullptr;
    j["conf"] = nullptr;
    j["token_ids"] = nlohmann::json::array();
    if (f.reason()) j["reason"] = to_string(*f.reason());
  }
  return j;
}

inline nlohmann::json to_json(const SlotConflict& c) {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : c.fields) fields.push_back(f.key());
  return {{"cause", to_string(c.cause)}, {"fields", std::move(fields)}, {"token_ids", c.token_ids}};
}

inline nlohmann::json to_json(const ReportExtraction& rx) {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : rx.fields) fields.push_back(to_json(f));
  nlohmann::json conflicts = nlohmann::json::array();
  for (const auto& c : rx.slot_conflicts) conflicts.push_back(to_json(c));
  nlohmann::json j = {{"report_id", rx.report_id},
                      {"kind", to_string(rx.kind)},
                      {"template_id", rx.template_id},
                      {"fields", std::move(fields)},
                      {"slot_conflicts", std::move(conflicts)}};
  if (rx.kind == ReportKind::Gcc) {
    nlohmann::json fovea = nlohmann::json::object();
    for (const auto& [eye, p] : rx.fovea) fovea[std::string(to_string(eye))] = {p.x, p.y};
    j["fovea"] = std::move(fovea);
  }
  return j;
}

inline ExtractedField parse_extracted_field(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("field entry must be an object");
  const auto name_s = detail::require_string(j, "name");
  const auto name = field_name_from_string(name_s);
  if (!name) throw SchemaError("unknown field name: " + name_s);
  const FieldId id{*name, parse_eye(detail::require_string(j, "eye"))};
  const auto status = detail::require_string(j, "status");
  if (status == "detected") {
    const auto& v = detail::require(j, "value");
    const auto& c = detail::require(j, "conf");
    if (!v.is_number() || !c.is_number()) throw SchemaError(id.key() + ": detected field needs numeric value and conf");
    std::vector<std::int64_t> ids;
    if (auto it = j.find("token_ids"); it != j.end()) ids = it->get<std::vector<std::int64_t>>();
    return ExtractedField::detected(id, v.get<double>(), c.get<double>(), std::move(ids));
  }
  if (status == "not_detected") {
    auto reason = MissReason::ValueUnparseable;
    if (auto it = j.find("reason"); it != j.end() && it->is_string()) reason = parse_miss_reason(it->get<std::string>());
    return ExtractedField::not_detected(id, reason);
  }
  throw SchemaError(id.key() + ": status must be \"detected\" or \"not_detected\"");
}

inline ReportExtraction extraction_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("extraction must be a JSON object");
  ReportExtraction rx;
  rx.report_id = detail::require_string(j, "report_id");
  rx.kind = parse_report_kind(detail::require_string(j, "kind"));
  rx.template_id = j.value("template_id", "");
  const auto& fields = detail::require(j, "fields");
  if (!fields.is_array()) throw SchemaError("'fields' must be an array");
  for (const auto& f : fields) rx.fields.push_back(parse_extracted_field(f));
  if (auto it = j.find("slot_conflicts"); it != j.end()) {
    for (const auto& c : *it) {
      SlotConflict sc;
      sc.cause = parse_conflict_cause(detail::require_string(c, "cause"));
      for (const auto& k : detail::require(c, "fields")) sc.fields.push_back(parse_field_key(k.get<std::string>()));
      sc.token_ids = detail::require(c, "token_ids").get<std::vector<std::int64_t>>();
      rx.slot_conflicts.push_back(std::move(sc));
    }
  }
  if (auto it = j.find("fovea"); it != j.end() && it->is_object())
    for (const auto& [eye, p] : it->items()) rx.fovea[parse_eye(eye)] = {p.at(0).get<int>(), p.at(1).get<int>()};

  std::set<FieldId> seen;
  for (const auto& f : rx.fields) {
    if (f.field().kind() != rx.kind) throw SchemaError(rx.report_id + ": field " + f.field().key() + " has the wrong kind");
    if (!seen.insert(f.field()).second) throw SchemaError(rx.report_id + ": duplicate field " + f.field().key());
  }
  return rx;
}

inline ReportExtraction parse_extraction(std::string_view bytes) {
  try {
    return extraction_from_json(nlohmann::json::parse(bytes));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed extraction JSON: ") + e.what());
  }
}

inline std::string csv_header_extraction() { return "report_id,name,eye,status,value,conf\n"; }

inline std::string csv_rows(const ReportExtraction& rx) {
  std::ostringstream os;
  for (const auto& f : rx.fields) {
    os << rx.report_id << ',' << f.field().spec().name << ',' << to_string(f.field().eye) << ','
       << (f.is_detected() ? "detected" : "not_detected") << ',';
    if (f.is_detected()) {
      os << format_value(*f.value(), f.field().spec().type) << ',';
      std::ostringstream c;
      c.precision(4);
      c << std::fixed << *f.conf();
      os << c.str();
    } else {
      os << ',';
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace octex
