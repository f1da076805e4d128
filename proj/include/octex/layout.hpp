#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "octex/error.hpp"
#include "octex/field.hpp"
#include "octex/token_stream.hpp"

namespace octex {

enum class GeometryKind : std::uint8_t { LabelValue, ClockGrid, SectorGrid, ColumnPair };

inline std::string_view to_string(GeometryKind g) {
  switch (g) {
    case GeometryKind::LabelValue: return "LabelValue";
    case GeometryKind::ClockGrid: return "ClockGrid";
    case GeometryKind::SectorGrid: return "SectorGrid";
    case GeometryKind::ColumnPair: return "ColumnPair";
  }
  return "?";
}

inline GeometryKind parse_geometry_kind(std::string_view s) {
  for (auto g : {GeometryKind::LabelValue, GeometryKind::ClockGrid, GeometryKind::SectorGrid, GeometryKind::ColumnPair})
    if (to_string(g) == s) return g;
  throw TemplateError("unknown geometry_kind \"" + std::string(s) + "\"");
}

struct Point {
  double x = 0.5;
  double y = 0.5;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Region {
  std::string name;  // the crop_id tokens carry
  Rect rect;         // page-normalized
  GeometryKind geometry_kind = GeometryKind::LabelValue;
  std::vector<FieldId> expected_fields;
  Point center;  // grid center within the crop; grid regions only

  // Eye shared by every expected field, if any.
  std::optional<Eye> eye() const {
    if (expected_fields.empty()) return std::nullopt;
    const Eye e = expected_fields.front().eye;
    for (const auto& f : expected_fields)
      if (f.eye != e) return std::nullopt;
    return e;
  }
};

struct LayoutTemplate {
  std::string template_id;
  ReportKind report_kind = ReportKind::Rnfl;
  double page_aspect = 1.0;  // page width / height
  std::vector<Region> regions;
  double od_column_x_max = 0.5;
  double os_column_x_min = 0.5;
  // Grids of this eye are laid out counterclockwise (hour 12 at top, hour 3
  // nasal). The other eye runs clockwise.
  Eye mirrored_eye = Eye::OS;

  const Region* find_region(std::string_view name) const {
    for (const auto& r : regions)
      if (r.name == name) return &r;
    return nullptr;
  }

  const Region* region_for(const FieldId& f) const {
    for (const auto& r : regions)
      if (std::find(r.expected_fields.begin(), r.expected_fields.end(), f) != r.expected_fields.end()) return &r;
    return nullptr;
  }

  // Physical width/height of a region's crop.
  double crop_aspect(const Region& r) const { return r.rect.width() * page_aspect / r.rect.height(); }

  bool is_mirrored(Eye e) const { return e == mirrored_eye; }
};

// Maps a crop-normalized point into page coordinates.
inline Point to_page(const Region& r, Point in_crop) {
  return {r.rect.x0 + in_crop.x * r.rect.width(), r.rect.y0 + in_crop.y * r.rect.height()};
}

inline Rect to_page(const Region& r, const Rect& in_crop) {
  const auto a = to_page(r, Point{in_crop.x0, in_crop.y0});
  const auto b = to_page(r, Point{in_crop.x1, in_crop.y1});
  return {a.x, a.y, b.x, b.y};
}

// Checks every template invariant; throws TemplateError on the first breach.
inline void validate_template(const LayoutTemplate& t) {
  if (t.template_id.empty()) throw TemplateError("template_id must be non-empty");
  if (!(t.page_aspect > 0.0)) throw TemplateError("page_aspect must be positive");
  if (!(t.od_column_x_max <= t.os_column_x_min))
    throw TemplateError("od_column_x_max (" + std::to_string(t.od_column_x_max) + ") must not exceed os_column_x_min (" +
                        std::to_string(t.os_column_x_min) + ")");
  if (t.regions.empty()) throw TemplateError("template has no regions");

  std::set<std::string> names;
  std::map<FieldId, std::string> claimed;
  for (const auto& r : t.regions) {
    if (r.name.empty()) throw TemplateError("region name must be non-empty");
    if (!names.insert(r.name).second) throw TemplateError("duplicate region name \"" + r.name + "\"");
    if (!r.rect.valid_unit()) throw TemplateError("region \"" + r.name + "\" rect must lie in [0,1]^2 with x0<x1, y0<y1");
    for (const auto& f : r.expected_fields) {
      if (f.kind() != t.report_kind)
        throw TemplateError("region \"" + r.name + "\" claims " + f.key() + " which belongs to another report kind");
      auto [it, fresh] = claimed.emplace(f, r.name);
      if (!fresh)
        throw TemplateError(f.key() + " is claimed by both \"" + it->second + "\" and \"" + r.name + "\"");
    }
    const bool grid = r.geometry_kind == GeometryKind::ClockGrid || r.geometry_kind == GeometryKind::SectorGrid;
    if (grid && !r.eye())
      throw TemplateError("grid region \"" + r.name + "\" must claim fields of exactly one eye");
    if (r.geometry_kind == GeometryKind::ClockGrid)
      for (const auto& f : r.expected_fields)
        if (f.spec().placement != FieldPlacement::ClockHour)
          throw TemplateError("ClockGrid region \"" + r.name + "\" claims non-clock field " + f.key());
    if (r.geometry_kind == GeometryKind::SectorGrid)
      for (const auto& f : r.expected_fields)
        if (f.spec().placement != FieldPlacement::Quadrant && f.spec().placement != FieldPlacement::Sector)
          throw TemplateError("SectorGrid region \"" + r.name + "\" claims non-sector field " + f.key());
    if (!grid)
      for (const auto& f : r.expected_fields)
        if (f.spec().placement != FieldPlacement::LabelRow)
          throw TemplateError("region \"" + r.name + "\" claims grid field " + f.key() + " but is not a grid");
  }

  std::vector<std::string> missing;
  for (const auto& f : all_fields(t.report_kind))
    if (!claimed.count(f)) missing.push_back(f.key());
  if (!missing.empty()) {
    std::string msg = "template does not cover fields:";
    for (const auto& m : missing) msg += " " + m;
    throw TemplateError(msg);
  }
}

namespace detail {

inline Rect parse_rect(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw TemplateError(where + ": rect must be [x0,y0,x1,y1]");
  for (const auto& c : j)
    if (!c.is_number()) throw TemplateError(where + ": rect must contain numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline double require_number(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) throw TemplateError(std::string("key '") + key + "' must be a number");
  return it->get<double>();
}

}  // namespace detail

inline LayoutTemplate load_template(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw TemplateError(std::string("template is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw TemplateError("template must be a JSON object");

  LayoutTemplate t;
  try {
    t.template_id = detail::require_string(doc, "template_id");
    t.report_kind = parse_report_kind(detail::require_string(doc, "report_kind"));
    if (auto it = doc.find("mirrored_eye"); it != doc.end()) t.mirrored_eye = parse_eye(it->get<std::string>());
  } catch (const TemplateError&) {
    throw;
  } catch (const SchemaError& e) {
    throw TemplateError(e.what());
  }
  t.page_aspect = detail::require_number(doc, "page_aspect");
  t.od_column_x_max = detail::require_number(doc, "od_column_x_max");
  t.os_column_x_min = detail::require_number(doc, "os_column_x_min");

  auto regions_it = doc.find("regions");
  if (regions_it == doc.end() || !regions_it->is_array()) throw TemplateError("key 'regions' must be an array");
  for (const auto& rj : *regions_it) {
    if (!rj.is_object()) throw TemplateError("region must be an object");
    Region r;
    auto name_it = rj.find("name");
    if (name_it == rj.end() || !name_it->is_string()) throw TemplateError("region name must be a string");
    r.name = name_it->get<std::string>();
    const std::string where = "region \"" + r.name + "\"";
    r.rect = detail::parse_rect(rj.value("rect", nlohmann::json()), where);
    auto gk = rj.find("geometry_kind");
    if (gk == rj.end() || !gk->is_string()) throw TemplateError(where + ": geometry_kind must be a string");
    r.geometry_kind = parse_geometry_kind(gk->get<std::string>());
    auto ef = rj.find("expected_fields");
    if (ef == rj.end() || !ef->is_array()) throw TemplateError(where + ": expected_fields must be an array");
    for (const auto& f : *ef) {
      if (!f.is_string()) throw TemplateError(where + ": expected_fields entries must be strings");
      try {
        r.expected_fields.push_back(parse_field_key(f.get<std::string>()));
      } catch (const SchemaError& e) {
        throw TemplateError(where + ": " + e.what());
      }
    }
    if (auto c = rj.find("center"); c != rj.end()) {
      if (!c->is_array() || c->size() != 2 || !(*c)[0].is_number() || !(*c)[1].is_number())
        throw TemplateError(where + ": center must be [x,y]");
      r.center = {(*c)[0].get<double>(), (*c)[1].get<double>()};
    }
    t.regions.push_back(std::move(r));
  }
  validate_template(t);
  return t;
}

inline nlohmann::json to_json(const LayoutTemplate& t) {
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : t.regions) {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto& f : r.expected_fields) fields.push_back(f.key());
    nlohmann::json rj = {{"name", r.name},
                         {"rect", {r.rect.x0, r.rect.y0, r.rect.x1, r.rect.y1}},
                         {"geometry_kind", to_string(r.geometry_kind)},
                         {"expected_fields", std::move(fields)}};
    if (r.geometry_kind == GeometryKind::ClockGrid || r.geometry_kind == GeometryKind::SectorGrid)
      rj["center"] = {r.center.x, r.center.y};
    regions.push_back(std::move(rj));
  }
  return {{"template_id", t.template_id},
          {"report_kind", to_string(t.report_kind)},
          {"page_aspect", t.page_aspect},
          {"od_column_x_max", t.od_column_x_max},
          {"os_column_x_min", t.os_column_x_min},
          {"mirrored_eye", to_string(t.mirrored_eye)},
          {"regions", std::move(regions)}};
}

struct CropEntry {
  std::string crop_id;
  Rect rect;
  friend bool operator==(const CropEntry&, const CropEntry&) = default;
};

// One crop per region, ordered by region name.
inline std::vector<CropEntry> plan_crops(const LayoutTemplate& t) {
  std::vector<CropEntry> plan;
  plan.reserve(t.regions.size());
  for (const auto& r : t.regions) plan.push_back({r.name, r.rect});
  std::sort(plan.begin(), plan.end(), [](const CropEntry& a, const CropEntry& b) { return a.crop_id < b.crop_id; });
  return plan;
}

inline nlohmann::json crop_plan_json(const std::vector<CropEntry>& plan) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : plan) out.push_back({{"crop_id", c.crop_id}, {"rect", {c.rect.x0, c.rect.y0, c.rect.x1, c.rect.y1}}});
  return out;
}

inline std::vector<CropEntry> parse_crop_plan(std::string_view bytes) {
  std::vector<CropEntry> plan;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("crop plan is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw SchemaError("crop plan must be a JSON array");
  for (const auto& c : doc) {
    if (!c.is_object() || !c.contains("crop_id") || !c["crop_id"].is_string())
      throw SchemaError("crop plan entry needs a string crop_id");
    const auto id = c["crop_id"].get<std::string>();
    const auto rect = detail::parse_rect(c.value("rect", nlohmann::json()), "crop \"" + id + "\"");
    if (!rect.valid_unit()) throw SchemaError("crop \"" + id + "\" rect outside [0,1]^2");
    plan.push_back({id, rect});
  }
  return plan;
}

// Every crop_id in the stream must name a region of the template.
inline void check_stream_binds(const TokenStream& ts, const LayoutTemplate& t) {
  if (ts.report_kind != t.report_kind)
    throw SchemaError("stream " + ts.report_id + " is " + std::string(to_string(ts.report_kind)) + " but template " +
                      t.template_id + " is " + std::string(to_string(t.report_kind)));
  for (const auto& tok : ts.tokens)
    if (!t.find_region(tok.crop_id))
      throw SchemaError("token " + std::to_string(tok.id) + ": field 'crop_id' names unknown region \"" + tok.crop_id +
                        "\" in template " + t.template_id);
}

}  // namespace octex
