#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "octex/error.hpp"
#include "octex/field.hpp"
#include "octex/grammar.hpp"

namespace octex {

inline constexpr std::string_view kTokenSchemaVersion = "1";

// Axis-aligned rectangle in normalized [0,1] coordinates.
struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }

  bool valid_unit() const {
    return x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0 && x0 < x1 && y0 < y1;
  }
  bool intersects(const Rect& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct OcrToken {
  std::int64_t id = 0;
  std::string text;
  double conf = 0.0;
  Rect bbox;  // within the crop named by crop_id
  std::string crop_id;

  friend bool operator==(const OcrToken&, const OcrToken&) = default;
};

struct TokenStream {
  std::string schema_version{kTokenSchemaVersion};
  std::string report_id;
  ReportKind report_kind = ReportKind::Rnfl;
  std::string backend_name;
  std::vector<OcrToken> tokens;

  friend bool operator==(const TokenStream&, const TokenStream&) = default;
};

namespace detail {

[[noreturn]] inline void token_error(std::int64_t id, std::string_view field, std::string_view what) {
  throw SchemaError("token " + std::to_string(id) + ": field '" + std::string(field) + "' " + std::string(what));
}

[[noreturn]] inline void token_error_at(std::size_t index, std::string_view field, std::string_view what) {
  throw SchemaError("token at index " + std::to_string(index) + ": field '" + std::string(field) + "' " +
                    std::string(what));
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(std::string("missing required key '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) throw SchemaError(std::string("key '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

// Parses and fully validates a token-stream document.
inline TokenStream parse_token_stream(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("token stream is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("token stream must be a JSON object");

  TokenStream ts;
  ts.schema_version = detail::require_string(doc, "schema_version");
  if (ts.schema_version != kTokenSchemaVersion)
    throw VersionError(ts.schema_version, {std::string(kTokenSchemaVersion)});
  ts.report_id = detail::require_string(doc, "report_id");
  if (ts.report_id.empty()) throw SchemaError("report_id must be non-empty");
  ts.report_kind = parse_report_kind(detail::require_string(doc, "report_kind"));
  ts.backend_name = detail::require_string(doc, "backend_name");

  const auto& toks = detail::require(doc, "tokens");
  if (!toks.is_array()) throw SchemaError("key 'tokens' must be an array");

  std::set<std::int64_t> seen;
  ts.tokens.reserve(toks.size());
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (!t.is_object()) detail::token_error_at(i, "token", "must be an object");
    auto id_it = t.find("id");
    if (id_it == t.end() || !id_it->is_number_integer()) detail::token_error_at(i, "id", "must be an integer");
    OcrToken tok;
    tok.id = id_it->get<std::int64_t>();
    if (tok.id < 0) detail::token_error(tok.id, "id", "must be >= 0");
    if (!seen.insert(tok.id).second) detail::token_error(tok.id, "id", "is not unique");

    auto text_it = t.find("text");
    if (text_it == t.end() || !text_it->is_string()) detail::token_error(tok.id, "text", "must be a string");
    tok.text = std::string(text::trim(text_it->get<std::string>()));
    if (tok.text.empty()) detail::token_error(tok.id, "text", "must be non-empty");

    auto conf_it = t.find("conf");
    if (conf_it == t.end() || !conf_it->is_number()) detail::token_error(tok.id, "conf", "must be a number");
    tok.conf = conf_it->get<double>();
    if (!(tok.conf >= 0.0 && tok.conf <= 1.0)) detail::token_error(tok.id, "conf", "must lie in [0,1]");

    auto bbox_it = t.find("bbox");
    if (bbox_it == t.end() || !bbox_it->is_array() || bbox_it->size() != 4)
      detail::token_error(tok.id, "bbox", "must be [x0,y0,x1,y1]");
    for (const auto& c : *bbox_it)
      if (!c.is_number()) detail::token_error(tok.id, "bbox", "must contain numbers");
    tok.bbox = {(*bbox_it)[0].get<double>(), (*bbox_it)[1].get<double>(), (*bbox_it)[2].get<double>(),
                (*bbox_it)[3].get<double>()};
    if (!tok.bbox.valid_unit())
      detail::token_error(tok.id, "bbox", "must lie in [0,1] with x0<x1 and y0<y1");

    auto crop_it = t.find("crop_id");
    if (crop_it == t.end() || !crop_it->is_string() || crop_it->get<std::string>().empty())
      detail::token_error(tok.id, "crop_id", "must be a non-empty string");
    tok.crop_id = crop_it->get<std::string>();
    ts.tokens.push_back(std::move(tok));
  }
  return ts;
}

inline nlohmann::json to_json(const TokenStream& ts) {
  nlohmann::json toks = nlohmann::json::array();
  for (const auto& t : ts.tokens) {
    toks.push_back({{"id", t.id},
                    {"text", t.text},
                    {"conf", t.conf},
                    {"bbox", {t.bbox.x0, t.bbox.y0, t.bbox.x1, t.bbox.y1}},
                    {"crop_id", t.crop_id}});
  }
  return {{"schema_version", ts.schema_version},
          {"report_id", ts.report_id},
          {"report_kind", to_string(ts.report_kind)},
          {"backend_name", ts.backend_name},
          {"tokens", std::move(toks)}};
}

inline std::string serialize_token_stream(const TokenStream& ts) { return to_json(ts).dump(1) + "\n"; }

inline double median_height(const std::vector<OcrToken>& tokens) {
  if (tokens.empty()) return 0.0;
  std::vector<double> h;
  h.reserve(tokens.size());
  for (const auto& t : tokens) h.push_back(t.bbox.height());
  std::sort(h.begin(), h.end());
  const auto n = h.size();
  return n % 2 ? h[n / 2] : 0.5 * (h[n / 2 - 1] + h[n / 2]);
}

// Groups one crop's tokens into rows, top to bottom, each row left to right.
// A new row starts when a token's vertical center is more than half the
// median token height below the previous token's center.
inline std::vector<std::vector<OcrToken>> reading_rows(std::vector<OcrToken> tokens) {
  std::vector<std::vector<OcrToken>> rows;
  if (tokens.empty()) return rows;
  for (const auto& t : tokens)
    if (t.crop_id != tokens.front().crop_id)
      throw ContractError("reading order requires tokens from a single crop; found '" + tokens.front().crop_id +
                          "' and '" + t.crop_id + "'");
  const double tol = 0.5 * median_height(tokens);

  // Total order on every field makes the result independent of input order.
  auto full_less = [](const OcrToken& a, const OcrToken& b) {
    return std::tie(a.bbox.y0, a.bbox.y1, a.bbox.x0, a.bbox.x1, a.id) <
           std::tie(b.bbox.y0, b.bbox.y1, b.bbox.x0, b.bbox.x1, b.id);
  };
  std::sort(tokens.begin(), tokens.end(), [&](const OcrToken& a, const OcrToken& b) {
    if (a.bbox.cy() != b.bbox.cy()) return a.bbox.cy() < b.bbox.cy();
    return full_less(a, b);
  });

  double prev_cy = tokens.front().bbox.cy();
  rows.emplace_back();
  for (auto& t : tokens) {
    if (t.bbox.cy() - prev_cy > tol) rows.emplace_back();
    prev_cy = t.bbox.cy();
    rows.back().push_back(std::move(t));
  }
  for (auto& row : rows)
    std::sort(row.begin(), row.end(), [&](const OcrToken& a, const OcrToken& b) {
      if (a.bbox.x0 != b.bbox.x0) return a.bbox.x0 < b.bbox.x0;
      return full_less(a, b);
    });
  return rows;
}

inline std::vector<OcrToken> reading_order(std::vector<OcrToken> tokens) {
  std::vector<OcrToken> out;
  out.reserve(tokens.size());
  for (auto& row : reading_rows(std::move(tokens)))
    for (auto& t : row) out.push_back(std::move(t));
  return out;
}

// Tokens of one crop, in stream order.
inline std::vector<OcrToken> tokens_in_crop(const TokenStream& ts, std::string_view crop_id) {
  std::vector<OcrToken> out;
  for (const auto& t : ts.tokens)
    if (t.crop_id == crop_id) out.push_back(t);
  return out;
}

}  // namespace octex
