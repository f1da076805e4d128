#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "octex/field.hpp"

namespace octex {

enum class ParseStatus : std::uint8_t {
  Ok,
  NoMatch,    // text does not have the grammar's shape
  Malformed,  // shape matches but the value is impossible (e.g. 12/10)
};

template <typename T>
struct ParseResult {
  std::optional<T> value;
  ParseStatus status = ParseStatus::NoMatch;

  static ParseResult ok(T v) { return {std::move(v), ParseStatus::Ok}; }
  static ParseResult no_match() { return {std::nullopt, ParseStatus::NoMatch}; }
  static ParseResult malformed() { return {std::nullopt, ParseStatus::Malformed}; }

  explicit operator bool() const { return value.has_value(); }
};

namespace text {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

// Lowercase ASCII, single spaces, no leading/trailing whitespace.
inline std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

inline std::vector<std::string> words(std::string_view normalized) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    const auto j = normalized.find(' ', i);
    const auto end = j == std::string_view::npos ? normalized.size() : j;
    if (end > i) out.emplace_back(normalized.substr(i, end - i));
    i = end + 1;
  }
  return out;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

// Equal length and at most one differing character.
inline bool within_one_substitution(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  int diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i] && ++diff > 1) return false;
  return true;
}

inline std::string strip_word_punct(std::string_view w) {
  while (!w.empty() && (w.back() == ':' || w.back() == ',' || w.back() == ';')) w.remove_suffix(1);
  return std::string(w);
}

}  // namespace text

// Case-insensitive, whitespace-normalized match of `label` as a run of
// consecutive words inside `haystack`, allowing one substituted character per
// word. Returns the index of the first matched word of `haystack`.
inline std::optional<std::size_t> match_label(std::string_view haystack, std::string_view label) {
  const auto hay = text::words(text::normalize(haystack));
  const auto pat = text::words(text::normalize(label));
  if (pat.empty() || hay.size() < pat.size()) return std::nullopt;
  for (std::size_t i = 0; i + pat.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < pat.size() && ok; ++j)
      ok = text::within_one_substitution(text::strip_word_punct(hay[i + j]), pat[j]);
    if (ok) return i;
  }
  return std::nullopt;
}

// Removes a trailing unit suffix, including the mangled forms OCR produces
// for micrometres ("52m", "52um", "52 µm").
inline std::string_view strip_units(std::string_view s) {
  s = text::trim(s);
  // Longest suffixes first so "mm" is not mistaken for "m".
  static constexpr std::string_view kUnits[] = {
      "mm\xC2\xB2", "mm\xC2\xB3", "\xC2\xB5m", "\xCE\xBCm", "mm2", "mm3", "mm", "um", "m", "%",
  };
  for (auto unit : kUnits) {
    if (text::ends_with(s, unit) && s.size() > unit.size()) {
      auto rest = text::trim(s.substr(0, s.size() - unit.size()));
      if (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest.back()))) return rest;
    }
  }
  return s;
}

// "8/10" -> 8. Anything else is NoMatch; N > 10 is Malformed.
inline ParseResult<int> parse_signal_strength(std::string_view s) {
  s = text::trim(s);
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return ParseResult<int>::no_match();
  auto num = text::trim(s.substr(0, slash));
  auto den = text::trim(s.substr(slash + 1));
  // Tolerate a label glued to the front ("Strength:8/10").
  std::size_t k = num.size();
  while (k > 0 && std::isdigit(static_cast<unsigned char>(num[k - 1]))) --k;
  if (k > 0 && num[k - 1] != ':' && !text::is_space(num[k - 1])) return ParseResult<int>::no_match();
  num = num.substr(k);
  if (num.empty() || num.size() > 2 || den != "10") return ParseResult<int>::no_match();
  const int n = std::stoi(std::string(num));
  if (n > 10) return ParseResult<int>::malformed();
  return ParseResult<int>::ok(n);
}

namespace detail {

// Digits with an optional fraction of at most `max_frac` digits.
inline std::optional<double> parse_decimal(std::string_view s, std::size_t max_int, std::size_t max_frac) {
  const auto dot = s.find('.');
  const auto whole = s.substr(0, dot);
  if (!text::all_digits(whole) || whole.size() > max_int) return std::nullopt;
  if (dot != std::string_view::npos) {
    const auto frac = s.substr(dot + 1);
    if (!text::all_digits(frac) || frac.size() > max_frac) return std::nullopt;
  }
  return std::stod(std::string(s));
}

}  // namespace detail

// Parses a cell under the grammar of `type`. Grammar violations never coerce.
inline ParseResult<double> parse_value(std::string_view raw, ValueType type) {
  using R = ParseResult<double>;
  if (type == ValueType::Signal) {
    auto r = parse_signal_strength(raw);
    if (!r) return r.status == ParseStatus::Malformed ? R::malformed() : R::no_match();
    return R::ok(*r.value);
  }
  const auto s = strip_units(raw);
  switch (type) {
    case ValueType::ThicknessUm:
    case ValueType::GclIplUm:
      if (!text::all_digits(s) || s.size() > 3) return R::no_match();
      return R::ok(std::stod(std::string(s)));
    case ValueType::Ratio: {
      const auto v = detail::parse_decimal(s, 1, 2);
      if (!v) return R::no_match();
      return *v <= 1.0 ? R::ok(*v) : R::malformed();
    }
    case ValueType::Percent: {
      const auto v = detail::parse_decimal(s, 3, 2);
      if (!v) return R::no_match();
      return *v <= 100.0 ? R::ok(*v) : R::malformed();
    }
    case ValueType::RimArea:
    case ValueType::DiscArea:
    case ValueType::CupVolume: {
      const auto v = detail::parse_decimal(s, 2, 2);
      return v ? R::ok(*v) : R::no_match();
    }
    case ValueType::Signal: break;
  }
  return R::no_match();
}

// True when the token looks like a candidate value of any numeric grammar.
inline bool looks_numeric(std::string_view raw) {
  const auto s = strip_units(raw);
  if (s.empty()) return false;
  bool digit = false;
  for (char c : s) {
    if (std::isdigit(static_cast<unsigned char>(c)))
      digit = true;
    else if (c != '.' && c != '/')
      return false;
  }
  return digit;
}

struct FoveaPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const FoveaPoint&, const FoveaPoint&) = default;
};

inline constexpr int kMacularCubeSize = 200;

// "Fovea: 105, 106" -> (105, 106), both within the 200x200 macular cube.
inline std::optional<FoveaPoint> parse_fovea(std::string_view s) {
  s = text::trim(s);
  if (!text::starts_with_icase(s, "fovea")) return std::nullopt;
  s.remove_prefix(5);
  s = text::trim(s);
  if (!s.empty() && s.front() == ':') s.remove_prefix(1);
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  const auto xs = text::trim(s.substr(0, comma));
  const auto ys = text::trim(s.substr(comma + 1));
  if (!text::all_digits(xs) || !text::all_digits(ys) || xs.size() > 3 || ys.size() > 3) return std::nullopt;
  const FoveaPoint p{std::stoi(std::string(xs)), std::stoi(std::string(ys))};
  if (p.x < 0 || p.x > kMacularCubeSize || p.y < 0 || p.y > kMacularCubeSize) return std::nullopt;
  return p;
}

}  // namespace octex
