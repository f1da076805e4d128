#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "octex/octex.hpp"

namespace octex::test {

inline OcrToken tok(std::int64_t id, std::string text, double cx, double cy, std::string crop = "c",
                    double conf = 0.99, double w = 0.1, double h = 0.06) {
  return {id, std::move(text), conf, {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, std::move(crop)};
}

// Token whose page x center is `page_x` inside region `r`, on crop row y.
inline OcrToken page_tok(const Region& r, std::int64_t id, std::string text, double page_x, double cy,
                         double conf = 0.99, double w = 0.08) {
  const double cx = (page_x - r.rect.x0) / r.rect.width();
  return {id, std::move(text), conf, {cx - w / 2, cy - 0.2, cx + w / 2, cy + 0.2}, r.name};
}

// Token centered at frame angle `deg` and `radius` of a grid region.
inline OcrToken grid_tok(const AngularFrame& f, std::int64_t id, std::string text, double deg, double radius = 0.38,
                         double conf = 0.99, std::string crop = "c") {
  const auto p = f.point_at(deg, radius);
  return tok(id, std::move(text), p.x, p.y, std::move(crop), conf, 0.06, 0.05);
}

inline TokenStream stream(ReportKind kind, std::vector<OcrToken> tokens, std::string id = "r1") {
  TokenStream ts;
  ts.report_id = std::move(id);
  ts.report_kind = kind;
  ts.backend_name = "test";
  ts.tokens = std::move(tokens);
  return ts;
}

inline const LayoutTemplate& rnfl() { return default_template(ReportKind::Rnfl); }
inline const LayoutTemplate& gcc() { return default_template(ReportKind::Gcc); }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, std::string_view s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Fresh scratch directory per test.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("octex_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace octex::test
