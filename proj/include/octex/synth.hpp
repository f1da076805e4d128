#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "octex/csv.hpp"
#include "octex/eval.hpp"
#include "octex/field.hpp"
#include "octex/geometry.hpp"
#include "octex/layout.hpp"
#include "octex/qc.hpp"
#include "octex/templates.hpp"
#include "octex/token_stream.hpp"

namespace octex {

struct ConfNoise {
  double sigma = 0.0;  // each token loses |N(0, sigma)| confidence
};

// Injection rates. A default-constructed profile is noiseless.
struct NoiseProfile {
  double p_misread = 0.0;
  double p_odos_swap = 0.0;
  double p_seq_shift = 0.0;
  double p_hflip = 0.0;
  double p_vflip = 0.0;
  double p_drop = 0.0;
  ConfNoise conf_noise;
  double jitter = 0.0;  // grid position sigma as a fraction of slot spacing
  std::uint64_t seed = 0;
};

inline void validate_profile(const NoiseProfile& p) {
  const std::pair<const char*, double> probs[] = {
      {"p_misread", p.p_misread}, {"p_odos_swap", p.p_odos_swap}, {"p_seq_shift", p.p_seq_shift},
      {"p_hflip", p.p_hflip},     {"p_vflip", p.p_vflip},         {"p_drop", p.p_drop},
  };
  for (const auto& [name, v] : probs)
    if (!(v >= 0.0 && v <= 1.0)) throw SchemaError(std::string("noise profile '") + name + "' must lie in [0,1]");
  if (!(p.conf_noise.sigma >= 0.0)) throw SchemaError("noise profile 'conf_noise.sigma' must be >= 0");
  if (!(p.jitter >= 0.0)) throw SchemaError("noise profile 'jitter' must be >= 0");
}

inline NoiseProfile load_noise_profile(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("noise profile is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("noise profile must be a JSON object");
  NoiseProfile p;
  auto num = [&](const char* key, double& into) {
    if (auto it = doc.find(key); it != doc.end()) {
      if (!it->is_number()) throw SchemaError(std::string("noise profile '") + key + "' must be a number");
      into = it->get<double>();
    }
  };
  num("p_misread", p.p_misread);
  num("p_odos_swap", p.p_odos_swap);
  num("p_seq_shift", p.p_seq_shift);
  num("p_hflip", p.p_hflip);
  num("p_vflip", p.p_vflip);
  num("p_drop", p.p_drop);
  num("jitter", p.jitter);
  if (auto it = doc.find("conf_noise"); it != doc.end()) {
    if (!it->is_object() || !it->contains("sigma") || !(*it)["sigma"].is_number())
      throw SchemaError("noise profile 'conf_noise' must be {\"sigma\": number}");
    p.conf_noise.sigma = (*it)["sigma"].get<double>();
  }
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw SchemaError("noise profile 'seed' must be a non-negative integer");
    p.seed = it->get<std::uint64_t>();
  }
  for (const auto& [key, _] : doc.items()) {
    static const std::set<std::string> known{"p_misread", "p_odos_swap", "p_seq_shift", "p_hflip", "p_vflip",
                                             "p_drop",    "jitter",      "conf_noise",  "seed"};
    if (!known.count(key)) throw SchemaError("unknown noise profile key '" + key + "'");
  }
  validate_profile(p);
  return p;
}

inline nlohmann::json to_json(const NoiseProfile& p) {
  return {{"p_misread", p.p_misread}, {"p_odos_swap", p.p_odos_swap}, {"p_seq_shift", p.p_seq_shift},
          {"p_hflip", p.p_hflip},     {"p_vflip", p.p_vflip},         {"p_drop", p.p_drop},
          {"conf_noise", {{"sigma", p.conf_noise.sigma}}},            {"jitter", p.jitter},
          {"seed", p.seed}};
}

// ---------------------------------------------------------------------------
// Randomness. Distributions are written out by hand because the standard
// library's are implementation-defined and fixtures must match everywhere.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 eng_;
};

// Independent substreams per report: layout, injected errors, confidence.
enum class Stream : std::uint64_t { Layout = 1, Noise = 2, Conf = 3 };

inline std::uint64_t substream_seed(std::uint64_t seed, std::size_t report_index, Stream s) {
  return splitmix64(splitmix64(seed) ^ splitmix64((static_cast<std::uint64_t>(report_index) << 2) |
                                                  static_cast<std::uint64_t>(s)));
}

// ---------------------------------------------------------------------------
// Ledger

inline constexpr std::string_view kErrOdOsSwap = "odos_swap";
inline constexpr std::string_view kErrSeqShift = "seq_shift";
inline constexpr std::string_view kErrHFlip = "hflip";
inline constexpr std::string_view kErrVFlip = "vflip";
inline constexpr std::string_view kErrMisread = "misread";
inline constexpr std::string_view kErrDrop = "drop";

struct LedgerEntry {
  std::string report_id;
  std::string error_kind;
  std::vector<FieldId> fields;
  std::string before;
  std::string after;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

inline std::string csv_header_ledger() { return "report_id,error_kind,fields,before,after\n"; }

inline std::string csv_row(const LedgerEntry& e) {
  std::string fields;
  for (const auto& f : e.fields) fields += (fields.empty() ? "" : ";") + f.key();
  return csv_quote(e.report_id) + "," + e.error_kind + "," + csv_quote(fields) + "," + csv_quote(e.before) + "," +
         csv_quote(e.after) + "\n";
}

struct SynthBatch {
  std::vector<TokenStream> streams;
  std::vector<GoldRecord> gold;
  std::vector<LedgerEntry> ledger;
};

// ---------------------------------------------------------------------------
// Generation

namespace synth_detail {

// Printed row labels of the label-anchored fields.
inline std::string_view printed_label(FieldName n) {
  switch (n) {
    case FieldName::RnflSignalStrength:
    case FieldName::GccSignalStrength: return "Signal Strength:";
    case FieldName::RnflAvgThickness: return "Average RNFL Thickness";
    case FieldName::RnflSymmetry: return "RNFL Symmetry";
    case FieldName::RnflRimArea: return "Rim Area";
    case FieldName::RnflDiscArea: return "Disc Area";
    case FieldName::RnflAvgCdRatio: return "Average C/D Ratio";
    case FieldName::RnflVertCdRatio: return "Vertical C/D Ratio";
    case FieldName::RnflCupVolume: return "Cup Volume";
    case FieldName::GccAvgGclIpl: return "Average GCL + IPL Thickness";
    case FieldName::GccMinGclIpl: return "Minimum GCL + IPL Thickness";
    default: return "";
  }
}

// A value in integer units of its last printed digit.
struct Truth {
  std::int64_t scaled = 0;
  int decimals = 0;
  double value() const { return static_cast<double>(scaled) / std::pow(10.0, decimals); }
};

inline std::string digits_of(const Truth& t) {
  if (t.decimals == 0) return std::to_string(t.scaled);
  std::ostringstream os;
  os << std::fixed << std::setprecision(t.decimals) << t.value();
  return os.str();
}

inline Truth draw_value(Rng& rng, const FieldSpec& spec, bool grid) {
  switch (spec.type) {
    case ValueType::Signal: return {rng.uniform_int(5, 10), 0};
    case ValueType::ThicknessUm: return grid ? Truth{rng.uniform_int(40, 200), 0} : Truth{rng.uniform_int(0, 300), 0};
    case ValueType::GclIplUm: return grid ? Truth{rng.uniform_int(40, 200), 0} : Truth{rng.uniform_int(0, 250), 0};
    case ValueType::Ratio: return {rng.uniform_int(0, 100), 2};
    case ValueType::RimArea: return {rng.uniform_int(0, 500), 2};
    case ValueType::DiscArea: return {rng.uniform_int(20, 600), 2};
    case ValueType::CupVolume: return {rng.uniform_int(0, 200), 2};
    case ValueType::Percent: return {rng.uniform_int(0, 100), 0};
  }
  return {};
}

// Text printed after the number.
inline std::string_view suffix_of(ValueType type, bool grid) {
  switch (type) {
    case ValueType::Signal: return "/10";
    case ValueType::ThicknessUm:
    case ValueType::GclIplUm: return grid ? "" : " \xC2\xB5m";
    case ValueType::RimArea:
    case ValueType::DiscArea: return " mm\xC2\xB2";
    case ValueType::CupVolume: return " mm\xC2\xB3";
    case ValueType::Percent: return "%";
    case ValueType::Ratio: return "";
  }
  return "";
}

struct Slot {
  OcrToken tok;
  std::optional<FieldId> field;  // set for value tokens
  std::string digits;            // numeric part of the text
  std::string suffix;
  bool grid = false;
  bool touched = false;
  bool dropped = false;

  void set_digits(std::string d) {
    digits = std::move(d);
    tok.text = digits + suffix;
  }
};

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline Rect box_at(Point c, double w, double h) {
  c.x = std::clamp(c.x, w / 2, 1.0 - w / 2);
  c.y = std::clamp(c.y, h / 2, 1.0 - h / 2);
  return {c.x - w / 2, c.y - h / 2, c.x + w / 2, c.y + h / 2};
}

// Horizontal span of a page-x interval inside a region's crop.
inline std::pair<double, double> crop_span(const Region& r, double page_x0, double page_x1) {
  return {(page_x0 - r.rect.x0) / r.rect.width(), (page_x1 - r.rect.x0) / r.rect.width()};
}

inline constexpr double kGridTokenW = 0.12;
inline constexpr double kGridTokenH = 0.08;
inline constexpr double kShiftInward = 0.12;

struct GridShape {
  int slots;
  double radius;
};

inline GridShape grid_shape(FieldPlacement p) {
  switch (p) {
    case FieldPlacement::ClockHour: return {12, 0.38};
    case FieldPlacement::Quadrant: return {4, 0.30};
    case FieldPlacement::Sector: return {6, 0.33};
    case FieldPlacement::LabelRow: break;
  }
  return {1, 0.0};
}

inline double slot_angle(const FieldSpec& s) {
  switch (s.placement) {
    case FieldPlacement::ClockHour: return ClockGeometry::hour_angle(s.slot);
    case FieldPlacement::Quadrant: return s.slot * 90.0;
    case FieldPlacement::Sector: return SectorGeometry::sector_angle(s.slot);
    case FieldPlacement::LabelRow: break;
  }
  return 0.0;
}

inline AngularFrame frame_of(const LayoutTemplate& t, const Region& r) {
  return AngularFrame{r.center, t.crop_aspect(r), t.is_mirrored(*r.eye())};
}

class ReportBuilder {
 public:
  ReportBuilder(const LayoutTemplate& t, std::string report_id, std::uint64_t seed, std::size_t index,
                const NoiseProfile& profile)
      : t_(t),
        id_(std::move(report_id)),
        profile_(profile),
        layout_(substream_seed(seed, index, Stream::Layout)),
        noise_(substream_seed(seed, index, Stream::Noise)),
        conf_(substream_seed(seed, index, Stream::Conf)) {}

  void lay_out(std::vector<GoldRecord>& gold) {
    for (const auto& region : t_.regions) {
      switch (region.geometry_kind) {
        case GeometryKind::LabelValue:
        case GeometryKind::ColumnPair:
          if (region.expected_fields.empty())
            lay_out_fovea(region);
          else
            lay_out_rows(region, gold);
          break;
        case GeometryKind::ClockGrid:
        case GeometryKind::SectorGrid: lay_out_grid(region, gold); break;
      }
    }
  }

  void inject(std::vector<LedgerEntry>& ledger) {
    inject_swaps(ledger);
    inject_shifts(ledger);
    inject_flips(ledger);
    inject_misreads(ledger);
    inject_drops(ledger);
  }

  TokenStream finish() {
    TokenStream ts;
    ts.report_id = id_;
    ts.report_kind = t_.report_kind;
    ts.backend_name = "octex-synth";
    for (auto& s : slots_) {
      const double loss = std::abs(conf_.normal()) * profile_.conf_noise.sigma;
      if (s.dropped) continue;
      s.tok.conf = round3(std::clamp(s.tok.conf - loss, 0.0, 1.0));
      ts.tokens.push_back(s.tok);
    }
    return ts;
  }

 private:
  Slot& add(std::string crop, Rect box, std::string digits, std::string suffix) {
    Slot s;
    s.tok.id = next_id_++;
    s.tok.crop_id = std::move(crop);
    s.tok.bbox = box;
    s.tok.conf = round3(0.93 + 0.07 * layout_.uniform());
    s.digits = std::move(digits);
    s.suffix = std::move(suffix);
    s.tok.text = s.digits + s.suffix;
    slots_.push_back(std::move(s));
    return slots_.back();
  }

  void record(std::vector<GoldRecord>& gold, FieldId f, const Truth& v) {
    gold.push_back({id_, f, v.value(), v.decimals});
  }

  void lay_out_rows(const Region& region, std::vector<GoldRecord>& gold) {
    std::vector<FieldName> names;
    for (const auto& f : region.expected_fields)
      if (std::find(names.begin(), names.end(), f.name) == names.end()) names.push_back(f.name);
    const double n = static_cast<double>(names.size());
    const auto od = crop_span(region, 0.29, 0.36);
    const auto label = crop_span(region, 0.41, 0.59);
    const auto os = crop_span(region, 0.64, 0.71);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& spec = spec_of(names[i]);
      const double cy = (static_cast<double>(i) + 0.5) / n;
      const double h = 0.5 / n;
      add(region.name, {label.first, cy - h / 2, label.second, cy + h / 2}, std::string(printed_label(names[i])), "");
      for (auto eye : kEyes) {
        const FieldId f{names[i], eye};
        const auto truth = draw_value(layout_, spec, false);
        const auto span = eye == Eye::OD ? od : os;
        auto& s = add(region.name, {span.first, cy - h / 2, span.second, cy + h / 2}, digits_of(truth),
                      std::string(suffix_of(spec.type, false)));
        s.field = f;
        record(gold, f, truth);
      }
    }
  }

  void lay_out_fovea(const Region& region) {
    for (auto eye : kEyes) {
      const auto x = layout_.uniform_int(80, 120);
      const auto y = layout_.uniform_int(80, 120);
      const auto span = eye == Eye::OD ? crop_span(region, 0.15, 0.33) : crop_span(region, 0.67, 0.85);
      add(region.name, {span.first, 0.25, span.second, 0.75},
          "Fovea: " + std::to_string(x) + ", " + std::to_string(y), "");
    }
  }

  void lay_out_grid(const Region& region, std::vector<GoldRecord>& gold) {
    const auto frame = frame_of(t_, region);
    const auto placement = region.expected_fields.front().spec().placement;
    const auto shape = grid_shape(placement);
    const double sigma = profile_.jitter * shape.radius * 2.0 * std::numbers::pi / shape.slots;
    if (placement == FieldPlacement::Quadrant) {
      static constexpr std::string_view kLetters[] = {"S", "N", "I", "T"};
      for (int q = 0; q < 4; ++q)
        add(region.name, box_at(frame.point_at(q * 90.0, 0.15), 0.05, 0.06), std::string(kLetters[q]), "");
    }
    std::vector<FieldId> fields = region.expected_fields;
    std::sort(fields.begin(), fields.end());
    for (const auto& f : fields) {
      const auto& spec = f.spec();
      const auto truth = draw_value(layout_, spec, true);
      Point p = frame.point_at(slot_angle(spec), shape.radius);
      const double dx = layout_.normal() * sigma;
      const double dy = layout_.normal() * sigma;
      p.x += dx / frame.aspect;
      p.y += dy;
      auto& s = add(region.name, box_at(p, kGridTokenW, kGridTokenH), digits_of(truth), "");
      s.field = f;
      s.grid = true;
      record(gold, f, truth);
    }
  }

  Slot* value_slot(const FieldId& f) {
    for (auto& s : slots_)
      if (s.field && *s.field == f) return &s;
    return nullptr;
  }

  void inject_swaps(std::vector<LedgerEntry>& ledger) {
    for (auto name : field_names(t_.report_kind)) {
      if (spec_of(name).placement != FieldPlacement::LabelRow) continue;
      if (!noise_.bernoulli(profile_.p_odos_swap)) continue;
      Slot* od = value_slot({name, Eye::OD});
      Slot* os = value_slot({name, Eye::OS});
      if (!od || !os || od->digits == os->digits) continue;
      const std::string before = od->digits + "|" + os->digits;
      std::swap(od->tok.text, os->tok.text);
      std::swap(od->digits, os->digits);
      std::swap(od->tok.conf, os->tok.conf);
      od->touched = os->touched = true;
      ledger.push_back({id_, std::string(kErrOdOsSwap), {*od->field, *os->field}, before,
                        od->digits + "|" + os->digits});
    }
  }

  // Moves the token of hour h-1 onto hour h's spoke, slightly inside the
  // ring, so hour h holds two values and hour h-1 none.
  void inject_shifts(std::vector<LedgerEntry>& ledger) {
    for (const auto& region : t_.regions) {
      if (region.geometry_kind != GeometryKind::ClockGrid) continue;
      if (!noise_.bernoulli(profile_.p_seq_shift)) continue;
      const int h = static_cast<int>(noise_.uniform_int(1, 12));
      const int prev = h == 1 ? 12 : h - 1;
      const Eye eye = *region.eye();
      Slot* s = value_slot({clock_field(prev), eye});
      if (!s || s->touched) continue;
      const auto frame = frame_of(t_, region);
      s->tok.bbox = box_at(frame.point_at(ClockGeometry::hour_angle(h), grid_shape(FieldPlacement::ClockHour).radius -
                                                                            kShiftInward),
                           kGridTokenW, kGridTokenH);
      s->touched = true;
      ledger.push_back({id_, std::string(kErrSeqShift), {{clock_field(prev), eye}, {clock_field(h), eye}},
                        "hour " + std::to_string(prev), "hour " + std::to_string(h)});
    }
  }

  void inject_flips(std::vector<LedgerEntry>& ledger) {
    for (auto& s : slots_) {
      const bool hit_h = noise_.bernoulli(profile_.p_hflip);
      const bool hit_v = noise_.bernoulli(profile_.p_vflip);
      if (!s.field || s.touched) continue;
      const auto type = s.field->spec().type;
      if (type != ValueType::ThicknessUm && type != ValueType::GclIplUm) continue;
      const std::string before = s.digits;
      if (hit_h && hflip(before) != before) {
        s.set_digits(hflip(before));
        s.touched = true;
        ledger.push_back({id_, std::string(kErrHFlip), {*s.field}, before, s.digits});
      } else if (hit_v) {
        const auto v = vflip(before);
        if (!v || *v == before) continue;
        s.set_digits(*v);
        s.touched = true;
        ledger.push_back({id_, std::string(kErrVFlip), {*s.field}, before, s.digits});
      }
    }
  }

  void inject_misreads(std::vector<LedgerEntry>& ledger) {
    for (auto& s : slots_) {
      if (!noise_.bernoulli(profile_.p_misread) || !s.field || s.touched) continue;
      const std::string before = s.digits;
      std::string after = before;
      while (after == before) after = digits_of(draw_value(noise_, s.field->spec(), s.grid));
      s.set_digits(after);
      s.touched = true;
      ledger.push_back({id_, std::string(kErrMisread), {*s.field}, before, after});
    }
  }

  void inject_drops(std::vector<LedgerEntry>& ledger) {
    for (auto& s : slots_) {
      if (!noise_.bernoulli(profile_.p_drop) || !s.field || s.touched) continue;
      s.dropped = s.touched = true;
      ledger.push_back({id_, std::string(kErrDrop), {*s.field}, s.digits, ""});
    }
  }

  const LayoutTemplate& t_;
  std::string id_;
  const NoiseProfile& profile_;
  Rng layout_;
  Rng noise_;
  Rng conf_;
  std::vector<Slot> slots_;
  std::int64_t next_id_ = 0;
};

}  // namespace synth_detail

inline std::string synth_report_id(ReportKind kind, std::size_t index) {
  std::ostringstream os;
  os << to_string(kind) << "-" << std::setw(5) << std::setfill('0') << index + 1;
  return os.str();
}

// `n` reports laid out on `t`, with gold truth taken before noise and one
// ledger entry per injected error. A pure function of its arguments.
inline SynthBatch gen_reports(ReportKind kind, std::size_t n, const NoiseProfile& profile, const LayoutTemplate& t) {
  if (n < 1) throw ContractError("gen_reports needs n >= 1");
  if (t.report_kind != kind) throw ContractError("template kind does not match the requested report kind");
  validate_profile(profile);
  SynthBatch out;
  for (std::size_t i = 0; i < n; ++i) {
    synth_detail::ReportBuilder b(t, synth_report_id(kind, i), profile.seed, i, profile);
    b.lay_out(out.gold);
    b.inject(out.ledger);
    out.streams.push_back(b.finish());
  }
  return out;
}

inline SynthBatch gen_reports(ReportKind kind, std::size_t n, const NoiseProfile& profile) {
  return gen_reports(kind, n, profile, default_template(kind));
}

}  // namespace octex
