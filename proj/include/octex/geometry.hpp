#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "octex/field.hpp"
#include "octex/grammar.hpp"
#include "octex/layout.hpp"
#include "octex/token_stream.hpp"

namespace octex {

// Polar frame of a circular grid inside its crop. Angles are degrees in
// [0,360), measured clockwise from the top of the page; a mirrored frame
// reports the reflection so that slot k always sits at k * slot width.
struct AngularFrame {
  Point center;
  double aspect = 1.0;        // physical crop width / height
  bool mirrored = false;
  double min_radius = 0.05;   // tokens closer to the center have no direction

  // Unmirrored angle of a crop-normalized point, or nullopt at the center.
  std::optional<double> screen_angle(Point p) const {
    const double dx = (p.x - center.x) * aspect;
    const double dy = p.y - center.y;
    if (std::hypot(dx, dy) < min_radius) return std::nullopt;
    double deg = std::atan2(dx, -dy) * 180.0 / std::numbers::pi;
    if (deg < 0) deg += 360.0;
    if (deg >= 360.0) deg -= 360.0;
    return deg;
  }

  std::optional<double> angle(Point p) const {
    auto a = screen_angle(p);
    if (!a) return a;
    if (mirrored && *a != 0.0) return 360.0 - *a;
    return a;
  }

  // Crop-normalized point at `radius` along frame angle `deg`.
  Point point_at(double deg, double radius) const {
    const double screen = mirrored ? 360.0 - deg : deg;
    const double rad = screen * std::numbers::pi / 180.0;
    return {center.x + radius * std::sin(rad) / aspect, center.y - radius * std::cos(rad)};
  }
};

// Clock-hour layout: hour 12 at the top, 30 degree sectors, increasing
// clockwise unless the eye is mirrored.
struct ClockGeometry {
  Point center;
  double aspect = 1.0;
  bool laterality_mirror = false;
  // Tokens closer than this to a sector edge are reported as contested.
  double boundary_guard_deg = 3.0;

  AngularFrame frame() const { return {center, aspect, laterality_mirror}; }

  // Frame angle at which hour h (1..12) is centred.
  static double hour_angle(int hour) { return (hour % 12) * 30.0; }

  static int hour_of_slot(int slot) { return slot == 0 ? 12 : slot; }
  static int slot_of_hour(int hour) { return hour % 12; }
};

// Six 60 degree wedges; boundaries at 30 + k*60 degrees so the superior wedge
// straddles the top. Slot order: superior, superior-nasal, inferior-nasal,
// inferior, inferior-temporal, superior-temporal (clockwise for an
// unmirrored grid).
struct SectorGeometry {
  Point center;
  double aspect = 1.0;
  bool laterality_mirror = false;
  double boundary_guard_deg = 3.0;

  AngularFrame frame() const { return {center, aspect, laterality_mirror}; }
  static double sector_angle(int slot) { return slot * 60.0; }
};

inline ClockGeometry clock_geometry_for(const LayoutTemplate& t, const Region& r, Eye eye) {
  return {r.center, t.crop_aspect(r), t.is_mirrored(eye)};
}

inline SectorGeometry sector_geometry_for(const LayoutTemplate& t, const Region& r, Eye eye) {
  return {r.center, t.crop_aspect(r), t.is_mirrored(eye)};
}

// Index of the slot containing `angle` for `n` equal slots, slot 0 centred
// on 0 degrees.
inline int slot_index(double angle, int n) {
  const double width = 360.0 / n;
  int k = static_cast<int>(std::floor((angle + 0.5 * width) / width));
  k %= n;
  if (k < 0) k += n;
  return k;
}

// Signed offset of `angle` from the centre of slot k, in (-180, 180].
inline double slot_offset(double angle, int k, int n) {
  double d = angle - k * (360.0 / n);
  while (d > 180.0) d -= 360.0;
  while (d <= -180.0) d += 360.0;
  return d;
}

enum class ConflictCause : std::uint8_t {
  Competing,     // two or more tokens fell into one slot
  Boundary,      // a token sits within the guard band of a slot edge
  Displacement,  // slot lies between a competing slot and an empty one
};

inline std::string_view to_string(ConflictCause c) {
  switch (c) {
    case ConflictCause::Competing: return "competing";
    case ConflictCause::Boundary: return "boundary";
    case ConflictCause::Displacement: return "displacement";
  }
  return "?";
}

inline ConflictCause parse_conflict_cause(std::string_view s) {
  for (auto c : {ConflictCause::Competing, ConflictCause::Boundary, ConflictCause::Displacement})
    if (to_string(c) == s) return c;
  throw SchemaError("unknown slot conflict cause: " + std::string(s));
}

// Evidence that a grid assignment may be wrong. For Competing conflicts
// fields.front() is the contested slot, token_ids.front() the winner and the
// rest the losers.
struct SlotConflict {
  ConflictCause cause = ConflictCause::Competing;
  std::vector<FieldId> fields;
  std::vector<std::int64_t> token_ids;

  friend bool operator==(const SlotConflict&, const SlotConflict&) = default;
};

struct GridAssignment {
  std::vector<ExtractedField> fields;  // one per slot, slot order
  std::vector<SlotConflict> conflicts;
};

namespace detail {

struct Candidate {
  const OcrToken* token;
  double value;
  double angle;
  int slot;
  double offset;
};

// Overlapping detections of the same value: keep the longer text.
inline std::vector<Candidate> drop_duplicate_detections(std::vector<Candidate> cands) {
  std::vector<bool> dead(cands.size(), false);
  for (std::size_t i = 0; i < cands.size(); ++i)
    for (std::size_t j = i + 1; j < cands.size(); ++j) {
      if (dead[i] || dead[j]) continue;
      const auto& a = *cands[i].token;
      const auto& b = *cands[j].token;
      if (cands[i].value != cands[j].value || !a.bbox.intersects(b.bbox)) continue;
      const bool keep_a = std::make_tuple(a.text.size(), a.conf, b.id) >= std::make_tuple(b.text.size(), b.conf, a.id);
      dead[keep_a ? j : i] = true;
    }
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (!dead[i]) out.push_back(cands[i]);
  return out;
}

}  // namespace detail

// Assigns numeric tokens to `n` angular slots by nearest slot centre. Each
// slot yields one field; a slot with several tokens goes to the most
// confident one and the rest are reported as a Competing conflict.
inline GridAssignment assign_slots(const std::vector<OcrToken>& tokens, const AngularFrame& frame,
                                   const std::vector<FieldId>& slot_fields, ValueType type,
                                   double boundary_guard_deg) {
  const int n = static_cast<int>(slot_fields.size());
  const double half = 180.0 / n;

  std::vector<detail::Candidate> cands;
  for (const auto& t : tokens) {
    const auto parsed = parse_value(t.text, type);
    if (!parsed) continue;
    const auto a = frame.angle({t.bbox.cx(), t.bbox.cy()});
    if (!a) continue;
    const int k = slot_index(*a, n);
    cands.push_back({&t, *parsed.value, *a, k, slot_offset(*a, k, n)});
  }
  cands = detail::drop_duplicate_detections(std::move(cands));

  std::vector<std::vector<detail::Candidate>> by_slot(static_cast<std::size_t>(n));
  for (const auto& c : cands) by_slot[static_cast<std::size_t>(c.slot)].push_back(c);

  GridAssignment out;
  std::vector<int> occupancy(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < n; ++k) {
    auto& slot = by_slot[static_cast<std::size_t>(k)];
    occupancy[static_cast<std::size_t>(k)] = static_cast<int>(slot.size());
    const FieldId field = slot_fields[static_cast<std::size_t>(k)];
    if (slot.empty()) {
      out.fields.push_back(ExtractedField::not_detected(field, MissReason::NoToken));
      continue;
    }
    std::sort(slot.begin(), slot.end(), [](const detail::Candidate& a, const detail::Candidate& b) {
      if (a.token->conf != b.token->conf) return a.token->conf > b.token->conf;
      if (std::abs(a.offset) != std::abs(b.offset)) return std::abs(a.offset) < std::abs(b.offset);
      return a.token->id < b.token->id;
    });
    const auto& win = slot.front();
    out.fields.push_back(ExtractedField::detected(field, win.value, win.token->conf, {win.token->id}));
    if (slot.size() > 1) {
      SlotConflict c{ConflictCause::Competing, {field}, {}};
      for (const auto& s : slot) c.token_ids.push_back(s.token->id);
      out.conflicts.push_back(std::move(c));
    }
  }

  // Contested tokens near a slot edge name both slots they could belong to.
  for (int k = 0; k < n; ++k)
    for (const auto& c : by_slot[static_cast<std::size_t>(k)]) {
      if (half - std::abs(c.offset) >= boundary_guard_deg) continue;
      const int neighbour = (k + (c.offset > 0 ? 1 : n - 1)) % n;
      out.conflicts.push_back({ConflictCause::Boundary,
                               {slot_fields[static_cast<std::size_t>(k)], slot_fields[static_cast<std::size_t>(neighbour)]},
                               {c.token->id}});
    }

  // A token pushed out of its slot leaves a hole on one side of the
  // collision; every slot between the two may hold a shifted value.
  for (int k = 0; k < n; ++k) {
    if (occupancy[static_cast<std::size_t>(k)] < 2) continue;
    for (int dir : {-1, +1}) {
      std::vector<int> run;
      int j = (k + dir + n) % n;
      bool found_hole = false;
      for (int steps = 1; steps < n && j != k; ++steps, j = (j + dir + n) % n) {
        const int occ = occupancy[static_cast<std::size_t>(j)];
        if (occ == 0) {
          found_hole = true;
          break;
        }
        if (occ > 1) break;
        run.push_back(j);
      }
      if (!found_hole || run.empty()) continue;
      SlotConflict c{ConflictCause::Displacement, {}, {}};
      for (int s : run) {
        c.fields.push_back(slot_fields[static_cast<std::size_t>(s)]);
        c.token_ids.push_back(by_slot[static_cast<std::size_t>(s)].front().token->id);
      }
      out.conflicts.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace octex
