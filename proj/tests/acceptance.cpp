// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "octex/octex.hpp"

using namespace octex;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict noiseless_round_trip() {
  const auto t0 = Clock::now();
  NoiseProfile p;
  p.seed = 20240501;
  std::size_t rows = 0, perfect = 0;
  for (auto kind : {ReportKind::Rnfl, ReportKind::Gcc}) {
    const auto batch = gen_reports(kind, 200, p);
    std::vector<ReportExtraction> preds;
    for (const auto& ts : batch.streams) preds.push_back(extract_report(ts, default_template(kind)));
    for (const auto& r : score(preds, batch.gold)) {
      ++rows;
      if (r.detected == 200 && r.correct == 200 && format_precision(r) == "1.0000") ++perfect;
    }
  }
  const double secs = seconds_since(t0);
  return {rows == 66 && perfect == rows && secs < 10.0,
          fmt("%zu/%zu fields at 1.0000 with detected=200, %.2fs", perfect, rows, secs)};
}

Verdict precision_oracle() {
  std::mt19937 rng(8675309);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> val(40, 200);
  int agree = 0;
  const int pairs = 1000;
  for (int trial = 0; trial < pairs; ++trial) {
    std::vector<ReportExtraction> preds;
    std::vector<GoldRecord> gold;
    std::map<FieldId, std::pair<std::int64_t, std::int64_t>> recount;
    const int reports = 1 + trial % 5;
    for (int r = 0; r < reports; ++r) {
      ReportExtraction rx;
      rx.report_id = "p" + std::to_string(r);
      rx.kind = u(rng) < 0.5 ? ReportKind::Rnfl : ReportKind::Gcc;
      for (const auto& id : all_fields(rx.kind)) {
        const int truth = val(rng);
        const bool has_gold = u(rng) < 0.95;
        if (has_gold) gold.push_back({rx.report_id, id, static_cast<double>(truth), 0});
        if (u(rng) < 0.2) {
          rx.fields.push_back(ExtractedField::not_detected(id, MissReason::NoToken));
          continue;
        }
        const bool right = u(rng) < 0.8;
        rx.fields.push_back(ExtractedField::detected(id, right ? truth : truth + 1, 0.99, {}));
        auto& c = recount[id];
        ++c.first;
        if (right && has_gold) ++c.second;
      }
      preds.push_back(std::move(rx));
    }
    bool same = true;
    for (const auto& row : score(preds, gold)) {
      const auto it = recount.find(row.field);
      const auto want = it == recount.end() ? std::pair<std::int64_t, std::int64_t>{0, 0} : it->second;
      same = same && row.detected == want.first && row.correct == want.second;
      if (row.detected > 0) same = same && *row.precision() == static_cast<double>(want.second) / want.first;
    }
    agree += same;
  }

  std::vector<PrecisionRow> rows;
  for (const auto& id : all_fields(ReportKind::Rnfl)) rows.push_back({id, 149, 149});
  for (auto& r : rows)
    if (r.field == FieldId{FieldName::RnflAvgCdRatio, Eye::OD}) r.correct = 148;
  const auto table = render_table(rows, ReportKind::Rnfl);
  std::string cd_line;
  for (std::size_t pos = 0; pos < table.size();) {
    const auto end = table.find('\n', pos);
    const auto line = table.substr(pos, end - pos);
    if (line.rfind("Avg. C/D ratio", 0) == 0) cd_line = line;
    pos = end + 1;
  }
  const bool pinned = format_precision({{FieldName::RnflAvgCdRatio, Eye::OD}, 149, 148}) == "0.9933" &&
                      cd_line.find("0.9933") != std::string::npos;
  return {agree == pairs && pinned, fmt("%d/%d pairs match the recount; 148/149 renders %s", agree, pairs,
                                        pinned ? "0.9933" : "incorrectly")};
}

Verdict flip_involutions() {
  std::mt19937 rng(4242);
  std::uniform_int_distribution<int> len(1, 6);
  std::uniform_int_distribution<int> digit(0, 9);
  const std::string rotatable = "01689";
  int h_ok = 0, v_ok = 0, v_total = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    std::string s;
    const int k = len(rng);
    // Half the strings drawn from rotatable digits so both properties get exercised.
    const bool rot = i % 2 == 0;
    for (int j = 0; j < k; ++j)
      s.push_back(rot ? rotatable[static_cast<std::size_t>(digit(rng) % 5)] : static_cast<char>('0' + digit(rng)));
    h_ok += hflip(hflip(s)) == s;
    if (is_rotatable(s)) {
      ++v_total;
      const auto once = vflip(s);
      v_ok += once && vflip(*once) == s;
    }
  }
  const bool pinned = vflip("66") == std::optional<std::string>("99") && hflip("86") == "68";
  return {h_ok == n && v_ok == v_total && v_total > 0 && pinned,
          fmt("hflip %d/%d, vflip %d/%d rotatable, pinned cases %s", h_ok, n, v_ok, v_total, pinned ? "ok" : "wrong")};
}

Verdict injected_error_detection() {
  const auto& t = default_template(ReportKind::Rnfl);

  NoiseProfile swaps;
  swaps.seed = 101;
  swaps.p_odos_swap = 0.1;
  const auto sb = gen_reports(ReportKind::Rnfl, 500, swaps);
  std::map<std::string, std::set<FieldName>> swapped;
  for (const auto& e : sb.ledger)
    if (e.error_kind == "odos_swap") swapped[e.report_id].insert(e.fields.front().name);
  std::size_t swap_total = 0, swap_hit = 0, clean_pairs = 0, false_flags = 0;
  for (const auto& ts : sb.streams) {
    const auto rx = extract_report(ts, t);
    std::set<FieldName> flagged;
    for (const auto& f : detect_od_os_swap(rx.report_id, rx.fields, ts, t)) flagged.insert(f.fields_involved.front().name);
    for (auto name : field_names(ReportKind::Rnfl)) {
      if (spec_of(name).placement != FieldPlacement::LabelRow) continue;
      if (swapped[rx.report_id].count(name)) {
        ++swap_total;
        swap_hit += flagged.count(name);
      } else {
        ++clean_pairs;
        false_flags += flagged.count(name);
      }
    }
  }
  const double swap_rate = swap_total ? static_cast<double>(swap_hit) / swap_total : 0.0;
  const double false_rate = clean_pairs ? static_cast<double>(false_flags) / clean_pairs : 0.0;

  NoiseProfile shifts;
  shifts.seed = 202;
  shifts.p_seq_shift = 0.1;
  const auto hb = gen_reports(ReportKind::Rnfl, 500, shifts);
  std::map<std::string, std::vector<std::vector<FieldId>>> injected;
  for (const auto& e : hb.ledger)
    if (e.error_kind == "seq_shift") injected[e.report_id].push_back(e.fields);
  std::size_t shift_total = 0, shift_hit = 0, wrap_total = 0, wrap_hit = 0;
  for (const auto& ts : hb.streams) {
    const auto it = injected.find(ts.report_id);
    if (it == injected.end()) continue;
    const auto rx = extract_report(ts, t);
    std::set<std::vector<FieldId>> flagged;
    for (auto eye : kEyes) {
      std::vector<ExtractedField> clock;
      for (int h = 1; h <= 12; ++h) clock.push_back(rx.at({clock_field(h), eye}));
      for (const auto& f : detect_sequence_shift(rx.report_id, clock, rx.slot_conflicts)) flagged.insert(f.fields_involved);
    }
    for (const auto& fields : it->second) {
      const bool hit = flagged.count(fields) > 0;
      ++shift_total;
      shift_hit += hit;
      if (fields.front().name == FieldName::RnflClock12) {
        ++wrap_total;
        wrap_hit += hit;
      }
    }
  }
  const double shift_rate = shift_total ? static_cast<double>(shift_hit) / shift_total : 0.0;
  const bool pass = swap_total > 0 && swap_rate >= 0.95 && false_rate <= 0.02 && shift_total > 0 &&
                    shift_rate >= 0.80 && wrap_total > 0 && wrap_hit == wrap_total;
  return {pass, fmt("swaps %zu/%zu (%.1f%%), false flags %zu/%zu (%.2f%%); shifts %zu/%zu (%.1f%%), "
                    "12->1 %zu/%zu",
                    swap_hit, swap_total, 100.0 * swap_rate, false_flags, clean_pairs, 100.0 * false_rate,
                    shift_hit, shift_total, 100.0 * shift_rate, wrap_hit, wrap_total)};
}

Verdict clock_geometry() {
  const auto& t = default_template(ReportKind::Rnfl);
  std::mt19937 rng(77);
  std::uniform_int_distribution<int> val(40, 200);
  std::uniform_real_distribution<double> off(-11.0, 11.0);
  std::uniform_real_distribution<double> radius(0.3, 0.42);
  int consistent = 0;
  const int grids = 1000;
  for (int g = 0; g < grids; ++g) {
    const Eye eye = g % 2 ? Eye::OS : Eye::OD;
    const auto geom = clock_geometry_for(t, *t.find_region(eye == Eye::OD ? "clock_od" : "clock_os"), eye);
    const auto frame = geom.frame();
    std::vector<int> values(12);
    std::vector<double> offsets(12), radii(12);
    for (int h = 0; h < 12; ++h) values[h] = val(rng), offsets[h] = off(rng), radii[h] = radius(rng);
    auto tokens = [&](double turn) {
      std::vector<OcrToken> out;
      for (int h = 1; h <= 12; ++h) {
        const auto p = frame.point_at(ClockGeometry::hour_angle(h) + offsets[h - 1] + turn, radii[h - 1]);
        out.push_back({h, std::to_string(values[h - 1]), 0.99, {p.x - 0.03, p.y - 0.025, p.x + 0.03, p.y + 0.025},
                       "c"});
      }
      return out;
    };
    const auto base = assign_clock_hours(tokens(0.0), geom, eye);
    const auto turned = assign_clock_hours(tokens(30.0), geom, eye);
    bool ok = true;
    for (int h = 0; h < 12; ++h) {
      const auto& a = base.fields[h];
      const auto& b = turned.fields[(h + 1) % 12];
      ok = ok && a.is_detected() && b.is_detected() && *a.value() == *b.value();
    }
    consistent += ok;
  }

  // Jitter: every wrong value must be undetected or sit in a flagged slot.
  NoiseProfile p;
  p.seed = 303;
  p.jitter = 0.3;
  const auto batch = gen_reports(ReportKind::Rnfl, 500, p);
  const auto gold = index_gold(batch.gold);
  std::size_t grid_fields = 0, exact = 0, missing = 0, flagged_wrong = 0, silent = 0;
  for (const auto& ts : batch.streams) {
    const auto rx = extract_report(ts, t);
    std::set<FieldId> in_conflict;
    for (const auto& c : rx.slot_conflicts)
      for (const auto& f : c.fields) in_conflict.insert(f);
    for (const auto& f : rx.fields) {
      const auto placement = f.field().spec().placement;
      if (placement != FieldPlacement::ClockHour && placement != FieldPlacement::Quadrant) continue;
      ++grid_fields;
      if (!f.is_detected()) {
        ++missing;
        continue;
      }
      if (value_matches(*f.value(), *gold.at(rx.report_id).at(f.field()))) ++exact;
      else if (in_conflict.count(f.field())) ++flagged_wrong;
      else ++silent;
    }
  }
  const bool pass = consistent == grids && silent == 0;
  return {pass, fmt("rotation %d/%d grids shift by one hour; jitter 0.3: %zu/%zu exact, %zu not detected, "
                    "%zu flagged wrong, %zu silent wrong",
                    consistent, grids, exact, grid_fields, missing, flagged_wrong, silent)};
}

std::string vary_case(std::string s, std::mt19937& rng) {
  for (auto& c : s) {
    const auto r = rng() % 3;
    if (r == 0) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    else if (r == 1) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

Verdict dicom_round_trip() {
  const auto dir = fs::temp_directory_path() / ("octex_acceptance_dicom_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937 rng(99);
  const std::vector<std::pair<std::string, DicomKind>> titles{
      {"ONH and RNFL OU Analysis:Optic Disc Cube 200x200", DicomKind::Rnfl},
      {"RNFL Thickness Analysis", DicomKind::Rnfl},
      {"Ganglion Cell OU Analysis:Macular Cube 512x128", DicomKind::GanglionCell},
      {"Ganglion Cell Analysis", DicomKind::GanglionCell},
      {"Macular Thickness OU", DicomKind::Other},
  };
  std::map<std::string, std::pair<DicomKind, Bytes>> truth;
  for (int i = 0; i < 100; ++i) {
    const auto& [base, kind] = titles[rng() % titles.size()];
    Bytes payload{'%', 'P', 'D', 'F', '-'};
    const auto n = 1 + rng() % 4000;
    for (std::size_t j = 0; j < n; ++j) payload.push_back(static_cast<std::uint8_t>(rng()));
    const std::string uid = "2.25.9" + std::to_string(i);
    const auto file = build_test_dicom(vary_case(base, rng), payload, {uid});
    std::ofstream(dir / ("r" + std::to_string(i) + ".dcm"), std::ios::binary)
        .write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    truth[uid] = {kind, payload};
  }
  const auto scan = scan_dicom_dir(dir, 4);
  int ok = 0;
  for (const auto& ref : scan.records) {
    const auto it = truth.find(ref.sop_instance_uid);
    if (it == truth.end()) continue;
    ok += ref.report_kind == it->second.first && extract_pdf(ref) == it->second.second;
  }
  fs::remove_all(dir);
  return {ok == 100 && scan.records.size() == 100 && scan.skipped.empty(),
          fmt("%d/100 payloads byte-identical with the right kind, %zu skipped", ok, scan.skipped.size())};
}

Verdict throughput() {
  NoiseProfile p;
  p.seed = 55;
  p.p_misread = 0.02;
  p.p_seq_shift = 0.1;
  p.p_hflip = 0.01;
  p.jitter = 0.1;
  p.conf_noise.sigma = 0.05;
  const auto batch = gen_reports(ReportKind::Rnfl, 100, p);
  std::vector<std::string> files;
  for (const auto& ts : batch.streams) files.push_back(serialize_token_stream(ts));
  std::string gold_csv = csv_header_gold();
  for (const auto& g : batch.gold) gold_csv += csv_row(g);

  const auto t0 = Clock::now();
  const auto& t = default_template(ReportKind::Rnfl);
  std::vector<ReportExtraction> preds;
  std::size_t flags = 0;
  for (const auto& bytes : files) {
    const auto ts = parse_token_stream(bytes);
    auto rx = extract_report(ts, t);
    const auto qc = run_qc(rx, {}, &ts, &t);
    flags += qc.size();
    preds.push_back(apply_rejects(std::move(rx), qc));
  }
  const auto rows = score(preds, parse_gold_csv(gold_csv));
  const auto table = render_table(rows, ReportKind::Rnfl);
  const double secs = seconds_since(t0);
  return {secs < 5.0 && !table.empty(), fmt("100 reports in %.3fs single-threaded (%zu QC flags)", secs, flags)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"noiseless round-trip", noiseless_round_trip},
      {"precision arithmetic oracle", precision_oracle},
      {"flip involutions", flip_involutions},
      {"injected-error detection", injected_error_detection},
      {"clock geometry", clock_geometry},
      {"DICOM round-trip", dicom_round_trip},
      {"throughput", throughput},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
