#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "octex/error.hpp"

namespace octex {

using Bytes = std::vector<std::uint8_t>;

enum class DicomKind : std::uint8_t { Rnfl, GanglionCell, Other };

inline std::string_view to_string(DicomKind k) {
  switch (k) {
    case DicomKind::Rnfl: return "rnfl";
    case DicomKind::GanglionCell: return "gcc";
    case DicomKind::Other: return "other";
  }
  return "?";
}

namespace dicom_detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace dicom_detail

// Title keyword filter, case-insensitive substring match.
inline DicomKind classify_title(std::string_view title) {
  const auto t = dicom_detail::lower(title);
  if (t.find("rnfl") != std::string::npos) return DicomKind::Rnfl;
  if (t.find("ganglion cell") != std::string::npos) return DicomKind::GanglionCell;
  return DicomKind::Other;
}

struct DicomReportRef {
  std::filesystem::path source_path;
  std::string sop_instance_uid;
  std::string document_title;
  DicomKind report_kind = DicomKind::Other;
  std::optional<std::string> study_date;  // YYYY-MM-DD
  std::size_t pdf_bytes_len = 0;
};

inline constexpr std::string_view kExplicitVrLittleEndian = "1.2.840.10008.1.2.1";
inline constexpr std::string_view kEncapsulatedPdfSopClass = "1.2.840.10008.5.1.4.1.1.104.1";

// ---------------------------------------------------------------------------
// Writer (test oracle)

struct TestDicomOptions {
  std::optional<std::string> sop_instance_uid;  // derived from the content when absent
  std::optional<std::string> study_date;        // DA, YYYYMMDD
  std::string transfer_syntax{kExplicitVrLittleEndian};
};

namespace dicom_detail {

inline void put16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xFF));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline bool long_length_vr(std::string_view vr) {
  static constexpr std::string_view kLong[] = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"};
  return std::find(std::begin(kLong), std::end(kLong), vr) != std::end(kLong);
}

inline void put_element(Bytes& b, std::uint16_t group, std::uint16_t elem, std::string_view vr, const Bytes& value) {
  put16(b, group);
  put16(b, elem);
  b.push_back(static_cast<std::uint8_t>(vr[0]));
  b.push_back(static_cast<std::uint8_t>(vr[1]));
  if (long_length_vr(vr)) {
    put16(b, 0);
    put32(b, static_cast<std::uint32_t>(value.size()));
  } else {
    put16(b, static_cast<std::uint16_t>(value.size()));
  }
  b.insert(b.end(), value.begin(), value.end());
}

// Text value padded to even length (UI with NUL, others with space).
inline Bytes text_value(std::string_view s, char pad) {
  Bytes v(s.begin(), s.end());
  if (v.size() % 2) v.push_back(static_cast<std::uint8_t>(pad));
  return v;
}

inline Bytes ul_value(std::uint32_t x) {
  Bytes v;
  put32(v, x);
  return v;
}

inline std::uint64_t fnv1a(std::string_view a, const Bytes& b) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint8_t c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (char c : a) mix(static_cast<std::uint8_t>(c));
  for (auto c : b) mix(c);
  return h;
}

}  // namespace dicom_detail

inline Bytes build_test_dicom(std::string_view title, const Bytes& payload, const TestDicomOptions& opt = {}) {
  using namespace dicom_detail;
  if (payload.empty()) throw ContractError("build_test_dicom needs a non-empty payload");
  const std::string uid = opt.sop_instance_uid.value_or("2.25." + std::to_string(fnv1a(title, payload)));

  Bytes meta;
  put_element(meta, 0x0002, 0x0001, "OB", Bytes{0x00, 0x01});
  put_element(meta, 0x0002, 0x0002, "UI", text_value(kEncapsulatedPdfSopClass, '\0'));
  put_element(meta, 0x0002, 0x0003, "UI", text_value(uid, '\0'));
  put_element(meta, 0x0002, 0x0010, "UI", text_value(opt.transfer_syntax, '\0'));

  Bytes out(128, 0);
  for (char c : std::string_view("DICM")) out.push_back(static_cast<std::uint8_t>(c));
  put_element(out, 0x0002, 0x0000, "UL", ul_value(static_cast<std::uint32_t>(meta.size())));
  out.insert(out.end(), meta.begin(), meta.end());

  Bytes doc = payload;
  if (doc.size() % 2) doc.push_back(0);
  put_element(out, 0x0008, 0x0016, "UI", text_value(kEncapsulatedPdfSopClass, '\0'));
  put_element(out, 0x0008, 0x0018, "UI", text_value(uid, '\0'));
  if (opt.study_date) put_element(out, 0x0008, 0x0020, "DA", text_value(*opt.study_date, ' '));
  put_element(out, 0x0042, 0x0010, "ST", text_value(title, ' '));
  put_element(out, 0x0042, 0x0011, "OB", doc);
  put_element(out, 0x0042, 0x0012, "LO", text_value("application/pdf", ' '));
  put_element(out, 0x0042, 0x0015, "UL", ul_value(static_cast<std::uint32_t>(payload.size())));
  return out;
}

// ---------------------------------------------------------------------------
// Reader

struct ParsedDicom {
  std::string sop_instance_uid;
  std::string document_title;
  std::optional<std::string> study_date;
  std::optional<std::pair<std::size_t, std::size_t>> document;  // offset, length
};

// Why a file could not be parsed; a skip reason, not an exception.
struct DicomSkip {
  std::string reason;
};

namespace dicom_detail {

inline std::uint16_t get16(const Bytes& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline std::uint32_t get32(const Bytes& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline std::string text_at(const Bytes& b, std::size_t at, std::size_t len) {
  std::string s(b.begin() + static_cast<std::ptrdiff_t>(at), b.begin() + static_cast<std::ptrdiff_t>(at + len));
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  std::size_t lead = 0;
  while (lead < s.size() && s[lead] == ' ') ++lead;
  return s.substr(lead);
}

inline std::string iso_date(const std::string& da) {
  if (da.size() == 8 && std::all_of(da.begin(), da.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return da.substr(0, 4) + "-" + da.substr(4, 2) + "-" + da.substr(6, 2);
  return da;
}

}  // namespace dicom_detail

inline bool has_dicm_marker(const Bytes& b) {
  return b.size() >= 132 && b[128] == 'D' && b[129] == 'I' && b[130] == 'C' && b[131] == 'M';
}

// Walks an explicit-VR little-endian file, reading only the attributes the
// harvester needs and skipping everything else by length.
inline std::variant<ParsedDicom, DicomSkip> parse_dicom(const Bytes& b) {
  using namespace dicom_detail;
  if (!has_dicm_marker(b)) return DicomSkip{"not a DICOM file (no DICM marker)"};
  ParsedDicom out;
  std::optional<std::uint32_t> declared_len;
  std::optional<std::string> transfer_syntax;
  std::size_t at = 132;
  while (at + 8 <= b.size()) {
    const std::uint16_t group = get16(b, at);
    const std::uint16_t elem = get16(b, at + 2);
    // The meta group is always explicit VR LE; the data set only if declared so.
    if (group != 0x0002) {
      if (!transfer_syntax) return DicomSkip{"missing transfer syntax"};
      if (*transfer_syntax != kExplicitVrLittleEndian)
        return DicomSkip{"unsupported transfer syntax " + *transfer_syntax};
    }
    const std::string vr{static_cast<char>(b[at + 4]), static_cast<char>(b[at + 5])};
    if (!std::isupper(static_cast<unsigned char>(vr[0])) || !std::isupper(static_cast<unsigned char>(vr[1])))
      return DicomSkip{"malformed element header"};
    std::size_t len = 0;
    std::size_t value_at = 0;
    if (long_length_vr(vr)) {
      if (at + 12 > b.size()) return DicomSkip{"truncated element header"};
      const std::uint32_t l = get32(b, at + 8);
      if (l == 0xFFFFFFFFu) {
        if (out.document) break;
        return DicomSkip{"undefined-length element before the encapsulated document"};
      }
      len = l;
      value_at = at + 12;
    } else {
      len = get16(b, at + 6);
      value_at = at + 8;
    }
    if (value_at + len > b.size()) return DicomSkip{"element value runs past end of file"};

    const std::uint32_t tag = (static_cast<std::uint32_t>(group) << 16) | elem;
    switch (tag) {
      case 0x00020010: transfer_syntax = text_at(b, value_at, len); break;
      case 0x00080018: out.sop_instance_uid = text_at(b, value_at, len); break;
      case 0x00080020: out.study_date = iso_date(text_at(b, value_at, len)); break;
      case 0x00420010: out.document_title = text_at(b, value_at, len); break;
      case 0x00420011: out.document = std::make_pair(value_at, len); break;
      case 0x00420015:
        if (len == 4) declared_len = get32(b, value_at);
        break;
      default: break;
    }
    at = value_at + len;
  }
  if (!out.document) return DicomSkip{"no encapsulated document"};
  // Odd-length documents carry one pad byte; the declared length trims it.
  if (declared_len && *declared_len <= out.document->second) out.document->second = *declared_len;
  if (out.document->second == 0) return DicomSkip{"empty encapsulated document"};
  return out;
}

inline Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DicomError("cannot read " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + p.string());
}

struct SkipEntry {
  std::filesystem::path path;
  std::string reason;
};

struct ScanResult {
  std::vector<DicomReportRef> records;  // sorted by source_path
  std::vector<SkipEntry> skipped;       // sorted by path
  std::size_t visited = 0;
};

inline std::variant<DicomReportRef, SkipEntry> scan_file(const std::filesystem::path& p) {
  Bytes b;
  try {
    b = read_file(p);
  } catch (const DicomError& e) {
    return SkipEntry{p, e.what()};
  }
  auto parsed = parse_dicom(b);
  if (auto* s = std::get_if<DicomSkip>(&parsed)) return SkipEntry{p, s->reason};
  const auto& d = std::get<ParsedDicom>(parsed);
  DicomReportRef ref;
  ref.source_path = p;
  ref.sop_instance_uid = d.sop_instance_uid;
  ref.document_title = d.document_title;
  ref.report_kind = classify_title(d.document_title);
  ref.study_date = d.study_date;
  ref.pdf_bytes_len = d.document->second;
  return ref;
}

// Every regular file under `root` is visited; files that are not DICOM or
// carry no encapsulated document land in the skip list.
inline ScanResult scan_dicom_dir(const std::filesystem::path& root, unsigned parallelism = 1) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DicomError("not a readable directory: " + root.string());
  std::vector<fs::path> files;
  fs::recursive_directory_iterator it(root, ec);
  if (ec) throw DicomError("cannot read directory " + root.string() + ": " + ec.message());
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw DicomError("cannot read directory " + root.string() + ": " + ec.message());
    if (it->is_regular_file(ec)) files.push_back(it->path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::variant<DicomReportRef, SkipEntry>> results(files.size());
  parallelism = std::max(1u, parallelism);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) results[i] = scan_file(files[i]);
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < parallelism; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  ScanResult out;
  out.visited = files.size();
  for (auto& r : results) {
    if (auto* ref = std::get_if<DicomReportRef>(&r))
      out.records.push_back(std::move(*ref));
    else
      out.skipped.push_back(std::move(std::get<SkipEntry>(r)));
  }
  return out;
}

// The exact bytes of the encapsulated document, which must be a PDF.
inline Bytes extract_pdf(const DicomReportRef& ref) {
  const Bytes b = read_file(ref.source_path);
  auto parsed = parse_dicom(b);
  if (auto* s = std::get_if<DicomSkip>(&parsed))
    throw NotEncapsulatedError(ref.source_path.string() + ": " + s->reason);
  const auto [off, len] = *std::get<ParsedDicom>(parsed).document;
  Bytes doc(b.begin() + static_cast<std::ptrdiff_t>(off), b.begin() + static_cast<std::ptrdiff_t>(off + len));
  if (doc.size() < 4 || doc[0] != '%' || doc[1] != 'P' || doc[2] != 'D' || doc[3] != 'F')
    throw WrongPayloadError(ref.source_path.string() + ": encapsulated document is not a PDF");
  return doc;
}

inline std::string sha256_hex(const Bytes& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  if (EVP_Digest(data.data(), data.size(), md, &n, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  std::ostringstream os;
  for (unsigned i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

// File-name-safe form of a UID.
inline std::string uid_file_stem(std::string_view uid) {
  std::string s(uid);
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  return s.empty() ? "unknown" : s;
}

struct HarvestSummary {
  std::size_t harvested = 0;
  std::size_t skipped = 0;
  std::size_t visited = 0;
};

// Writes <uid>.pdf for every RNFL and Ganglion Cell report, manifest.jsonl
// describing them, and skipped.jsonl for everything else.
inline HarvestSummary harvest(const std::filesystem::path& root, const std::filesystem::path& out_dir,
                              unsigned parallelism = 1) {
  namespace fs = std::filesystem;
  auto scan = scan_dicom_dir(root, parallelism);
  fs::create_directories(out_dir);
  std::ostringstream manifest, skipped;
  std::set<std::string> stems;
  HarvestSummary sum;
  sum.visited = scan.visited;
  auto skip = [&](const fs::path& p, const std::string& reason) {
    skipped << nlohmann::json{{"source_path", p.string()}, {"reason", reason}}.dump() << "\n";
    ++sum.skipped;
  };
  for (const auto& s : scan.skipped) skip(s.path, s.reason);
  for (const auto& ref : scan.records) {
    if (ref.report_kind == DicomKind::Other) {
      skip(ref.source_path, "document title is neither RNFL nor Ganglion Cell: " + ref.document_title);
      continue;
    }
    Bytes pdf;
    try {
      pdf = extract_pdf(ref);
    } catch (const DicomError& e) {
      skip(ref.source_path, e.what());
      continue;
    }
    const auto stem = uid_file_stem(ref.sop_instance_uid);
    if (!stems.insert(stem).second) {
      skip(ref.source_path, "duplicate SOP instance UID " + ref.sop_instance_uid);
      continue;
    }
    write_file(out_dir / (stem + ".pdf"), std::string_view(reinterpret_cast<const char*>(pdf.data()), pdf.size()));
    nlohmann::json line = {{"source_path", ref.source_path.string()},
                           {"sop_instance_uid", ref.sop_instance_uid},
                           {"document_title", ref.document_title},
                           {"report_kind", to_string(ref.report_kind)},
                           {"study_date", ref.study_date ? nlohmann::json(*ref.study_date) : nlohmann::json(nullptr)},
                           {"pdf_sha256", sha256_hex(pdf)}};
    manifest << line.dump() << "\n";
    ++sum.harvested;
  }
  write_file(out_dir / "manifest.jsonl", manifest.str());
  write_file(out_dir / "skipped.jsonl", skipped.str());
  return sum;
}

}  // namespace octex
