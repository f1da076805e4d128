#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace octex;
using namespace octex::test;
namespace fs = std::filesystem;

namespace {

Bytes pdf_bytes(std::size_t n, std::uint32_t seed = 1) {
  Bytes b{'%', 'P', 'D', 'F'};
  std::mt19937 rng(seed);
  while (b.size() < n) b.push_back(static_cast<std::uint8_t>(rng()));
  b.resize(n);
  return b;
}

void put(const fs::path& p, const Bytes& b) {
  spit(p, std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Classify, TitleKeywords) {
  EXPECT_EQ(classify_title("ONH and RNFL OU Analysis:Optic Disc Cube 200x200"), DicomKind::Rnfl);
  EXPECT_EQ(classify_title("rnfl thickness"), DicomKind::Rnfl);
  EXPECT_EQ(classify_title("Ganglion Cell OU Analysis:Macular Cube 512x128"), DicomKind::GanglionCell);
  EXPECT_EQ(classify_title("GANGLION CELL"), DicomKind::GanglionCell);
  EXPECT_EQ(classify_title("Macula Thickness"), DicomKind::Other);
  EXPECT_EQ(classify_title(""), DicomKind::Other);
  EXPECT_EQ(to_string(DicomKind::GanglionCell), "gcc");
}

TEST(Dicom, RoundTripExactBytes) {
  const auto dir = scratch("dicom_rt");
  const auto payload = pdf_bytes(1024);
  put(dir / "a.dcm", build_test_dicom("RNFL OU Analysis", payload, {"1.2.3.4", "20230115"}));
  const auto scan = scan_dicom_dir(dir);
  ASSERT_EQ(scan.records.size(), 1u);
  const auto& ref = scan.records[0];
  EXPECT_EQ(ref.sop_instance_uid, "1.2.3.4");
  EXPECT_EQ(ref.document_title, "RNFL OU Analysis");
  EXPECT_EQ(ref.report_kind, DicomKind::Rnfl);
  EXPECT_EQ(ref.study_date, "2023-01-15");
  EXPECT_EQ(ref.pdf_bytes_len, 1024u);
  EXPECT_EQ(extract_pdf(ref), payload);
}

TEST(Dicom, OddLengthPayloadKeepsItsLength) {
  const auto dir = scratch("dicom_odd");
  const auto payload = pdf_bytes(1001, 4);
  put(dir / "odd.dcm", build_test_dicom("Ganglion Cell OU", payload));
  const auto scan = scan_dicom_dir(dir);
  ASSERT_EQ(scan.records.size(), 1u);
  EXPECT_EQ(extract_pdf(scan.records[0]), payload);
}

TEST(Dicom, NonPdfPayload) {
  const auto dir = scratch("dicom_zip");
  put(dir / "zip.dcm", build_test_dicom("RNFL", Bytes{'P', 'K', 0x03, 0x04, 1, 2, 3, 4}));
  const auto scan = scan_dicom_dir(dir);
  ASSERT_EQ(scan.records.size(), 1u);
  EXPECT_THROW(extract_pdf(scan.records[0]), WrongPayloadError);
}

TEST(Dicom, SkipsWhatItCannotRead) {
  const auto dir = scratch("dicom_skip");
  spit(dir / "notes.txt", "hello");
  put(dir / "big_endian.dcm", build_test_dicom("RNFL", pdf_bytes(64), {std::nullopt, std::nullopt, "1.2.840.10008.1.2.2"}));
  // Undefined-length sequence ahead of the document.
  auto undefined = build_test_dicom("RNFL", pdf_bytes(64));
  Bytes seq{0x08, 0x00, 0x15, 0x11, 'S', 'Q', 0, 0, 0xFF, 0xFF, 0xFF, 0xFF};
  const Bytes sop_class_tag{0x08, 0x00, 0x16, 0x00, 'U', 'I'};
  const auto at = std::search(undefined.begin(), undefined.end(), sop_class_tag.begin(), sop_class_tag.end()) -
                  undefined.begin();
  undefined.insert(undefined.begin() + static_cast<std::ptrdiff_t>(at), seq.begin(), seq.end());
  put(dir / "undefined.dcm", undefined);
  Bytes truncated = build_test_dicom("RNFL", pdf_bytes(256));
  truncated.resize(truncated.size() - 200);
  put(dir / "sub" / "truncated.dcm", truncated);
  put(dir / "ok.dcm", build_test_dicom("RNFL", pdf_bytes(64)));

  const auto scan = scan_dicom_dir(dir, 3);
  EXPECT_EQ(scan.visited, 5u);
  EXPECT_EQ(scan.records.size() + scan.skipped.size(), scan.visited);
  ASSERT_EQ(scan.records.size(), 1u);
  EXPECT_EQ(scan.records[0].source_path.filename(), "ok.dcm");
  std::map<std::string, std::string> reasons;
  for (const auto& s : scan.skipped) reasons[s.path.filename().string()] = s.reason;
  EXPECT_NE(reasons["notes.txt"].find("DICM"), std::string::npos);
  EXPECT_NE(reasons["big_endian.dcm"].find("transfer syntax"), std::string::npos);
  EXPECT_NE(reasons["undefined.dcm"].find("undefined-length"), std::string::npos);
  EXPECT_NE(reasons["truncated.dcm"].find("past end"), std::string::npos);
}

TEST(Dicom, BadRootIsAnError) {
  EXPECT_THROW(scan_dicom_dir("/nonexistent/octex"), DicomError);
  EXPECT_THROW(build_test_dicom("RNFL", {}), ContractError);
}

TEST(Dicom, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex(Bytes{'a', 'b', 'c'}), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(uid_file_stem("1.2/3 4"), "1.2_3_4");
}

TEST(Harvest, ManifestAndSkips) {
  const auto in = scratch("harvest_in");
  const auto out = scratch("harvest_out");
  const auto rnfl_pdf = pdf_bytes(300, 7);
  const auto gcc_pdf = pdf_bytes(301, 8);
  put(in / "1.dcm", build_test_dicom("ONH and RNFL OU Analysis", rnfl_pdf, {"1.1", "20240102"}));
  put(in / "2.dcm", build_test_dicom("Ganglion Cell OU Analysis", gcc_pdf, {"1.2"}));
  put(in / "3.dcm", build_test_dicom("Macula Thickness", pdf_bytes(50), {"1.3"}));
  put(in / "4.dcm", build_test_dicom("RNFL again", pdf_bytes(50), {"1.1"}));
  spit(in / "junk.bin", "xx");
  const auto sum = harvest(in, out);
  EXPECT_EQ(sum.visited, 5u);
  EXPECT_EQ(sum.harvested, 2u);
  EXPECT_EQ(sum.skipped, 3u);

  EXPECT_EQ(slurp(out / "1.1.pdf"), std::string(rnfl_pdf.begin(), rnfl_pdf.end()));
  EXPECT_EQ(slurp(out / "1.2.pdf"), std::string(gcc_pdf.begin(), gcc_pdf.end()));
  EXPECT_FALSE(fs::exists(out / "1.3.pdf"));
  const auto manifest = lines(slurp(out / "manifest.jsonl"));
  ASSERT_EQ(manifest.size(), 2u);
  const auto m0 = nlohmann::json::parse(manifest[0]);
  EXPECT_EQ(m0["sop_instance_uid"], "1.1");
  EXPECT_EQ(m0["report_kind"], "rnfl");
  EXPECT_EQ(m0["study_date"], "2024-01-02");
  EXPECT_EQ(m0["pdf_sha256"], sha256_hex(rnfl_pdf));
  EXPECT_TRUE(nlohmann::json::parse(manifest[1])["study_date"].is_null());
  EXPECT_EQ(lines(slurp(out / "skipped.jsonl")).size(), 3u);
}

TEST(Harvest, EmptyDirectory) {
  const auto in = scratch("harvest_empty_in");
  const auto out = scratch("harvest_empty_out");
  const auto sum = harvest(in, out);
  EXPECT_EQ(sum.visited, 0u);
  EXPECT_EQ(slurp(out / "manifest.jsonl"), "");
  EXPECT_EQ(slurp(out / "skipped.jsonl"), "");
}

TEST(Harvest, RandomRoundTripsWithCaseVariants) {
  const auto in = scratch("harvest_random");
  std::mt19937 rng(13);
  const std::vector<std::string> titles{"RNFL OU Analysis", "rnfl ou analysis", "Ganglion Cell OU", "GANGLION cell",
                                        "Macula Thickness"};
  std::map<std::string, std::pair<DicomKind, Bytes>> truth;
  for (int i = 0; i < 20; ++i) {
    auto title = titles[rng() % titles.size()];
    const auto payload = pdf_bytes(16 + rng() % 500, static_cast<std::uint32_t>(i));
    const std::string uid = "2.25." + std::to_string(i);
    put(in / ("f" + std::to_string(i) + ".dcm"), build_test_dicom(title, payload, {uid}));
    truth[uid] = {classify_title(title), payload};
  }
  for (unsigned workers : {1u, 4u}) {
    const auto scan = scan_dicom_dir(in, workers);
    ASSERT_EQ(scan.records.size(), 20u);
    for (const auto& ref : scan.records) {
      const auto& [kind, payload] = truth.at(ref.sop_instance_uid);
      EXPECT_EQ(ref.report_kind, kind);
      EXPECT_EQ(extract_pdf(ref), payload);
    }
  }
}
