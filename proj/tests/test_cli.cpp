#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "support.hpp"

using namespace octex;
using namespace octex::test;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI binary with `args` (already shell-quoted where needed).
Run octex_cli(const std::string& args, const fs::path& work) {
  const auto out = work / "stdout.txt";
  const auto err = work / "stderr.txt";
  const std::string cmd =
      "env -u OCTEX_CONFIG '" + std::string(OCTEX_CLI_PATH) + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string tree_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + slurp(f);
  return all;
}

}  // namespace

TEST(Cli, UnknownVerbIsUsage) {
  const auto w = scratch("cli_usage");
  EXPECT_EQ(octex_cli("frobnicate", w).code, 2);
  EXPECT_EQ(octex_cli("", w).code, 2);
  EXPECT_EQ(octex_cli("extract", w).code, 2);
}

TEST(Cli, SynthNeedsSeed) {
  const auto w = scratch("cli_seed");
  const auto r = octex_cli("synth --kind rnfl --n 2 --out " + q(w / "s"), w);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--seed"), std::string::npos) << r.err;
}

TEST(Cli, FullPipeline) {
  const auto w = scratch("cli_pipeline");
  ASSERT_EQ(octex_cli("synth --kind rnfl --n 5 --seed 4 --out " + q(w / "syn"), w).code, 0);
  ASSERT_EQ(octex_cli("synth --kind gcc --n 3 --seed 4 --out " + q(w / "syn_g"), w).code, 0);
  EXPECT_TRUE(fs::exists(w / "syn" / "streams" / "rnfl-00005.json"));
  ASSERT_EQ(octex_cli("extract " + q(w / "syn" / "streams") + " --out " + q(w / "ex"), w).code, 0);
  EXPECT_EQ(std::count(std::istreambuf_iterator<char>(*std::make_unique<std::ifstream>(w / "ex" / "extraction.csv")),
                       std::istreambuf_iterator<char>(), '\n'),
            1 + 5 * 48);
  const auto v = octex_cli("validate " + q(w / "ex") + " --tokens " + q(w / "syn" / "streams") + " --out " + q(w / "qc"), w);
  EXPECT_EQ(v.code, 0) << v.err;
  EXPECT_TRUE(fs::exists(w / "qc" / "flags.csv"));
  const auto e = octex_cli("eval " + q(w / "ex" / "rnfl-00001.json") + " " + q(w / "ex" / "rnfl-00002.json") + " " +
                               q(w / "ex" / "rnfl-00003.json") + " " + q(w / "ex" / "rnfl-00004.json") + " " +
                               q(w / "ex" / "rnfl-00005.json") + " --gold " + q(w / "syn" / "gold.csv") + " --out " +
                               q(w / "ev"),
                           w);
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.out.rfind("RNFL\n", 0), 0u);
  EXPECT_NE(e.out.find("Clock Hour 12"), std::string::npos);
  EXPECT_EQ(slurp(w / "ev" / "tables.txt"), e.out);
  const auto pj = nlohmann::json::parse(slurp(w / "ev" / "precision.json"));
  for (const auto& r : pj["rows"]) {
    EXPECT_EQ(r["detected"], 5);
    EXPECT_EQ(r["precision"], 1.0);
  }
}

TEST(Cli, OrphanPredictionIsSchemaError) {
  const auto w = scratch("cli_orphan");
  ASSERT_EQ(octex_cli("synth --kind gcc --n 2 --seed 1 --out " + q(w / "a"), w).code, 0);
  ASSERT_EQ(octex_cli("extract " + q(w / "a" / "streams") + " --out " + q(w / "ex"), w).code, 0);
  spit(w / "gold.csv", csv_header_gold() + "gcc-00001,gcc,gcc.min_gclipl,OD,80\n");
  const auto r = octex_cli("eval " + q(w / "ex") + " --gold " + q(w / "gold.csv"), w);
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("gcc-00002"), std::string::npos) << r.err;
}

TEST(Cli, BadStreamIsSchemaError) {
  const auto w = scratch("cli_badstream");
  spit(w / "in" / "bad.json", R"({"schema_version":"1","report_id":"x","report_kind":"rnfl","backend_name":"t",
      "tokens":[{"id":0,"text":"a","conf":1.2,"bbox":[0.1,0.1,0.2,0.2],"crop_id":"clock_od"}]})");
  const auto r = octex_cli("extract " + q(w / "in") + " --out " + q(w / "ex"), w);
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("bad.json"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("token 0"), std::string::npos) << r.err;
}

TEST(Cli, RejectExitCode) {
  const auto w = scratch("cli_reject");
  ReportExtraction rx;
  rx.report_id = "r1";
  rx.kind = ReportKind::Rnfl;
  for (const auto& f : all_fields(ReportKind::Rnfl))
    rx.fields.push_back(f.name == FieldName::RnflVertCdRatio && f.eye == Eye::OS
                            ? ExtractedField::detected(f, 1.4, 0.99, {})
                            : ExtractedField::not_detected(f, MissReason::NoToken));
  spit(w / "ex" / "r1.json", to_json(rx).dump());
  const auto r = octex_cli("validate " + q(w / "ex") + " --out " + q(w / "qc"), w);
  EXPECT_EQ(r.code, 3);
  const auto out = nlohmann::json::parse(slurp(w / "qc" / "r1.json"));
  bool downgraded = false;
  for (const auto& f : out["fields"])
    if (f["name"] == "rnfl.vert_cd_ratio" && f["eye"] == "OS") downgraded = f["reason"] == "qc_reject";
  EXPECT_TRUE(downgraded);
  EXPECT_EQ(out["qc_flags"][0]["kind"], "OutOfRange");
}

TEST(Cli, ValidateWithoutOutPrintsCsv) {
  const auto w = scratch("cli_validate_stdout");
  ASSERT_EQ(octex_cli("synth --kind rnfl --n 2 --seed 8 --out " + q(w / "s"), w).code, 0);
  ASSERT_EQ(octex_cli("extract " + q(w / "s" / "streams") + " --out " + q(w / "ex"), w).code, 0);
  const auto r = octex_cli("validate " + q(w / "ex" / "rnfl-00001.json"), w);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind(csv_header_flags(), 0), 0u);
}

TEST(Cli, EmptyHarvest) {
  const auto w = scratch("cli_harvest");
  fs::create_directories(w / "dicom");
  const auto r = octex_cli("harvest " + q(w / "dicom") + " --out " + q(w / "pdf"), w);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(w / "pdf" / "manifest.jsonl"), "");
  EXPECT_EQ(octex_cli("harvest " + q(w / "missing") + " --out " + q(w / "pdf"), w).code, 1);
}

TEST(Cli, ParallelOutputsAreIdentical) {
  const auto w = scratch("cli_parallel");
  NoiseProfile p;
  p.p_misread = 0.05;
  p.p_seq_shift = 0.2;
  p.jitter = 0.2;
  spit(w / "profile.json", to_json(p).dump());
  ASSERT_EQ(octex_cli("synth --kind rnfl --n 12 --seed 6 --profile " + q(w / "profile.json") + " --out " + q(w / "s"), w).code, 0);
  for (const char* n : {"1", "4"}) {
    const auto ex = w / (std::string("ex") + n);
    ASSERT_EQ(octex_cli(std::string("--parallel ") + n + " extract " + q(w / "s" / "streams") + " --out " + q(ex), w).code, 0);
    const auto code = octex_cli(std::string("--parallel ") + n + " validate " + q(ex) + " --tokens " +
                                    q(w / "s" / "streams") + " --out " + q(w / (std::string("qc") + n)),
                                w)
                          .code;
    EXPECT_TRUE(code == 0 || code == 3);
    ASSERT_EQ(octex_cli(std::string("--parallel ") + n + " eval " + q(ex) + " --gold " + q(w / "s" / "gold.csv") +
                            " --out " + q(w / (std::string("ev") + n)),
                        w)
                  .code,
              0);
  }
  EXPECT_EQ(tree_digest(w / "ex1"), tree_digest(w / "ex4"));
  EXPECT_EQ(tree_digest(w / "qc1"), tree_digest(w / "qc4"));
  EXPECT_EQ(tree_digest(w / "ev1"), tree_digest(w / "ev4"));
}

TEST(Cli, CropPlan) {
  const auto w = scratch("cli_plan");
  const auto r = octex_cli("crop-plan --kind rnfl", w);
  ASSERT_EQ(r.code, 0);
  const auto plan = parse_crop_plan(r.out);
  EXPECT_EQ(plan.size(), 9u);
  EXPECT_EQ(plan, plan_crops(rnfl()));
  ASSERT_EQ(octex_cli("crop-plan --kind gcc --out " + q(w / "plan.json"), w).code, 0);
  EXPECT_EQ(parse_crop_plan(slurp(w / "plan.json")).size(), 5u);
  EXPECT_EQ(octex_cli("crop-plan --kind vf", w).code, 2);
}

TEST(Cli, ConfigFileSuppliesDefaults) {
  const auto w = scratch("cli_config");
  spit(w / "cfg" / "policy.json", R"({"thickness_um":[0,10]})");
  spit(w / "cfg" / "octex.json", R"({"range_policy":"policy.json","output_dir":".","parallelism":2})");
  ASSERT_EQ(octex_cli("synth --kind rnfl --n 1 --seed 1 --out " + q(w / "s"), w).code, 0);
  ASSERT_EQ(octex_cli("extract " + q(w / "s" / "streams") + " --out " + q(w / "ex"), w).code, 0);
  // Every thickness now falls outside the configured range.
  EXPECT_EQ(octex_cli("--config " + q(w / "cfg" / "octex.json") + " validate " + q(w / "ex"), w).code, 3);
  spit(w / "cfg" / "bad.json", R"({"colour":"blue"})");
  EXPECT_EQ(octex_cli("--config " + q(w / "cfg" / "bad.json") + " validate " + q(w / "ex"), w).code, 4);
}
