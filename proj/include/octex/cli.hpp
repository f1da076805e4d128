#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "octex/dicom.hpp"
#include "octex/eval.hpp"
#include "octex/extract.hpp"
#include "octex/layout.hpp"
#include "octex/qc.hpp"
#include "octex/synth.hpp"
#include "octex/templates.hpp"
#include "octex/token_stream.hpp"

namespace octex::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitReject = 3;
inline constexpr int kExitSchema = 4;

struct PipelineConfig {
  std::map<ReportKind, fs::path> templates;
  std::optional<fs::path> range_policy;
  std::optional<fs::path> noise_profile;
  std::optional<fs::path> input_dir;
  std::optional<fs::path> output_dir;
  unsigned parallelism = 1;
  std::string log_level = "info";
};

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, std::string_view s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(p, s);
}

// Paths inside the config resolve against the config file's directory.
inline PipelineConfig load_config(const fs::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw SchemaError("config must be a JSON object");
  const fs::path base = path.parent_path();
  auto resolve = [&](const nlohmann::json& v, const std::string& key) {
    if (!v.is_string()) throw SchemaError("config '" + key + "' must be a path string");
    fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  auto must_exist = [](const fs::path& p, const std::string& key) {
    if (!fs::exists(p)) throw SchemaError("config '" + key + "' names a missing path: " + p.string());
  };

  PipelineConfig cfg;
  for (const auto& [key, v] : doc.items()) {
    if (key == "templates") {
      if (!v.is_object()) throw SchemaError("config 'templates' must map report kinds to paths");
      for (const auto& [kind, p] : v.items()) {
        cfg.templates[parse_report_kind(kind)] = resolve(p, "templates." + kind);
        must_exist(cfg.templates[parse_report_kind(kind)], "templates." + kind);
      }
    } else if (key == "range_policy") {
      cfg.range_policy = resolve(v, key);
      must_exist(*cfg.range_policy, key);
    } else if (key == "noise_profile") {
      cfg.noise_profile = resolve(v, key);
      must_exist(*cfg.noise_profile, key);
    } else if (key == "input_dir") {
      cfg.input_dir = resolve(v, key);
    } else if (key == "output_dir") {
      cfg.output_dir = resolve(v, key);
    } else if (key == "parallelism") {
      if (!v.is_number_integer() || v.get<long long>() < 1) throw SchemaError("config 'parallelism' must be >= 1");
      cfg.parallelism = v.get<unsigned>();
    } else if (key == "log_level") {
      if (!v.is_string()) throw SchemaError("config 'log_level' must be a string");
      cfg.log_level = v.get<std::string>();
    } else {
      throw SchemaError("unknown config key '" + key + "'");
    }
  }
  return cfg;
}

// Everything a verb needs, validated before any work starts.
struct Context {
  PipelineConfig cfg;
  std::map<ReportKind, LayoutTemplate> templates;
  RangePolicy policy;
  NoiseProfile profile;
  unsigned parallelism = 1;
  bool verbose = false;

  const LayoutTemplate& template_for(ReportKind k) const {
    auto it = templates.find(k);
    return it != templates.end() ? it->second : default_template(k);
  }

  void log(const std::string& msg) const {
    if (verbose) std::cerr << "octex: " << msg << "\n";
  }
};

inline LayoutTemplate load_template_file(const fs::path& p) {
  try {
    return load_template(read_text(p));
  } catch (const SchemaError& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

// Every *.json under the given files and directories, sorted.
inline std::vector<fs::path> collect_json(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p = in;
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw Error("no such input: " + p.string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Runs fn(i) for i in [0, n) on up to k threads. The first failure by index
// is rethrown so errors do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned k, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < std::max(1u, k); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::string with_path(const fs::path& p, const std::exception& e) { return p.string() + ": " + e.what(); }

// ---------------------------------------------------------------------------
// Verbs

inline int verb_harvest(const Context& ctx, const std::optional<std::string>& root_arg, const std::optional<fs::path>& out) {
  const auto root = root_arg ? fs::path(*root_arg) : ctx.cfg.input_dir;
  const auto dir = out ? out : ctx.cfg.output_dir;
  if (!root || !dir) throw CLI::ValidationError("harvest needs an input directory and --out");
  const auto sum = harvest(*root, *dir, ctx.parallelism);
  ctx.log("harvest visited " + std::to_string(sum.visited) + " files, harvested " + std::to_string(sum.harvested) +
          ", skipped " + std::to_string(sum.skipped));
  return kExitOk;
}

inline int verb_crop_plan(const Context& ctx, const std::optional<fs::path>& template_path, const std::string& kind,
                          const std::optional<fs::path>& out) {
  const LayoutTemplate t = template_path ? load_template_file(*template_path) : ctx.template_for(parse_report_kind(kind));
  const auto text = crop_plan_json(plan_crops(t)).dump(1) + "\n";
  if (out)
    write_text(*out, text);
  else
    std::cout << text;
  return kExitOk;
}

inline int verb_extract(const Context& ctx, const std::vector<std::string>& inputs, const std::optional<fs::path>& out) {
  const auto dir = out ? out : ctx.cfg.output_dir;
  if (!dir) throw CLI::ValidationError("extract needs --out");
  const auto files = collect_json(inputs);
  std::vector<ReportExtraction> results(files.size());
  parallel_for(files.size(), ctx.parallelism, [&](std::size_t i) {
    try {
      const auto ts = parse_token_stream(read_text(files[i]));
      results[i] = extract_report(ts, ctx.template_for(ts.report_kind));
    } catch (const SchemaError& e) {
      throw SchemaError(with_path(files[i], e));
    }
  });

  std::sort(results.begin(), results.end(),
            [](const ReportExtraction& a, const ReportExtraction& b) { return a.report_id < b.report_id; });
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].report_id == results[i - 1].report_id)
      throw SchemaError("duplicate report_id across inputs: " + results[i].report_id);

  fs::create_directories(*dir);
  std::string csv = csv_header_extraction();
  for (const auto& rx : results) {
    write_text(*dir / (rx.report_id + ".json"), to_json(rx).dump(1) + "\n");
    csv += csv_rows(rx);
  }
  write_text(*dir / "extraction.csv", csv);
  ctx.log("extracted " + std::to_string(results.size()) + " reports");
  return kExitOk;
}

inline std::vector<ReportExtraction> load_extractions(const std::vector<fs::path>& files) {
  std::vector<ReportExtraction> out;
  for (const auto& f : files) {
    try {
      out.push_back(parse_extraction(read_text(f)));
    } catch (const SchemaError& e) {
      throw SchemaError(with_path(f, e));
    }
  }
  return out;
}

inline int verb_validate(const Context& ctx, const std::vector<std::string>& inputs,
                         const std::optional<fs::path>& tokens_dir, const std::optional<fs::path>& out) {
  const auto files = collect_json(inputs);
  std::vector<nlohmann::json> docs(files.size());
  std::vector<std::vector<QcFlag>> flags(files.size());
  std::vector<ReportExtraction> finals(files.size());
  parallel_for(files.size(), ctx.parallelism, [&](std::size_t i) {
    ReportExtraction rx;
    try {
      rx = parse_extraction(read_text(files[i]));
    } catch (const SchemaError& e) {
      throw SchemaError(with_path(files[i], e));
    }
    std::optional<TokenStream> ts;
    if (tokens_dir) {
      const auto p = *tokens_dir / (rx.report_id + ".json");
      if (fs::exists(p)) ts = parse_token_stream(read_text(p));
    }
    QcOptions opt;
    opt.policy = ctx.policy;
    const auto& t = ctx.template_for(rx.kind);
    flags[i] = run_qc(rx, opt, ts ? &*ts : nullptr, ts ? &t : nullptr);
    finals[i] = apply_rejects(rx, flags[i]);
  });

  bool reject = false;
  std::string csv = csv_header_flags();
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (const auto& f : flags[i]) {
      reject = reject || f.severity == Severity::Reject;
      csv += csv_row(f);
    }
    if (out) {
      auto j = to_json(finals[i]);
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& f : flags[i]) arr.push_back(to_json(f));
      j["qc_flags"] = std::move(arr);
      write_text(*out / (finals[i].report_id + ".json"), j.dump(1) + "\n");
    }
  }
  if (out)
    write_text(*out / "flags.csv", csv);
  else
    std::cout << csv;
  ctx.log("validated " + std::to_string(files.size()) + " reports");
  return reject ? kExitReject : kExitOk;
}

inline int verb_eval(const Context& ctx, const std::vector<std::string>& inputs, const fs::path& gold_path,
                     const std::optional<fs::path>& out) {
  const auto preds = load_extractions(collect_json(inputs));
  std::vector<GoldRecord> gold;
  try {
    gold = parse_gold_csv(read_text(gold_path));
  } catch (const SchemaError& e) {
    throw SchemaError(with_path(gold_path, e));
  }
  const auto rows = score(preds, gold, ctx.parallelism);
  std::set<ReportKind> kinds;
  for (const auto& r : rows) kinds.insert(r.field.kind());
  std::string tables;
  for (auto k : kinds) {
    tables += k == ReportKind::Rnfl ? "RNFL\n" : "GCC\n";
    tables += render_table(rows, k) + "\n";
  }
  std::cout << tables;
  if (out) {
    write_text(*out / "tables.txt", tables);
    write_text(*out / "precision.json", precision_json(rows).dump(1) + "\n");
  }
  return kExitOk;
}

inline int verb_synth(const Context& ctx, const std::string& kind_s, std::size_t n, std::uint64_t seed,
                      const std::optional<fs::path>& out) {
  const auto dir = out ? out : ctx.cfg.output_dir;
  if (!dir) throw CLI::ValidationError("synth needs --out");
  const auto kind = parse_report_kind(kind_s);
  NoiseProfile profile = ctx.profile;
  profile.seed = seed;
  const auto batch = gen_reports(kind, n, profile, ctx.template_for(kind));
  for (const auto& ts : batch.streams) write_text(*dir / "streams" / (ts.report_id + ".json"), serialize_token_stream(ts));
  std::string gold = csv_header_gold();
  for (const auto& g : batch.gold) gold += csv_row(g);
  write_text(*dir / "gold.csv", gold);
  std::string ledger = csv_header_ledger();
  for (const auto& e : batch.ledger) ledger += csv_row(e);
  write_text(*dir / "ledger.csv", ledger);
  ctx.log("generated " + std::to_string(n) + " " + std::string(to_string(kind)) + " reports, " +
          std::to_string(batch.ledger.size()) + " injected errors");
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run_verb(int argc, const char* const* argv) {
  CLI::App app{"OCT report extraction toolkit", "octex"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::optional<fs::path> config_path;
  std::optional<fs::path> template_path, gold_path, profile_path, out, tokens_dir;
  std::optional<unsigned> parallel;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::string kind = "rnfl";
  std::size_t n = 100;
  std::vector<std::string> inputs;
  std::optional<std::string> root;

  app.add_option("--config", config_path, "pipeline config JSON (default: $OCTEX_CONFIG)");
  app.add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", verbose, "progress on stderr");
  app.add_option("--template", template_path, "layout template JSON, overrides the shipped one of its kind");
  app.add_option("--out", out, "output directory (crop-plan: output file)");

  auto* harvest_cmd = app.add_subcommand("harvest", "pull RNFL/GCC PDFs out of a DICOM tree");
  harvest_cmd->add_option("root", root, "directory of DICOM files");

  auto* plan_cmd = app.add_subcommand("crop-plan", "print the crop rectangles of a template");
  plan_cmd->add_option("--kind", kind, "rnfl or gcc")->check(CLI::IsMember({"rnfl", "gcc"}));

  auto* extract_cmd = app.add_subcommand("extract", "token streams to extraction JSON and CSV");
  extract_cmd->add_option("inputs", inputs, "token-stream files or directories")->required();

  auto* validate_cmd = app.add_subcommand("validate", "run QC detectors over extraction JSON");
  validate_cmd->add_option("inputs", inputs, "extraction files or directories")->required();
  validate_cmd->add_option("--tokens", tokens_dir, "token streams by report id, enables the OD/OS swap check");

  auto* eval_cmd = app.add_subcommand("eval", "score extraction JSON against gold labels");
  eval_cmd->add_option("inputs", inputs, "extraction files or directories")->required();
  eval_cmd->add_option("--gold", gold_path, "gold CSV")->required();

  auto* synth_cmd = app.add_subcommand("synth", "generate token streams with gold labels and injected noise");
  synth_cmd->add_option("--kind", kind, "rnfl or gcc")->check(CLI::IsMember({"rnfl", "gcc"}));
  synth_cmd->add_option("--n", n, "number of reports")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", seed, "random seed")->required();
  synth_cmd->add_option("--profile", profile_path, "noise profile JSON (default: noiseless)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    if (app.get_subcommands().empty()) std::cerr << app.help();
    return kExitUsage;
  }

  try {
    Context ctx;
    if (!config_path)
      if (const char* env = std::getenv("OCTEX_CONFIG"); env && *env) config_path = env;
    if (config_path) ctx.cfg = load_config(*config_path);
    for (const auto& [k, p] : ctx.cfg.templates) ctx.templates[k] = load_template_file(p);
    if (template_path) {
      auto t = load_template_file(*template_path);
      ctx.templates[t.report_kind] = std::move(t);
    }
    if (ctx.cfg.range_policy) ctx.policy = load_range_policy(read_text(*ctx.cfg.range_policy));
    if (profile_path)
      ctx.profile = load_noise_profile(read_text(*profile_path));
    else if (ctx.cfg.noise_profile)
      ctx.profile = load_noise_profile(read_text(*ctx.cfg.noise_profile));
    ctx.parallelism = parallel.value_or(ctx.cfg.parallelism);
    ctx.verbose = verbose || ctx.cfg.log_level == "debug";

    if (harvest_cmd->parsed()) return verb_harvest(ctx, root, out);
    if (plan_cmd->parsed()) return verb_crop_plan(ctx, template_path, kind, out);
    if (extract_cmd->parsed()) return verb_extract(ctx, inputs, out);
    if (validate_cmd->parsed()) return verb_validate(ctx, inputs, tokens_dir, out);
    if (eval_cmd->parsed()) return verb_eval(ctx, inputs, *gold_path, out);
    if (synth_cmd->parsed()) return verb_synth(ctx, kind, n, *seed, out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "octex: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OrphanPredictionError& e) {
    std::cerr << "octex: " << e.what() << "\n";
    return kExitSchema;
  } catch (const SchemaError& e) {
    std::cerr << "octex: " << e.what() << "\n";
    return kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "octex: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace octex::cli
