// quipforge command-line tool. Talks to the library only through quipforge.h.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "quipforge/quipforge.h"

using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kBadInput = 2, kIo = 3, kFormat = 4 };

int exit_code_for(qf_status s) {
  switch (s) {
    case QF_OK: return kOk;
    case QF_ERR_INVALID_ARGUMENT:
    case QF_ERR_CONFIG_MISMATCH: return kUsage;
    case QF_ERR_DECODE:
    case QF_ERR_INVALID_INPUT:
    case QF_ERR_EMPTY_INPUT:
    case QF_ERR_CONTRACT:
    case QF_ERR_NUMERIC: return kBadInput;
    case QF_ERR_IO: return kIo;
    case QF_ERR_FORMAT:
    case QF_ERR_VERSION:
    case QF_ERR_TRUNCATED:
    case QF_ERR_CHECKSUM:
    case QF_ERR_UNKNOWN_HASH: return kFormat;
    case QF_ERR_INTERNAL: return kIo;
  }
  return kIo;
}

struct Failure {
  int code;
  std::string message;
};

void check(qf_status s, const std::string& context) {
  if (s != QF_OK) {
    throw Failure{exit_code_for(s),
                  context + ": " + qf_status_name(s) + ": " + qf_last_error()};
  }
}

struct SketchDeleter {
  void operator()(qf_sketch* s) const { qf_sketch_free(s); }
};
using SketchPtr = std::unique_ptr<qf_sketch, SketchDeleter>;

struct StringDeleter {
  void operator()(char* s) const { qf_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

std::string take(char* s) {
  OwnedString owned(s);
  return owned ? std::string(owned.get()) : std::string();
}

SketchPtr load_sketch(const std::string& path) {
  qf_sketch* raw = nullptr;
  check(qf_sketch_load(path.c_str(), &raw), "loading " + path);
  return SketchPtr(raw);
}

json sketch_header(const qf_sketch* sketch) {
  qf_sketch_info info{};
  check(qf_sketch_info_get(sketch, &info), "sketch info");
  return {{"format_version", info.format_version},
          {"n", info.config.n},
          {"num_bits", info.config.num_bits},
          {"num_hashes", info.config.num_hashes},
          {"hash_scheme_id", info.config.hash_scheme_id},
          {"normalization_flags", info.config.normalization_flags},
          {"inserted_count", info.inserted_count},
          {"set_bit_fraction", info.set_bit_fraction},
          {"estimated_fpr", info.estimated_fpr}};
}

uint32_t parse_normalization(const std::string& value) {
  if (value == "none") return 0;
  if (value == "default") return QF_NORM_DEFAULT;
  uint32_t flags = 0;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "nfc") {
      flags |= QF_NORM_NFC;
    } else if (item == "lower" || item == "lowercase") {
      flags |= QF_NORM_LOWERCASE;
    } else if (item == "ws" || item == "collapse_ws") {
      flags |= QF_NORM_COLLAPSE_WS;
    } else {
      throw Failure{kUsage, "unknown normalization component '" + item + "'"};
    }
  }
  return flags;
}

uint32_t env_threads() {
  if (const char* v = std::getenv("QUIPFORGE_THREADS")) {
    try {
      return static_cast<uint32_t>(std::stoul(v));
    } catch (const std::exception&) {
      throw Failure{kUsage, std::string("QUIPFORGE_THREADS is not a number: ") + v};
    }
  }
  return 0;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
  if (!out) throw Failure{kIo, "cannot write " + path};
}

// Per-run bookkeeping shared by all subcommands.
struct Run {
  std::string subcommand;
  std::vector<std::string> argv;
  json config = json::object();
  json inputs = json::array();
  json outputs = json::array();
  json sketch = nullptr;
  std::string manifest_path;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void emit_manifest() const {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json m = {{"subcommand", subcommand},
              {"argv", argv},
              {"config", config},
              {"inputs", inputs},
              {"outputs", outputs},
              {"sketch", sketch},
              {"tool_version", qf_version()},
              {"wall_time_seconds", seconds}};
    if (manifest_path.empty()) {
      std::cerr << m.dump() << '\n';
    } else {
      write_text_file(manifest_path, m.dump(2) + "\n");
    }
  }
};

std::string default_manifest(const std::string& manifest, const std::string& out) {
  if (!manifest.empty()) return manifest;
  return out.empty() ? std::string() : out + ".manifest.json";
}

struct Options {
  // shared
  std::string sketch_path;
  std::string in_path;
  std::string out_path;
  std::string manifest_path;
  std::optional<uint32_t> threads;

  // build
  std::vector<std::string> corpus;
  uint32_t n = QF_DEFAULT_N;
  std::optional<double> fpr;
  std::optional<uint64_t> bits;
  std::optional<uint32_t> hashes;
  std::string normalization = "default";
  uint32_t stride = 1;
  uint32_t shards = 1;
  std::string format = "auto";

  // score
  bool spans = false;
  bool aggregate = false;

  // highlight
  std::optional<std::string> text;
  std::string render = "tty";

  // pairs
  double delta_quip = 0.1;
  double delta_length = 0.1;
  bool no_length_constraint = false;

  // dpo-metrics
  double beta = 0.05;

  // rouge
  double f_beta = 1.0;
};

uint32_t effective_threads(const Options& o) { return o.threads ? *o.threads : env_threads(); }

int cmd_build(const Options& o, Run& run) {
  qf_build_options opts;
  qf_build_options_default(&opts);
  opts.n = o.n;
  if (o.bits) opts.num_bits = *o.bits;
  opts.fpr = o.fpr.value_or(QF_DEFAULT_FPR);
  opts.num_hashes = o.hashes.value_or(0);
  opts.normalization_flags = parse_normalization(o.normalization);
  opts.stride = o.stride;
  opts.shards = o.shards;
  opts.threads = effective_threads(o);
  if (o.format == "text") {
    opts.format = QF_CORPUS_TEXT;
  } else if (o.format == "jsonl") {
    opts.format = QF_CORPUS_JSONL;
  } else {
    opts.format = QF_CORPUS_AUTO;
  }

  std::vector<const char*> paths;
  for (const auto& p : o.corpus) paths.push_back(p.c_str());
  qf_sketch* raw = nullptr;
  qf_corpus_stats stats{};
  check(qf_build_from_files(paths.data(), paths.size(), &opts, &raw, &stats), "build");
  SketchPtr sketch(raw);
  check(qf_sketch_save(sketch.get(), o.out_path.c_str()), "saving " + o.out_path);

  run.config = {{"n", opts.n},
                {"fpr", o.bits ? json(nullptr) : json(opts.fpr)},
                {"bits", o.bits ? json(*o.bits) : json(nullptr)},
                {"hashes", o.hashes ? json(*o.hashes) : json(nullptr)},
                {"normalization", o.normalization},
                {"stride", opts.stride},
                {"shards", opts.shards},
                {"threads", opts.threads},
                {"format", o.format}};
  run.inputs = o.corpus;
  run.outputs = {o.out_path};
  run.sketch = sketch_header(sketch.get());

  const json out = {{"documents_ingested", stats.documents_ingested},
                    {"ngrams_inserted", stats.ngrams_inserted},
                    {"set_bit_fraction", stats.set_bit_fraction},
                    {"estimated_fpr", stats.estimated_fpr},
                    {"sketch", run.sketch}};
  std::cout << out.dump() << '\n';
  return kOk;
}

int cmd_score(const Options& o, Run& run) {
  SketchPtr sketch = load_sketch(o.sketch_path);
  qf_score_options opts{o.spans ? 1 : 0, effective_threads(o)};
  qf_score_summary summary{};
  check(qf_score_jsonl(sketch.get(), o.in_path.c_str(), o.out_path.c_str(), &opts, &summary),
        "score");
  run.config = {{"spans", o.spans}, {"aggregate", o.aggregate}, {"threads", opts.threads}};
  run.inputs = {o.sketch_path, o.in_path};
  run.outputs = {o.out_path};
  run.sketch = sketch_header(sketch.get());
  if (o.aggregate) {
    const json agg = {{"records", summary.records},
                      {"degenerate", summary.degenerate},
                      {"macro", summary.macro},
                      {"micro", summary.micro}};
    std::cout << agg.dump() << '\n';
  }
  return kOk;
}

qf_render_format render_format(const std::string& name) {
  if (name == "tty") return QF_RENDER_TTY;
  if (name == "html") return QF_RENDER_HTML;
  return QF_RENDER_JSON;
}

int cmd_highlight(const Options& o, Run& run) {
  if (o.text.has_value() == !o.in_path.empty()) {
    throw Failure{kUsage, "highlight needs exactly one of --text or --in"};
  }
  SketchPtr sketch = load_sketch(o.sketch_path);
  const qf_render_format format = render_format(o.render);
  std::string rendered;
  auto render_one = [&](const std::string& text) {
    char* out = nullptr;
    check(qf_highlight(sketch.get(), text.data(), text.size(), format, &out), "highlight");
    return take(out);
  };
  if (o.text) {
    rendered = render_one(*o.text) + "\n";
  } else {
    std::ifstream in(o.in_path);
    if (!in) throw Failure{kIo, "cannot open " + o.in_path};
    std::string line;
    uint64_t records = 0;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json record;
      try {
        record = json::parse(line);
      } catch (const json::exception& e) {
        throw Failure{kBadInput, o.in_path + ": " + e.what()};
      }
      if (!record.is_object() || !record.contains("text") || !record["text"].is_string()) {
        throw Failure{kBadInput, o.in_path + ": record needs a string 'text' field"};
      }
      const std::string body = render_one(record["text"].get<std::string>());
      if (format == QF_RENDER_JSON) {
        json j = json::parse(body);
        if (record.contains("id")) j["id"] = record["id"];
        rendered += j.dump() + "\n";
      } else {
        rendered += body + "\n";
      }
      ++records;
    }
    if (records == 0) throw Failure{kBadInput, "no records in " + o.in_path};
    run.inputs.push_back(o.in_path);
  }
  if (o.out_path.empty()) {
    std::cout << rendered;
  } else {
    write_text_file(o.out_path, rendered);
    run.outputs = {o.out_path};
  }
  run.inputs.insert(run.inputs.begin(), o.sketch_path);
  run.config = {{"format", o.render}};
  run.sketch = sketch_header(sketch.get());
  return kOk;
}

int cmd_pairs(const Options& o, Run& run) {
  SketchPtr sketch = load_sketch(o.sketch_path);
  qf_synth_config config{o.delta_quip, o.delta_length, o.no_length_constraint ? 0 : 1};
  char* stats = nullptr;
  const uint32_t threads = effective_threads(o);
  check(qf_pairs_jsonl(sketch.get(), o.in_path.c_str(), o.out_path.c_str(), &config, threads,
                       &stats),
        "pairs");
  std::cout << take(stats) << '\n';
  run.config = {{"delta_quip", o.delta_quip},
                {"delta_length", o.delta_length},
                {"enforce_length", !o.no_length_constraint},
                {"threads", threads}};
  run.inputs = {o.sketch_path, o.in_path};
  run.outputs = {o.out_path};
  run.sketch = sketch_header(sketch.get());
  return kOk;
}

int cmd_rerank(const Options& o, Run& run) {
  SketchPtr sketch = load_sketch(o.sketch_path);
  char* stats = nullptr;
  const uint32_t threads = effective_threads(o);
  check(qf_rerank_jsonl(sketch.get(), o.in_path.c_str(), o.out_path.c_str(), threads, &stats),
        "rerank");
  std::cout << take(stats) << '\n';
  run.config = {{"threads", threads}};
  run.inputs = {o.sketch_path, o.in_path};
  run.outputs = {o.out_path};
  run.sketch = sketch_header(sketch.get());
  return kOk;
}

int cmd_dpo_metrics(const Options& o, Run& run) {
  if (!(o.beta > 0.0)) throw Failure{kUsage, "--beta must be > 0"};
  char* summary = nullptr;
  check(qf_dpo_metrics_jsonl(o.in_path.c_str(), o.beta, &summary), "dpo-metrics");
  const std::string body = take(summary);
  std::cout << body << '\n';
  if (!o.out_path.empty()) {
    write_text_file(o.out_path, body + "\n");
    run.outputs = {o.out_path};
  }
  run.config = {{"beta", o.beta}};
  run.inputs = {o.in_path};
  return kOk;
}

int cmd_rouge(const Options& o, Run& run) {
  if (!(o.f_beta > 0.0)) throw Failure{kUsage, "--f-beta must be > 0"};
  char* summary = nullptr;
  check(qf_rouge_jsonl(o.in_path.c_str(), o.out_path.c_str(), o.f_beta, &summary), "rouge");
  std::cout << take(summary) << '\n';
  run.config = {{"f_beta", o.f_beta}, {"tokenization", "lowercase+whitespace"}};
  run.inputs = {o.in_path};
  run.outputs = {o.out_path};
  return kOk;
}

int run_cli(std::vector<std::string> args);

int cmd_replay(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Failure{kIo, "cannot open " + manifest_path};
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Failure{kBadInput, manifest_path + ": " + e.what()};
  }
  if (!m.contains("argv") || !m["argv"].is_array()) {
    throw Failure{kBadInput, manifest_path + ": no argv snapshot"};
  }
  return run_cli(m["argv"].get<std::vector<std::string>>());
}

void add_threads(CLI::App* cmd, Options& o) {
  cmd->add_option("--threads", o.threads, "Worker threads (env QUIPFORGE_THREADS, default: all cores)");
}

void add_manifest(CLI::App* cmd, Options& o) {
  cmd->add_option("--manifest", o.manifest_path, "Run manifest path (default: <out>.manifest.json)");
}

int run_cli(std::vector<std::string> args) {
  Options o;
  std::string replay_path;
  CLI::App app{"quipforge: verbatim-quote scoring and quote-preference data tools", "quipforge"};
  app.set_version_flag("--version", std::string(qf_version()));
  app.require_subcommand(1);

  auto* build = app.add_subcommand("build", "Build an n-gram membership sketch from a corpus");
  build->add_option("corpus", o.corpus, "Corpus files (plain text lines or JSONL with 'text')")
      ->required();
  build->add_option("-o,--out", o.out_path, "Output sketch file")->required();
  build->add_option("--n", o.n, "N-gram width in characters")->check(CLI::Range(1u, 1u << 20));
  auto* fpr = build->add_option("--fpr", o.fpr, "Target false-positive rate (default 1e-3)")
                  ->check(CLI::Range(1e-300, 0.999999));
  auto* bits = build->add_option("--bits", o.bits, "Bit-array size (instead of --fpr)");
  fpr->excludes(bits);
  build->add_option("--hashes", o.hashes, "Number of hash probes")->check(CLI::Range(1u, 64u));
  build->add_option("--normalization", o.normalization,
                    "default | none | comma list of nfc,lower,ws");
  build->add_option("--stride", o.stride, "Indexing stride (1 keeps exact substring semantics)")
      ->check(CLI::PositiveNumber);
  build->add_option("--shards", o.shards, "Independent shards merged at the end")
      ->check(CLI::PositiveNumber);
  build->add_option("--format", o.format, "auto | text | jsonl")
      ->check(CLI::IsMember({"auto", "text", "jsonl"}));
  add_threads(build, o);
  add_manifest(build, o);

  auto* score = app.add_subcommand("score", "Score JSONL {id, text} records");
  score->add_option("--sketch", o.sketch_path)->required();
  score->add_option("--in", o.in_path)->required();
  score->add_option("--out", o.out_path)->required();
  score->add_flag("--spans", o.spans, "Include quoted spans");
  score->add_flag("--aggregate", o.aggregate, "Print macro and micro QUIP");
  add_threads(score, o);
  add_manifest(score, o);

  auto* highlight = app.add_subcommand("highlight", "Render quoted spans");
  highlight->add_option("--sketch", o.sketch_path)->required();
  highlight->add_option("--text", o.text, "Text to highlight");
  highlight->add_option("--in", o.in_path, "JSONL {id, text} records");
  highlight->add_option("--out", o.out_path, "Output file (default stdout)");
  highlight->add_option("--format", o.render, "tty | html | json")
      ->check(CLI::IsMember({"tty", "html", "json"}));
  add_manifest(highlight, o);

  auto* pairs = app.add_subcommand("pairs", "Synthesize quote-preference pairs");
  pairs->add_option("--sketch", o.sketch_path)->required();
  pairs->add_option("--in", o.in_path)->required();
  pairs->add_option("--out", o.out_path)->required();
  pairs->add_option("--delta-quip,--delta_quip", o.delta_quip, "Minimum QUIP gap (default 0.1)");
  pairs->add_option("--delta-length,--delta_length", o.delta_length,
                    "Maximum relative length difference (default 0.1)");
  pairs->add_flag("--no-length-constraint,--no_length_constraint", o.no_length_constraint,
                  "Drop the length constraint (ablation)");
  add_threads(pairs, o);
  add_manifest(pairs, o);

  auto* rerank = app.add_subcommand("rerank", "Best-of-N selection by QUIP");
  rerank->add_option("--sketch", o.sketch_path)->required();
  rerank->add_option("--in", o.in_path)->required();
  rerank->add_option("--out", o.out_path)->required();
  add_threads(rerank, o);
  add_manifest(rerank, o);

  auto* dpo = app.add_subcommand("dpo-metrics", "DPO loss and reward accuracy from log-probs");
  dpo->add_option("--in", o.in_path)->required();
  dpo->add_option("--beta", o.beta, "DPO beta (default 0.05)");
  dpo->add_option("--out", o.out_path, "Also write the summary here");
  add_manifest(dpo, o);

  auto* rouge = app.add_subcommand("rouge", "Rouge-L for JSONL {id, hypothesis, reference}");
  rouge->add_option("--in", o.in_path)->required();
  rouge->add_option("--out", o.out_path)->required();
  rouge->add_option("--f-beta", o.f_beta, "Recall weight (1 = plain F1)");
  add_manifest(rouge, o);

  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", replay_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (replay->parsed()) return cmd_replay(replay_path);

  Run run;
  run.argv = args;
  int code = kOk;
  if (build->parsed()) {
    run.subcommand = "build";
    code = cmd_build(o, run);
  } else if (score->parsed()) {
    run.subcommand = "score";
    code = cmd_score(o, run);
  } else if (highlight->parsed()) {
    run.subcommand = "highlight";
    code = cmd_highlight(o, run);
  } else if (pairs->parsed()) {
    run.subcommand = "pairs";
    code = cmd_pairs(o, run);
  } else if (rerank->parsed()) {
    run.subcommand = "rerank";
    code = cmd_rerank(o, run);
  } else if (dpo->parsed()) {
    run.subcommand = "dpo-metrics";
    code = cmd_dpo_metrics(o, run);
  } else if (rouge->parsed()) {
    run.subcommand = "rouge";
    code = cmd_rouge(o, run);
  }
  if (code == kOk) {
    run.manifest_path = default_manifest(o.manifest_path, o.out_path);
    run.emit_manifest();
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run_cli(std::move(args));
  } catch (const Failure& f) {
    std::cerr << "quipforge: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "quipforge: " << e.what() << '\n';
    return kIo;
  }
}
