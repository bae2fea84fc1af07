#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kar/corpus.hpp"
#include "kar/embedding.hpp"
#include "kar/embedding_cache.hpp"
#include "kar/errors.hpp"
#include "kar/eval.hpp"
#include "kar/expansion.hpp"
#include "kar/llm.hpp"
#include "kar/retriever.hpp"
#include "kar/sparse.hpp"

namespace kar::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Raw command-line values; unset optionals defer to manifest, environment
// and defaults, in that order.
struct Flags {
  std::optional<std::string> manifest, docs, edges, structure, queries, out, index, query;
  std::optional<std::string> strategy, retriever, backend_llm, backend_embed, param;
  std::optional<int> n, h;
  std::optional<std::size_t> k, workers;
  std::optional<std::uint64_t> seed;
  std::optional<int> llm_delay_ms, embed_delay_ms;
  std::vector<std::string> strategies;
  std::vector<int> values;
  bool abort_on_error = false;
};

struct Settings {
  fs::path docs, edges, structure, queries;
  fs::path out = ".";
  bool out_set = false;
  std::optional<fs::path> index;
  std::vector<Strategy> strategies;
  PipelineConfig config;
  std::size_t workers = 1;
  std::string llm_url, llm_model = "gpt-4o";
  std::string embed_url, embed_model = "text-embedding-ada-002";
  std::string api_key;
  std::chrono::milliseconds llm_delay{0}, embed_delay{0};
};

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::uint64_t parse_count(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(what + ": expected a non-negative integer, got \"" + text + "\"");
  }
}

void apply_env(Settings& s) {
  if (auto v = env("KAR_BACKEND_LLM")) s.config.llm_backend = *v;
  if (auto v = env("KAR_BACKEND_EMBED")) s.config.embed_backend = *v;
  if (auto v = env("KAR_RETRIEVER")) s.config.retriever = retriever_from_string(*v);
  if (auto v = env("KAR_WORKERS")) s.workers = parse_count(*v, "KAR_WORKERS");
  if (auto v = env("KAR_SEED")) s.config.seed = parse_count(*v, "KAR_SEED");
  if (auto v = env("KAR_LLM_URL")) s.llm_url = *v;
  if (auto v = env("KAR_LLM_MODEL")) s.llm_model = *v;
  if (auto v = env("KAR_EMBED_URL")) s.embed_url = *v;
  if (auto v = env("KAR_EMBED_MODEL")) s.embed_model = *v;
  if (auto v = env("KAR_API_KEY")) {
    s.api_key = *v;
  } else if (auto o = env("OPENAI_API_KEY")) {
    s.api_key = *o;
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string(), 0, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string(), 0, std::string("malformed JSON: ") + e.what());
  }
}

// Manifest paths are relative to the manifest's directory.
void apply_manifest(Settings& s, const fs::path& manifest) {
  const json m = read_json_file(manifest);
  if (!m.is_object()) throw InputError(manifest.string(), 0, "manifest must be a JSON object");
  const fs::path base = manifest.parent_path();
  auto rel = [&](const json& v) {
    const fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  try {
    for (const auto& [key, value] : m.items()) {
      if (key.find("key") != std::string::npos || key.find("secret") != std::string::npos ||
          key.find("token") != std::string::npos) {
        throw InputError(manifest.string(), 0, "\"" + key + "\": secrets are read from the environment only");
      }
      if (key == "name" || key == "description") continue;
      if (key == "docs") s.docs = rel(value);
      else if (key == "edges") s.edges = rel(value);
      else if (key == "structure") s.structure = rel(value);
      else if (key == "queries") s.queries = rel(value);
      else if (key == "out") s.out = rel(value), s.out_set = true;
      else if (key == "index") s.index = rel(value);
      else if (key == "strategies") {
        s.strategies.clear();
        for (const auto& name : value) s.strategies.push_back(strategy_from_string(name.get<std::string>()));
      } else if (key == "config") {
        s.config = PipelineConfig::from_json(value.is_string() ? read_json_file(rel(value)) : value, s.config);
      } else if (key == "retriever") s.config.retriever = retriever_from_string(value.get<std::string>());
      else if (key == "seed") s.config.seed = value.get<std::uint64_t>();
      else if (key == "workers") s.workers = value.get<std::size_t>();
      else if (key == "llm_url") s.llm_url = value.get<std::string>();
      else if (key == "llm_model") s.llm_model = value.get<std::string>();
      else if (key == "embed_url") s.embed_url = value.get<std::string>();
      else if (key == "embed_model") s.embed_model = value.get<std::string>();
      else throw InputError(manifest.string(), 0, "unknown manifest key \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw InputError(manifest.string(), 0, std::string("bad manifest value: ") + e.what());
  }
}

void apply_flags(Settings& s, const Flags& f) {
  if (f.docs) s.docs = *f.docs;
  if (f.edges) s.edges = *f.edges;
  if (f.structure) s.structure = *f.structure;
  if (f.queries) s.queries = *f.queries;
  if (f.out) s.out = *f.out, s.out_set = true;
  if (f.index) s.index = *f.index;
  if (f.retriever) s.config.retriever = retriever_from_string(*f.retriever);
  if (f.backend_llm) s.config.llm_backend = *f.backend_llm;
  if (f.backend_embed) s.config.embed_backend = *f.backend_embed;
  if (f.n) s.config.n = *f.n;
  if (f.h) s.config.h = *f.h;
  if (f.k) s.config.k = *f.k;
  if (f.seed) s.config.seed = *f.seed;
  if (f.workers) s.workers = *f.workers;
  if (f.llm_delay_ms) s.llm_delay = std::chrono::milliseconds(*f.llm_delay_ms);
  if (f.embed_delay_ms) s.embed_delay = std::chrono::milliseconds(*f.embed_delay_ms);
  if (!f.strategies.empty()) {
    s.strategies.clear();
    for (const auto& name : f.strategies) s.strategies.push_back(strategy_from_string(name));
  }
}

Settings resolve(const Flags& f) {
  Settings s;
  apply_env(s);
  if (f.manifest) apply_manifest(s, *f.manifest);
  apply_flags(s, f);
  s.config.validate();
  if (s.workers == 0) throw InvalidArgument("workers must be >= 1");
  return s;
}

void require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw InvalidArgument(std::string(flag) + " is required (pass it or set it in --manifest)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(path.string(), 0, "cannot write file");
  out << text;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

// Backends, indexes and the knowledge base for one command.
struct Workspace {
  std::optional<KnowledgeBase> kb;
  std::unique_ptr<Embedder> raw_embedder;
  std::unique_ptr<EmbeddingCache> cache;
  std::unique_ptr<Embedder> cached_embedder;
  const Embedder* embedder = nullptr;
  std::optional<VectorIndex> index;
  std::optional<Bm25Index> bm25;
  std::unique_ptr<LlmBackend> llm;
};

HttpEndpoint endpoint(const std::string& url, const Settings& s, const char* url_var) {
  if (url.empty()) throw InvalidArgument(std::string("remote backend URL is not configured (set ") + url_var + ")");
  return {url, s.api_key, std::chrono::seconds{120}};
}

std::unique_ptr<Embedder> make_embedder(const Settings& s) {
  const auto& name = s.config.embed_backend;
  if (name == "hash") return std::make_unique<HashEmbedder>(s.config.embed_dim, s.config.seed, s.embed_delay);
  if (name == "openai") {
    OpenAiEmbedderOptions o;
    o.endpoint = endpoint(s.embed_url, s, "KAR_EMBED_URL");
    o.model = s.embed_model;
    return std::make_unique<OpenAiEmbedder>(std::move(o));
  }
  throw NotFound("unknown embedding backend \"" + name + "\" (expected hash or openai)");
}

std::unique_ptr<LlmBackend> make_llm(const Settings& s) {
  const auto& name = s.config.llm_backend;
  if (name == "mock") return std::make_unique<MockLlm>(s.config.seed, std::size_t{1} << 20, s.llm_delay);
  if (name == "openai") {
    OpenAiChatOptions o;
    o.endpoint = endpoint(s.llm_url, s, "KAR_LLM_URL");
    o.model = s.llm_model;
    return std::make_unique<OpenAiChatLlm>(std::move(o));
  }
  throw NotFound("unknown LLM backend \"" + name + "\" (expected mock or openai)");
}

void load_kb(Workspace& w, const Settings& s) {
  require_path(s.docs, "--docs");
  require_path(s.edges, "--edges");
  require_path(s.structure, "--structure");
  w.kb.emplace(ingest(s.docs, s.edges, s.structure));
}

// `create_index`: the cache file may be created (kar index); otherwise a
// configured index must already exist.
void load_indexes(Workspace& w, const Settings& s, bool create_index) {
  w.raw_embedder = make_embedder(s);
  w.embedder = w.raw_embedder.get();
  std::optional<fs::path> cache_path = s.index;
  if (create_index && !cache_path) cache_path = s.out / "embeddings.cache";
  if (cache_path) {
    if (!create_index && !fs::exists(*cache_path)) {
      throw NotFound("missing index: " + cache_path->string() + " (run `kar index` first)");
    }
    w.cache = std::make_unique<EmbeddingCache>(*cache_path);
    w.cached_embedder = std::make_unique<CachedEmbedder>(*w.raw_embedder, *w.cache);
    w.embedder = w.cached_embedder.get();
  }
  w.index.emplace(VectorIndex::build(*w.kb, *w.embedder, s.workers));
  w.bm25.emplace(Bm25Index::build(*w.kb));
}

Workspace open_workspace(const Settings& s, bool need_llm) {
  Workspace w;
  load_kb(w, s);
  load_indexes(w, s, false);
  if (need_llm) w.llm = make_llm(s);
  return w;
}

EvalContext context(const Workspace& w) { return {*w.kb, *w.index, *w.embedder, *w.llm, &*w.bm25}; }

QuerySet load_query_set(const Settings& s, const KnowledgeBase& kb) {
  require_path(s.queries, "--queries");
  return load_queries(s.queries, kb);
}

Strategy single_strategy(const Flags& f, const Settings& s) {
  if (f.strategy) return strategy_from_string(*f.strategy);
  if (!s.strategies.empty()) return s.strategies.front();
  return Strategy::kKar;
}

// --- commands --------------------------------------------------------------

int cmd_ingest(const Settings& s, std::ostream& out) {
  Workspace w;
  load_kb(w, s);
  const std::string report = dump(w.kb->report().to_json());
  out << report;
  if (s.out_set) write_text(s.out / "ingest_report.json", report);
  return 0;
}

int cmd_index(const Settings& s, std::ostream& out) {
  Workspace w;
  load_kb(w, s);
  load_indexes(w, s, true);
  ordered_json j;
  j["documents"] = w.index->size();
  j["dim"] = w.index->dim();
  j["embed_backend"] = w.raw_embedder->name();
  j["embed_calls"] = w.raw_embedder->calls();
  j["cache"] = {{"path", w.cache->path().string()}, {"entries", w.cache->size()}};
  j["bm25"] = {{"vocabulary", w.bm25->vocabulary_size()}, {"avg_doc_length", w.bm25->avg_doc_length()}};
  out << dump(j);
  return 0;
}

int cmd_expand(const Flags& f, const Settings& s, std::ostream& out, std::ostream& err) {
  if (!f.query) throw InvalidArgument("--query is required");
  const Strategy strategy = single_strategy(f, s);
  Workspace w = open_workspace(s, true);
  const DenseRetriever dense(*w.index, *w.embedder);
  const Bm25Retriever sparse(*w.bm25);
  const Retriever& retriever =
      s.config.retriever == RetrieverKind::kBm25 ? static_cast<const Retriever&>(sparse) : dense;
  const Expander expander({*w.kb, *w.index, *w.embedder, retriever, *w.llm}, s.config);
  const Expansion x = expander.expand(*f.query, strategy);
  out << x.query.combined << "\n";
  if (s.out_set) {
    const fs::path trace = s.out / ("expand." + std::string(to_string(strategy)) + ".trace.json");
    write_text(trace, dump(x.trace.to_json(*w.kb)));
    err << "trace: " << trace.string() << "\n";
  }
  return 0;
}

void write_report_files(const Settings& s, const EvalReport& r) {
  const std::string stem = r.strategy + "." + std::string(to_string(r.config.retriever));
  write_text(s.out / (stem + ".report.json"), dump(r.to_json()));
  write_text(s.out / (stem + ".table.txt"), metrics_table({r}));
  write_text(s.out / (stem + ".latency.json"), dump(r.latency_json()));
  std::string traces;
  for (const auto& t : r.traces) traces += t.dump() + "\n";
  write_text(s.out / (stem + ".traces.jsonl"), traces);
}

EvalOptions eval_options(const Flags& f, const Settings& s) {
  return {s.workers, f.abort_on_error, true};
}

int cmd_eval(const Flags& f, const Settings& s, std::ostream& out) {
  std::vector<Strategy> strategies = s.strategies;
  if (f.strategy) strategies = {strategy_from_string(*f.strategy)};
  if (strategies.empty()) strategies = {Strategy::kKar};
  Workspace w = open_workspace(s, true);
  const QuerySet queries = load_query_set(s, *w.kb);
  std::vector<EvalReport> reports;
  for (Strategy st : strategies) {
    reports.push_back(run_eval(context(w), queries, st, s.config, eval_options(f, s)));
    write_report_files(s, reports.back());
  }
  out << metrics_table(reports);
  return 0;
}

int cmd_sweep(const Flags& f, const Settings& s, std::ostream& out) {
  if (!f.param) throw InvalidArgument("--param is required (k or n)");
  const SweepParam param = sweep_param_from_string(*f.param);
  std::vector<int> values = f.values;
  if (values.empty()) values = param == SweepParam::kK ? std::vector<int>{3, 5, 10, 20, 40} : std::vector<int>{1, 3, 5, 7};
  const Strategy strategy = single_strategy(f, s);
  Workspace w = open_workspace(s, true);
  const QuerySet queries = load_query_set(s, *w.kb);
  EvalOptions options = eval_options(f, s);
  options.keep_traces = false;
  const auto reports = sweep(context(w), queries, strategy, s.config, param, values, options);
  ordered_json j;
  j["strategy"] = to_string(strategy);
  j["param"] = *f.param;
  j["values"] = values;
  j["reports"] = ordered_json::array();
  for (const auto& r : reports) j["reports"].push_back(r.to_json());
  const std::string stem = "sweep." + std::string(to_string(strategy)) + "." + *f.param;
  const std::string table = sweep_table(reports, param);
  write_text(s.out / (stem + ".json"), dump(j));
  write_text(s.out / (stem + ".table.txt"), table);
  out << table;
  return 0;
}

int cmd_compare(const Flags& f, const Settings& s, std::ostream& out) {
  std::vector<Strategy> strategies = s.strategies;
  if (strategies.empty()) strategies = all_strategies();
  Workspace w = open_workspace(s, true);
  const QuerySet queries = load_query_set(s, *w.kb);
  EvalOptions options = eval_options(f, s);
  options.keep_traces = false;
  const auto reports = compare(context(w), queries, strategies, s.config, options);
  ordered_json j;
  j["retriever"] = to_string(s.config.retriever);
  j["reports"] = ordered_json::array();
  for (const auto& r : reports) j["reports"].push_back(r.to_json());
  const std::string stem = "compare." + std::string(to_string(s.config.retriever));
  const std::string table = metrics_table(reports);
  write_text(s.out / (stem + ".json"), dump(j));
  write_text(s.out / (stem + ".table.txt"), table);
  out << table;
  return 0;
}

void add_data_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--manifest", f.manifest, "Run manifest (JSON); paths inside are relative to it");
  cmd.add_option("--docs", f.docs, "Document file (JSONL)");
  cmd.add_option("--edges", f.edges, "Edge file (JSONL)");
  cmd.add_option("--structure", f.structure, "Document structure file (JSON)");
  cmd.add_option("--out", f.out, "Output directory");
}

void add_backend_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--backend-embed", f.backend_embed, "Embedding backend: hash | openai");
  cmd.add_option("--seed", f.seed, "Seed for the mock backends");
  cmd.add_option("--workers", f.workers, "Concurrent queries / embedding calls");
  cmd.add_option("--index", f.index, "Embedding cache written by `kar index`");
  cmd.add_option("--embed-delay-ms", f.embed_delay_ms, "Injected latency per mock embedding call")->group("");
}

void add_pipeline_flags(CLI::App& cmd, Flags& f) {
  add_backend_flags(cmd, f);
  cmd.add_option("--backend-llm", f.backend_llm, "LLM backend: mock | openai");
  cmd.add_option("--retriever", f.retriever, "Retriever: dense | bm25");
  cmd.add_option("--n", f.n, "Expansions sampled / PRF documents");
  cmd.add_option("--h", f.h, "Propagation hops");
  cmd.add_option("--k", f.k, "Neighbors kept per entity");
  cmd.add_option("--llm-delay-ms", f.llm_delay_ms, "Injected latency per mock LLM inference")->group("");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-aware query expansion and retrieval evaluation", "kar"};
  app.require_subcommand(1);
  // -h is left free so that --h (hops) stays unambiguous.
  app.set_help_flag("--help", "Print this help message and exit");
  Flags f;

  auto* ingest_cmd = app.add_subcommand("ingest", "Load a corpus and print the ingestion report");
  add_data_flags(*ingest_cmd, f);

  auto* index_cmd = app.add_subcommand("index", "Embed every document into the embedding cache");
  add_data_flags(*index_cmd, f);
  add_backend_flags(*index_cmd, f);

  auto* expand_cmd = app.add_subcommand("expand", "Expand one query and print the combined query");
  add_data_flags(*expand_cmd, f);
  add_pipeline_flags(*expand_cmd, f);
  expand_cmd->add_option("--query", f.query, "Query text")->required();
  expand_cmd->add_option("--strategy", f.strategy, "Expansion strategy");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate strategies over a query set");
  add_data_flags(*eval_cmd, f);
  add_pipeline_flags(*eval_cmd, f);
  eval_cmd->add_option("--queries", f.queries, "Query file (JSONL)");
  eval_cmd->add_option("--strategy", f.strategy, "Single strategy (default: manifest list, else kar)");
  eval_cmd->add_flag("--abort-on-error", f.abort_on_error, "Stop at the first failing query");

  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate one strategy across values of k or n");
  add_data_flags(*sweep_cmd, f);
  add_pipeline_flags(*sweep_cmd, f);
  sweep_cmd->add_option("--queries", f.queries, "Query file (JSONL)");
  sweep_cmd->add_option("--strategy", f.strategy, "Expansion strategy");
  sweep_cmd->add_option("--param", f.param, "Swept parameter: k | n")->required();
  sweep_cmd->add_option("--values", f.values, "Comma-separated values")->delimiter(',');
  sweep_cmd->add_flag("--abort-on-error", f.abort_on_error, "Stop at the first failing query");

  auto* compare_cmd = app.add_subcommand("compare", "Evaluate several strategies side by side");
  add_data_flags(*compare_cmd, f);
  add_pipeline_flags(*compare_cmd, f);
  compare_cmd->add_option("--queries", f.queries, "Query file (JSONL)");
  compare_cmd->add_option("--strategies", f.strategies, "Comma-separated strategies (default: all)")->delimiter(',');
  compare_cmd->add_flag("--abort-on-error", f.abort_on_error, "Stop at the first failing query");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "kar: error: " << e.what() << "\n";
    return 2;
  }

  try {
    const Settings s = resolve(f);
    if (ingest_cmd->parsed()) return cmd_ingest(s, out);
    if (index_cmd->parsed()) return cmd_index(s, out);
    if (expand_cmd->parsed()) return cmd_expand(f, s, out, err);
    if (eval_cmd->parsed()) return cmd_eval(f, s, out);
    if (sweep_cmd->parsed()) return cmd_sweep(f, s, out);
    if (compare_cmd->parsed()) return cmd_compare(f, s, out);
  } catch (const std::exception& e) {
    err << "kar: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace kar::cli
