// vault: command-line front end for the curation engine.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vault/analysis.hpp"
#include "vault/corpus.hpp"
#include "vault/embedding_store.hpp"
#include "vault/error.hpp"
#include "vault/io.hpp"
#include "vault/lexical_index.hpp"
#include "vault/mixer.hpp"
#include "vault/pipeline.hpp"
#include "vault/retrieval.hpp"
#include "vault/text.hpp"

namespace fs = std::filesystem;
using namespace vault;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

struct EndpointFlags {
  std::string url;
  std::string model;
  std::string config;  // JSON file with an endpoint object
  std::string fixture;
  std::string fixture_mode = "off";
  int max_in_flight = 4;

  void add(CLI::App* cmd, const std::string& prefix) {
    cmd->add_option("--" + prefix + "-url", url, "endpoint base URL (http[s]:// or mock://)");
    cmd->add_option("--" + prefix + "-model", model, "model id sent with each request");
    cmd->add_option("--" + prefix + "-config", config, "JSON file holding the endpoint object");
    cmd->add_option("--" + prefix + "-fixture", fixture, "fixture JSONL for replay/record");
    cmd->add_option("--" + prefix + "-fixture-mode", fixture_mode, "off, replay or record");
    cmd->add_option("--" + prefix + "-in-flight", max_in_flight, "concurrent request limit");
  }

  bool given() const { return !url.empty() || !config.empty() || fixture_mode == "replay"; }

  ModelEndpoint resolve(const std::string& name) const {
    nlohmann::json doc = nlohmann::json::object();
    if (!config.empty()) {
      doc = nlohmann::json::parse(read_file(config));
    }
    if (!url.empty()) doc["base_url"] = url;
    if (!model.empty()) doc["model"] = model;
    if (!fixture.empty()) doc["fixture"] = fixture;
    if (fixture_mode != "off") doc["fixture_mode"] = fixture_mode;
    if (!doc.contains("max_in_flight")) doc["max_in_flight"] = max_in_flight;
    std::vector<std::string> problems;
    ModelEndpoint ep = parse_endpoint(doc, name, 0.0, problems);
    if (!problems.empty()) {
      throw ConfigError(std::move(problems));
    }
    return ep;
  }
};

void print_json(const nlohmann::json& doc) { std::cout << doc.dump(2) << "\n"; }

nlohmann::json label_counts(const LabeledCorpus& corpus) {
  nlohmann::json out = nlohmann::json::object();
  for (NliLabel label : kAllLabels) {
    out[std::string(label_name(label))] = corpus.partition_indices(label).size();
  }
  return out;
}

// -- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string output;
  std::string source;
};

void run_ingest(const IngestArgs& a) {
  const auto corpus = load_jsonl(a.input, a.source);
  if (!a.output.empty()) {
    write_jsonl(a.output, corpus.examples());
  }
  std::size_t with_hyp = 0;
  for (const auto& ex : corpus.examples()) {
    with_hyp += ex.hypothesis ? 1 : 0;
  }
  print_json({{"records", corpus.size()}, {"with_hypothesis", with_hyp}, {"labels", label_counts(corpus)}});
}

// -- index -----------------------------------------------------------------

struct IndexArgs {
  std::string corpus;
  std::string output;
  Bm25Params params;
};

void run_index(const IndexArgs& a) {
  const auto index = Bm25Index::build(load_jsonl(a.corpus), a.params);
  write_file_atomic(a.output, index.to_json().dump() + "\n");
  print_json({{"doc_count", index.doc_count()},
              {"avgdl", index.avgdl()},
              {"terms", index.postings().size()}});
}

// -- embed -----------------------------------------------------------------

struct EmbedArgs {
  std::string corpus;
  std::string output;
  std::size_t batch_size = 64;
  EndpointFlags endpoint;
};

void run_embed(const EmbedArgs& a) {
  const auto corpus = load_jsonl(a.corpus);
  EmbeddingStore store;
  if (fs::exists(a.output)) {
    store = EmbeddingStore::load(a.output);
  }
  auto client = EndpointClient::create(a.endpoint.resolve("embedder"));
  std::vector<std::pair<std::string, std::string>> id_texts;
  for (const auto& ex : corpus.examples()) {
    id_texts.emplace_back(ex.id, ex.premise);
  }
  const std::size_t fetched = embed_missing({client, a.batch_size}, store, id_texts);
  store.save(a.output);
  print_json({{"vectors", store.size()}, {"fetched", fetched}, {"dim", store.dim()},
              {"calls", client->stats().calls}});
}

// -- tune-alpha ------------------------------------------------------------

struct TuneArgs {
  std::string corpus;
  std::string embeddings;
  double grid_step = 0.01;
  std::string metric = "cosine";
  std::string output;
  std::string roc;
  std::size_t limit = 0;
  std::size_t workers = 1;
};

void run_tune(const TuneArgs& a) {
  try {
    alpha_grid(a.grid_step);
  } catch (const Error& e) {
    throw ConfigError({std::string("--grid-step: ") + e.what()});
  }
  auto corpus = load_jsonl(a.corpus);
  if (a.limit > 0 && a.limit < corpus.size()) {
    std::vector<ExamplePair> head(corpus.examples().begin(),
                                  corpus.examples().begin() + static_cast<std::ptrdiff_t>(a.limit));
    corpus = LabeledCorpus::from_examples(std::move(head));
  }
  const auto index = Bm25Index::build(corpus);
  const auto store = EmbeddingStore::load(a.embeddings);
  std::vector<RocPoint> curve;
  const auto result = tune_alpha(corpus, index, store, a.grid_step, parse_metric(a.metric),
                                 a.workers, a.roc.empty() ? nullptr : &curve);
  if (!a.output.empty()) {
    write_file_atomic(a.output, sweep_to_jsonl(result, a.grid_step));
  }
  if (!a.roc.empty()) {
    nlohmann::json fpr = nlohmann::json::array();
    nlohmann::json tpr = nlohmann::json::array();
    for (const auto& p : curve) {
      fpr.push_back(p.fpr);
      tpr.push_back(p.tpr);
    }
    write_file_atomic(a.roc, nlohmann::json{{"alpha", result.best_alpha}, {"auc", result.best_auc},
                                            {"fpr", fpr}, {"tpr", tpr}}
                                 .dump() + "\n");
  }
  print_json({{"best_alpha", result.best_alpha}, {"best_auc", result.best_auc},
              {"grid_points", result.grid.size()}, {"pairs", result.pairs},
              {"positives", result.positives}});
}

// -- retrieve --------------------------------------------------------------

struct RetrieveArgs {
  std::string corpus;
  std::string embeddings;
  std::string mode = "comb";
  double alpha = kDefaultAlpha;
  std::size_t k = kDefaultShotsPerLabel;
  std::string metric = "cosine";
  std::vector<std::string> query_ids;
  std::string output;
};

void run_retrieve(const RetrieveArgs& a) {
  const auto corpus = load_jsonl(a.corpus);
  const auto index = Bm25Index::build(corpus);
  FusionConfig cfg;
  cfg.mode = parse_mode(a.mode);
  cfg.alpha = a.alpha;
  cfg.k = a.k;
  cfg.metric = parse_metric(a.metric);
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) {
    throw ConfigError({"--alpha must lie in [0, 1]"});
  }
  EmbeddingStore store;
  if (cfg.mode != RetrievalMode::kLex) {
    if (a.embeddings.empty()) {
      throw ConfigError({"--embeddings is required for " + a.mode + " retrieval"});
    }
    store = EmbeddingStore::load(a.embeddings);
  }
  std::vector<const ExamplePair*> queries;
  if (a.query_ids.empty()) {
    for (const auto& ex : corpus.examples()) {
      queries.push_back(&ex);
    }
  } else {
    for (const auto& id : a.query_ids) {
      const auto* ex = corpus.find(id);
      if (ex == nullptr) {
        throw NotFoundError("no corpus record with id '" + id + "'");
      }
      queries.push_back(ex);
    }
  }
  std::string out;
  for (const auto* q : queries) {
    out += to_json(retrieve_context(*q, corpus, index, store, cfg)).dump() + "\n";
  }
  if (a.output.empty()) {
    std::cout << out;
  } else {
    write_file_atomic(a.output, out);
    print_json({{"queries", queries.size()}, {"output", a.output}});
  }
}

// -- run -------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::size_t rounds = 0;
  bool resume = false;
};

void run_run(const RunArgs& a) {
  const auto cfg = load_config(a.config);
  RunOptions opts;
  opts.resume = a.resume;
  if (a.rounds > 0) {
    opts.rounds = a.rounds;
  }
  const auto report = run_pipeline(cfg, opts);
  print_json({{"rounds", report["rounds"].size()},
              {"totals", report["totals"]},
              {"report", (cfg.output_dir / "report.json").string()}});
}

// -- mix -------------------------------------------------------------------

struct MixArgs {
  std::string originals;
  std::vector<std::string> adversarial;
  std::string ratio = "1:4";
  std::uint64_t seed = 0;
  std::string output;
};

void run_mix(const MixArgs& a) {
  const MixingRatio ratio = MixingRatio::parse(a.ratio);
  const auto originals = load_jsonl(a.originals);
  std::vector<ExamplePair> adversarial;
  std::vector<std::string> sources{fs::path(a.originals).filename().string()};
  for (const auto& path : a.adversarial) {
    const auto part = load_jsonl(path);
    adversarial.insert(adversarial.end(), part.examples().begin(), part.examples().end());
    sources.push_back(fs::path(path).filename().string());
  }
  const auto ds = mix(originals, adversarial, ratio, a.seed, sources);
  fs::path out = a.output.empty() ? fs::path("mixed-" + ratio.slug() + ".jsonl") : fs::path(a.output);
  emit_training_file(ds, out);
  // The ratio notation is easy to misread, so always state absolute counts.
  std::cout << "ratio " << ratio.to_string() << ": " << ds.manifest.n_orig << " original + "
            << ds.manifest.n_adv << " adversarial = " << ds.manifest.n_total() << " records"
            << (ds.manifest.rounded ? " (original count rounded down)" : "") << "\n"
            << "wrote " << out.string() << " and " << (out.parent_path() / "manifest.json").string()
            << "\n";
}

// -- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> datasets;  // name=path
  std::string output_dir = "analysis";
  std::size_t top_n = 10;
  std::string embeddings;
  std::string benchmark_corpus;
  std::size_t benchmark_k = 1;
  std::string sweep;
  std::size_t bert_sample = 50;
  EndpointFlags bert;
};

std::vector<std::string> sample_hypotheses(const LabeledCorpus& corpus, std::size_t n) {
  std::vector<std::string> out;
  for (const auto& ex : corpus.examples()) {
    if (ex.hypothesis && out.size() < n) {
      out.push_back(*ex.hypothesis);
    }
  }
  return out;
}

void run_analyze(const AnalyzeArgs& a) {
  if (a.datasets.size() < 2) {
    throw ConfigError({"analyze needs at least two --dataset name=path entries"});
  }
  std::vector<std::string> names;
  std::vector<LabeledCorpus> corpora;
  for (const auto& spec : a.datasets) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError({"--dataset expects name=path, got '" + spec + "'"});
    }
    names.push_back(spec.substr(0, eq));
    corpora.push_back(load_jsonl(spec.substr(eq + 1)));
  }
  const fs::path out = a.output_dir;
  fs::create_directories(out);

  const auto tfidf = tfidf_matrix(corpora, names);
  write_file_atomic(out / "tfidf.csv", to_csv(tfidf));

  nlohmann::json per_dataset = nlohmann::json::object();
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    nlohmann::json entry = {{"records", corpora[i].size()}};
    try {
      const auto stats = length_stats(corpora[i]);
      entry["length"] = {{"mean_chars", stats.mean_chars}, {"mean_words", stats.mean_words},
                         {"hypotheses", stats.count}};
    } catch (const Error&) {
      entry["length"] = nullptr;
    }
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [term, count] : top_terms(corpora[i], a.top_n)) {
      terms.push_back({term, count});
    }
    entry["top_terms"] = terms;
    per_dataset[names[i]] = entry;
  }

  nlohmann::json report = {{"tf", "raw term count"},
                           {"idf", "ln(N / DF) over datasets"},
                           {"stopwords", kStopwordListVersion},
                           {"tfidf", to_json(tfidf)},
                           {"datasets", per_dataset}};
  nlohmann::json plots = {{"tfidf_matrix", to_json(tfidf)}};

  if (a.bert.given()) {
    auto client = EndpointClient::create(a.bert.resolve("bertscore-embedder"));
    std::vector<TokenEmbeddings> bags;
    for (const auto& corpus : corpora) {
      std::vector<std::string> tokens;
      for (const auto& h : sample_hypotheses(corpus, a.bert_sample)) {
        for (auto& t : tokenize(h)) {
          tokens.push_back(std::move(t));
        }
      }
      if (tokens.empty()) {
        throw Error("bertscore: a dataset has no hypothesis tokens");
      }
      bags.push_back(fetch_embeddings({client, 64}, tokens));
    }
    const auto bert = bertscore_matrix(bags, names);
    write_file_atomic(out / "bertscore.csv", to_csv(bert));
    report["bertscore"] = to_json(bert);
    plots["bertscore_matrix"] = to_json(bert);
  }

  if (!a.embeddings.empty()) {
    const auto store = EmbeddingStore::load(a.embeddings);
    const auto& corpus = a.benchmark_corpus.empty() ? corpora.front() : load_jsonl(a.benchmark_corpus);
    nlohmann::json acc = nlohmann::json::object();
    nlohmann::json xs = nlohmann::json::array();
    nlohmann::json ys = nlohmann::json::array();
    for (const auto& [metric, value] : metric_benchmark(store, corpus, a.benchmark_k)) {
      acc[std::string(metric_name(metric))] = value;
      xs.push_back(metric_name(metric));
      ys.push_back(value);
    }
    report["metric_benchmark"] = {{"k", a.benchmark_k}, {"label_match_at_k", acc}};
    plots["metric_benchmark"] = {{"x", xs}, {"y", ys}};
  }

  if (!a.sweep.empty()) {
    nlohmann::json xs = nlohmann::json::array();
    nlohmann::json ys = nlohmann::json::array();
    for_each_jsonl(a.sweep, [&](std::size_t, const nlohmann::json& rec) {
      if (rec.contains("alpha")) {
        xs.push_back(rec["alpha"]);
        ys.push_back(rec["auc"]);
      }
    });
    plots["alpha_sweep"] = {{"x", xs}, {"y", ys}};
  }

  // Composition of each canonical ratio for the last dataset taken as D_adv.
  {
    const std::size_t n_adv = corpora.back().size();
    nlohmann::json xs = nlohmann::json::array();
    nlohmann::json orig = nlohmann::json::array();
    nlohmann::json adv = nlohmann::json::array();
    for (const char* r : {"0:1", "1:1", "1:2", "1:3", "1:4"}) {
      xs.push_back(r);
      orig.push_back(required_originals(MixingRatio::parse(r), n_adv, 0));
      adv.push_back(n_adv);
    }
    plots["ratio_sweep"] = {{"x", xs}, {"n_orig", orig}, {"n_adv", adv}, {"adversarial_dataset", names.back()}};
  }

  write_file_atomic(out / "analysis.json", report.dump(2) + "\n");
  write_file_atomic(out / "plots.json", plots.dump(2) + "\n");
  print_json({{"output_dir", out.string()}, {"tfidf_warnings", tfidf.warnings}});
}

// -- report ----------------------------------------------------------------

struct ReportArgs {
  std::string output_dir;
  bool json = false;
};

void run_report(const ReportArgs& a) {
  const fs::path path = fs::path(a.output_dir) / "report.json";
  if (!fs::exists(path)) {
    throw NotFoundError("no report.json in " + a.output_dir);
  }
  const auto report = nlohmann::json::parse(read_file(path));
  if (a.json) {
    print_json(report);
    return;
  }
  std::printf("%-6s %9s %9s %6s %8s %10s %9s %7s\n", "round", "premises", "generated", "kept",
              "dropped", "validated", "rejected", "mixed");
  for (const auto& r : report["rounds"]) {
    const auto& c = r["counters"];
    const std::size_t mixed = r["mix"].is_null() ? 0 : r["mix"]["n_total"].get<std::size_t>();
    std::printf("%-6zu %9zu %9zu %6zu %8zu %10zu %9zu %7zu\n", r["round"].get<std::size_t>(),
                c.value("premises", std::size_t{0}), c.value("generated", std::size_t{0}),
                c.value("kept", std::size_t{0}), c.value("dropped", std::size_t{0}),
                c.value("validated", std::size_t{0}), c.value("rejected", std::size_t{0}), mixed);
  }
  std::cout << report["target_model"].get<std::string>() << "\n";
  for (const auto& [name, c] : report["endpoint_calls"].items()) {
    std::cout << name << ": " << c["calls"] << " calls, " << c["attempts"] << " attempts, "
              << c["failures"] << " failures\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vault: adversarial retrieval-augmented NLI data curation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "validate and canonicalize a corpus JSONL");
  c_ingest->add_option("input", ingest.input)->required()->check(CLI::ExistingFile);
  c_ingest->add_option("-o,--output", ingest.output, "canonical JSONL to write");
  c_ingest->add_option("--source", ingest.source, "source tag for records without one");

  IndexArgs index;
  auto* c_index = app.add_subcommand("index", "build a BM25 index over corpus premises");
  c_index->add_option("corpus", index.corpus)->required()->check(CLI::ExistingFile);
  c_index->add_option("-o,--output", index.output)->required();
  c_index->add_option("--k1", index.params.k1)->check(CLI::PositiveNumber);
  c_index->add_option("--b", index.params.b)->check(CLI::Range(0.0, 1.0));

  EmbedArgs embed;
  auto* c_embed = app.add_subcommand("embed", "embed corpus premises (incremental)");
  c_embed->add_option("corpus", embed.corpus)->required()->check(CLI::ExistingFile);
  c_embed->add_option("-o,--output", embed.output, ".jsonl or .vemb store")->required();
  c_embed->add_option("--batch-size", embed.batch_size)->check(CLI::PositiveNumber);
  embed.endpoint.add(c_embed, "embedder");

  TuneArgs tune;
  auto* c_tune = app.add_subcommand("tune-alpha", "grid-search alpha by pooled ROC AUC");
  c_tune->add_option("corpus", tune.corpus)->required()->check(CLI::ExistingFile);
  c_tune->add_option("--embeddings", tune.embeddings)->required()->check(CLI::ExistingFile);
  c_tune->add_option("--grid-step", tune.grid_step)->check(CLI::PositiveNumber);
  c_tune->add_option("--metric", tune.metric);
  c_tune->add_option("-o,--output", tune.output, "sweep JSONL");
  c_tune->add_option("--roc", tune.roc, "ROC curve JSON at the best alpha");
  c_tune->add_option("--limit", tune.limit, "use only the first N records");
  c_tune->add_option("--workers", tune.workers)->check(CLI::PositiveNumber);

  RetrieveArgs retrieve;
  auto* c_retrieve = app.add_subcommand("retrieve", "label-balanced few-shot retrieval");
  c_retrieve->add_option("corpus", retrieve.corpus)->required()->check(CLI::ExistingFile);
  c_retrieve->add_option("--embeddings", retrieve.embeddings);
  c_retrieve->add_option("--mode", retrieve.mode)->check(CLI::IsMember({"sem", "lex", "comb"}));
  c_retrieve->add_option("--alpha", retrieve.alpha);
  c_retrieve->add_option("--k", retrieve.k)->check(CLI::PositiveNumber);
  c_retrieve->add_option("--metric", retrieve.metric);
  c_retrieve->add_option("--query", retrieve.query_ids, "query ids (default: every record)");
  c_retrieve->add_option("-o,--output", retrieve.output);

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "run the curation pipeline");
  c_run->add_option("--config", run.config)->required()->check(CLI::ExistingFile);
  c_run->add_option("--rounds", run.rounds, "override the configured round count");
  c_run->add_flag("--resume", run.resume, "continue from completed stage markers");

  MixArgs mixing;
  auto* c_mix = app.add_subcommand("mix", "assemble a training file at a mixing ratio");
  c_mix->add_option("--originals", mixing.originals)->required()->check(CLI::ExistingFile);
  c_mix->add_option("--adversarial", mixing.adversarial)->required()->check(CLI::ExistingFile);
  c_mix->add_option("--ratio", mixing.ratio, "orig:adv, e.g. 1:4, or all");
  c_mix->add_option("--seed", mixing.seed);
  c_mix->add_option("-o,--output", mixing.output);

  AnalyzeArgs analyze;
  auto* c_analyze = app.add_subcommand("analyze", "dataset comparison and metric benchmark");
  c_analyze->add_option("--dataset", analyze.datasets, "name=path, repeatable")->required();
  c_analyze->add_option("-o,--output-dir", analyze.output_dir);
  c_analyze->add_option("--top", analyze.top_n)->check(CLI::PositiveNumber);
  c_analyze->add_option("--embeddings", analyze.embeddings, "store for the metric benchmark");
  c_analyze->add_option("--benchmark-corpus", analyze.benchmark_corpus);
  c_analyze->add_option("--benchmark-k", analyze.benchmark_k)->check(CLI::PositiveNumber);
  c_analyze->add_option("--sweep", analyze.sweep, "tune-alpha sweep JSONL to include in plots");
  c_analyze->add_option("--bert-sample", analyze.bert_sample)->check(CLI::PositiveNumber);
  analyze.bert.add(c_analyze, "bert");

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "summarize a pipeline run");
  c_report->add_option("output_dir", report.output_dir)->required()->check(CLI::ExistingDirectory);
  c_report->add_flag("--json", report.json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("vault"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*c_ingest) run_ingest(ingest);
    if (*c_index) run_index(index);
    if (*c_embed) run_embed(embed);
    if (*c_tune) run_tune(tune);
    if (*c_retrieve) run_retrieve(retrieve);
    if (*c_run) run_run(run);
    if (*c_mix) run_mix(mixing);
    if (*c_analyze) run_analyze(analyze);
    if (*c_report) run_report(report);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
