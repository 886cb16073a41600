#include "vault/pipeline.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "vault/curation.hpp"
#include "vault/error.hpp"
#include "vault/io.hpp"
#include "vault/lexical_index.hpp"
#include "vault/parallel.hpp"

namespace vault {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

namespace {

class FieldReader {
 public:
  FieldReader(const nlohmann::json& doc, std::string where, std::vector<std::string>& problems)
      : doc_(doc), where_(std::move(where)), problems_(problems) {}

  const nlohmann::json* find(const char* key) const {
    auto it = doc_.find(key);
    return it == doc_.end() || it->is_null() ? nullptr : &*it;
  }

  template <typename T>
  bool read(const char* key, T& out, bool required = false) {
    const auto* value = find(key);
    if (value == nullptr) {
      if (required) {
        problems_.push_back(path(key) + " is required");
      }
      return false;
    }
    try {
      out = value->get<T>();
      return true;
    } catch (const nlohmann::json::exception&) {
      problems_.push_back(path(key) + " has the wrong type");
      return false;
    }
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }
  void problem(std::string text) { problems_.push_back(std::move(text)); }

 private:
  const nlohmann::json& doc_;
  std::string where_;
  std::vector<std::string>& problems_;
};

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) {
    return {};
  }
  fs::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

ModelEndpoint endpoint_field(const nlohmann::json& doc, std::string name,
                             double default_temperature, const fs::path& base,
                             std::vector<std::string>& problems) {
  ModelEndpoint ep = parse_endpoint(doc, std::move(name), default_temperature, problems);
  if (!ep.fixture.empty()) {
    ep.fixture = resolve(base, ep.fixture.string());
  }
  return ep;
}

FusionConfig parse_fusion(const nlohmann::json& doc, std::vector<std::string>& problems) {
  FusionConfig fusion;
  if (!doc.is_object()) {
    problems.push_back("fusion must be an object");
    return fusion;
  }
  FieldReader r(doc, "fusion", problems);
  std::string mode;
  if (r.read("mode", mode)) {
    try {
      fusion.mode = parse_mode(mode);
    } catch (const Error& e) {
      r.problem(std::string("fusion.mode: ") + e.what());
    }
  }
  if (r.read("alpha", fusion.alpha) && !(fusion.alpha >= 0.0 && fusion.alpha <= 1.0)) {
    r.problem("fusion.alpha must lie in [0, 1]");
  }
  std::int64_t k = static_cast<std::int64_t>(fusion.k);
  if (r.read("k", k)) {
    if (k < 1) {
      r.problem("fusion.k must be >= 1");
    } else {
      fusion.k = static_cast<std::size_t>(k);
    }
  }
  std::string metric;
  if (r.read("metric", metric)) {
    try {
      fusion.metric = parse_metric(metric);
    } catch (const Error& e) {
      r.problem(std::string("fusion.metric: ") + e.what());
    }
  }
  if (const auto* bm25 = r.find("bm25")) {
    FieldReader b(*bm25, "fusion.bm25", problems);
    if (b.read("k1", fusion.bm25.k1) && !(fusion.bm25.k1 > 0.0)) {
      b.problem("fusion.bm25.k1 must be > 0");
    }
    if (b.read("b", fusion.bm25.b) && !(fusion.bm25.b >= 0.0 && fusion.bm25.b <= 1.0)) {
      b.problem("fusion.bm25.b must lie in [0, 1]");
    }
  }
  return fusion;
}

const std::set<std::string> kKnownKeys = {
    "corpus", "originals", "embeddings", "fusion", "generator", "judges", "target", "embedder",
    "embedding_batch_size", "ratio", "rounds", "premises_per_round", "seed", "output_dir",
    "trainer_command"};

}  // namespace

PipelineConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir) {
  std::vector<std::string> problems;
  PipelineConfig cfg;
  if (!doc.is_object()) {
    throw ConfigError({"configuration must be a JSON object"});
  }
  for (const auto& [key, _] : doc.items()) {
    if (!kKnownKeys.contains(key)) {
      problems.push_back("unknown key '" + key + "'");
    }
  }
  FieldReader r(doc, "", problems);

  std::string path;
  if (r.read("corpus", path, true)) {
    cfg.corpus = resolve(base_dir, path);
    if (!fs::exists(cfg.corpus)) {
      problems.push_back("corpus file not found: " + cfg.corpus.string());
    }
  }
  cfg.originals = cfg.corpus;
  if (std::string originals; r.read("originals", originals)) {
    cfg.originals = resolve(base_dir, originals);
    if (!fs::exists(cfg.originals)) {
      problems.push_back("originals file not found: " + cfg.originals.string());
    }
  }
  if (std::string embeddings; r.read("embeddings", embeddings)) {
    cfg.embeddings = resolve(base_dir, embeddings);
  }
  if (const auto* fusion = r.find("fusion")) {
    cfg.fusion = parse_fusion(*fusion, problems);
  }

  if (const auto* gen = r.find("generator")) {
    cfg.generator = endpoint_field(*gen, "generator", 0.7, base_dir, problems);
  } else {
    problems.push_back("generator is required");
  }
  if (const auto* target = r.find("target")) {
    cfg.target = endpoint_field(*target, "target", 0.0, base_dir, problems);
  } else {
    problems.push_back("target is required");
  }
  if (const auto* judges = r.find("judges")) {
    if (!judges->is_array() || judges->empty()) {
      problems.push_back("judges must be a non-empty array");
    } else {
      std::set<std::string> names;
      for (std::size_t i = 0; i < judges->size(); ++i) {
        const auto& j = (*judges)[i];
        std::string name = "judge-" + std::to_string(i);
        if (j.is_object() && j.contains("name") && j["name"].is_string()) {
          name = j["name"].get<std::string>();
        }
        if (!names.insert(name).second) {
          problems.push_back("judge name '" + name + "' is used twice");
        }
        cfg.judges.push_back(endpoint_field(j, name, 0.0, base_dir, problems));
      }
    }
  } else {
    problems.push_back("judges is required");
  }
  if (const auto* embedder = r.find("embedder")) {
    cfg.embedder = endpoint_field(*embedder, "embedder", 0.0, base_dir, problems);
  } else if (cfg.fusion.mode != RetrievalMode::kLex && cfg.embeddings.empty()) {
    problems.push_back("embedder is required for " + std::string(mode_name(cfg.fusion.mode)) +
                       " retrieval unless embeddings is given");
  }
  std::int64_t batch = static_cast<std::int64_t>(cfg.embedding_batch_size);
  if (r.read("embedding_batch_size", batch)) {
    if (batch < 1) {
      problems.push_back("embedding_batch_size must be >= 1");
    } else {
      cfg.embedding_batch_size = static_cast<std::size_t>(batch);
    }
  }

  if (std::string ratio; r.read("ratio", ratio)) {
    try {
      cfg.ratio = MixingRatio::parse(ratio);
    } catch (const Error& e) {
      problems.push_back(std::string("ratio: ") + e.what());
    }
  }
  std::int64_t rounds = 1;
  if (r.read("rounds", rounds) && rounds < 1) {
    problems.push_back("rounds must be >= 1");
  }
  cfg.rounds = static_cast<std::size_t>(std::max<std::int64_t>(rounds, 1));
  if (const auto* ppr = r.find("premises_per_round")) {
    if (ppr->is_string() && ppr->get<std::string>() == "all") {
      cfg.premises_per_round.reset();
    } else if (ppr->is_number_integer() && ppr->get<std::int64_t>() >= 1) {
      cfg.premises_per_round = ppr->get<std::size_t>();
    } else {
      problems.push_back("premises_per_round must be \"all\" or a positive integer");
    }
  }
  if (const auto* seed = r.find("seed")) {
    if (seed->is_number_unsigned()) {
      cfg.seed = seed->get<std::uint64_t>();
    } else {
      problems.push_back("seed must be a non-negative integer");
    }
  }
  if (std::string out; r.read("output_dir", out, true)) {
    if (out.empty()) {
      problems.push_back("output_dir must not be empty");
    }
    cfg.output_dir = resolve(base_dir, out);
  }
  r.read("trainer_command", cfg.trainer_command);

  if (!problems.empty()) {
    throw ConfigError(std::move(problems));
  }
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return parse_config(doc, path.parent_path());
}

namespace {

nlohmann::json endpoint_identity(const ModelEndpoint& ep) {
  return {{"name", ep.name},
          {"base_url", ep.base_url},
          {"model", ep.model_id},
          {"temperature", ep.temperature}};
}

nlohmann::json fusion_json(const FusionConfig& f) {
  return {{"mode", mode_name(f.mode)},
          {"alpha", f.alpha},
          {"k", f.k},
          {"metric", metric_name(f.metric)},
          {"bm25", {{"k1", f.bm25.k1}, {"b", f.bm25.b}}}};
}

nlohmann::json premises_json(const std::optional<std::size_t>& n) {
  return n ? nlohmann::json(*n) : nlohmann::json("all");
}

}  // namespace

nlohmann::json config_fingerprint(const PipelineConfig& cfg) {
  nlohmann::json judges = nlohmann::json::array();
  for (const auto& j : cfg.judges) {
    judges.push_back(endpoint_identity(j));
  }
  return {{"corpus", sha256_file(cfg.corpus)},
          {"originals", sha256_file(cfg.originals)},
          {"fusion", fusion_json(cfg.fusion)},
          {"generator", endpoint_identity(cfg.generator)},
          {"judges", judges},
          {"target", endpoint_identity(cfg.target)},
          {"embedder", cfg.embedder ? endpoint_identity(*cfg.embedder) : nlohmann::json(nullptr)},
          {"ratio", cfg.ratio.to_string()},
          {"premises_per_round", premises_json(cfg.premises_per_round)},
          {"seed", cfg.seed},
          {"trainer_command", cfg.trainer_command}};
}

// ---------------------------------------------------------------------------
// Stage markers

nlohmann::json to_json(const StageRecord& r) {
  return {{"stage", r.stage},
          {"outputs", r.outputs},
          {"counters", r.counters},
          {"endpoint_calls", r.endpoint_calls},
          {"details", r.details}};
}

StageRecord stage_record_from_json(const nlohmann::json& doc) {
  try {
    StageRecord r;
    r.stage = doc.at("stage").get<std::string>();
    r.outputs = doc.at("outputs").get<std::map<std::string, std::string>>();
    r.counters = doc.at("counters");
    r.endpoint_calls = doc.at("endpoint_calls");
    r.details = doc.value("details", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed stage marker: ") + e.what());
  }
}

namespace {

std::optional<StageRecord> load_marker(const fs::path& dir, std::string_view stage) {
  const fs::path marker = dir / "checkpoints" / (std::string(stage) + ".json");
  if (!fs::exists(marker)) {
    return std::nullopt;
  }
  StageRecord record;
  try {
    record = stage_record_from_json(nlohmann::json::parse(read_file(marker)));
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable marker {}: {}", marker.string(), e.what());
    return std::nullopt;
  }
  for (const auto& [name, hash] : record.outputs) {
    const fs::path file = dir / name;
    if (!fs::exists(file) || sha256_file(file) != hash) {
      spdlog::info("marker {} is stale: {} does not match", marker.string(), name);
      return std::nullopt;
    }
  }
  return record;
}

void write_marker(const fs::path& dir, const StageRecord& record) {
  fs::create_directories(dir / "checkpoints");
  write_file_atomic(dir / "checkpoints" / (record.stage + ".json"), to_json(record).dump(2) + "\n");
}

std::string write_output(const fs::path& dir, const std::string& name, const std::string& contents) {
  write_file_atomic(dir / name, contents);
  return sha256_hex(contents);
}

using ClientMap = std::map<std::string, std::shared_ptr<EndpointClient>>;

std::map<std::string, CallStats> snapshot(const ClientMap& clients) {
  std::map<std::string, CallStats> out;
  for (const auto& [name, client] : clients) {
    out[name] = client->stats();
  }
  return out;
}

nlohmann::json stats_delta(const ClientMap& clients, const std::map<std::string, CallStats>& before) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, client] : clients) {
    const CallStats d = client->stats() - before.at(name);
    out[name] = {{"calls", d.calls}, {"attempts", d.attempts}, {"failures", d.failures}};
  }
  return out;
}

std::size_t counter(const nlohmann::json& counters, const char* key) {
  return counters.contains(key) ? counters[key].get<std::size_t>() : 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Helpers

std::uint64_t round_seed(std::uint64_t seed, std::size_t round) {
  SplitMix64 rng(seed);
  std::uint64_t value = 0;
  for (std::size_t i = 0; i <= round; ++i) {
    value = rng.next();
  }
  return value;
}

std::string shell_quote(std::string_view text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

std::string expand_trainer_command(const std::string& templ, const fs::path& mixed,
                                   std::size_t round, const fs::path& output_dir) {
  const std::map<std::string, std::string> values = {
      {"{mixed}", shell_quote(mixed.string())},
      {"{round}", std::to_string(round)},
      {"{output_dir}", shell_quote(output_dir.string())}};
  std::string out;
  bool saw_mixed = false;
  for (std::size_t i = 0; i < templ.size();) {
    bool replaced = false;
    for (const auto& [key, value] : values) {
      if (templ.compare(i, key.size(), key) == 0) {
        out += value;
        i += key.size();
        saw_mixed |= key == "{mixed}";
        replaced = true;
        break;
      }
    }
    if (!replaced) {
      out += templ[i++];
    }
  }
  if (!saw_mixed) {
    out += " " + values.at("{mixed}");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::Impl {
  PipelineConfig cfg;
  RunOptions opts;
  LabeledCorpus corpus;
  LabeledCorpus originals;
  std::optional<Bm25Index> index;
  EmbeddingStore store;
  StageRecord embed_record;
  bool has_embeddings = false;
  std::shared_ptr<EndpointClient> generator;
  std::vector<std::shared_ptr<EndpointClient>> judges;
  std::shared_ptr<EndpointClient> target;
  std::vector<std::size_t> permutation;

  fs::path round_dir(std::size_t t) const { return cfg.output_dir / ("round-" + std::to_string(t)); }

  void hook_item(std::size_t t, std::string_view stage, std::size_t item) const {
    if (opts.hooks.on_item) {
      opts.hooks.on_item(t, stage, item);
    }
  }

  void check_output_dir() {
    const fs::path run_file = cfg.output_dir / "run.json";
    const nlohmann::json fingerprint = config_fingerprint(cfg);
    if (fs::exists(cfg.output_dir) && !fs::is_empty(cfg.output_dir)) {
      if (!opts.resume) {
        throw ConfigError({"output_dir " + cfg.output_dir.string() +
                           " is not empty; pass --resume to continue a previous run"});
      }
      if (fs::exists(run_file)) {
        const auto previous = nlohmann::json::parse(read_file(run_file));
        if (previous.value("fingerprint", nlohmann::json()) != fingerprint) {
          throw ConfigError({"output_dir " + cfg.output_dir.string() +
                             " was produced by a different configuration; refusing to resume"});
        }
      }
    }
    fs::create_directories(cfg.output_dir);
    write_file_atomic(run_file, nlohmann::json{{"fingerprint", fingerprint}}.dump(2) + "\n");
  }

  void prepare_embeddings() {
    if (cfg.fusion.mode == RetrievalMode::kLex) {
      return;
    }
    has_embeddings = true;
    const fs::path cache_name = "embeddings.jsonl";
    if (auto marker = load_marker(cfg.output_dir, "embed")) {
      store = EmbeddingStore::load_jsonl(cfg.output_dir / cache_name);
      embed_record = *marker;
    } else {
      if (!cfg.embeddings.empty() && fs::exists(cfg.embeddings)) {
        store = EmbeddingStore::load(cfg.embeddings);
      }
      ClientMap clients;
      std::size_t fetched = 0;
      std::map<std::string, CallStats> before;
      if (cfg.embedder) {
        auto client = EndpointClient::create(*cfg.embedder);
        clients[cfg.embedder->name] = client;
        before = snapshot(clients);
        std::vector<std::pair<std::string, std::string>> id_texts;
        for (const auto& ex : corpus.examples()) {
          id_texts.emplace_back(ex.id, ex.premise);
        }
        fetched = embed_missing({client, cfg.embedding_batch_size}, store, id_texts);
      }
      StageRecord record;
      record.stage = "embed";
      record.outputs[cache_name.string()] =
          write_output(cfg.output_dir, cache_name.string(), store.to_jsonl());
      record.counters = {{"vectors", store.size()}, {"fetched", fetched}};
      record.endpoint_calls = clients.empty() ? nlohmann::json::object() : stats_delta(clients, before);
      record.details = {{"model", store.model_id()}, {"dim", store.dim()}};
      write_marker(cfg.output_dir, record);
      embed_record = record;
    }
    for (const auto& ex : corpus.examples()) {
      if (!store.contains(ex.id)) {
        throw Error("no embedding for corpus id '" + ex.id + "' and no embedder configured");
      }
    }
  }

  std::vector<std::size_t> batch(std::size_t t) const {
    const std::size_t n = corpus.size();
    if (!cfg.premises_per_round) {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    }
    const std::size_t size = *cfg.premises_per_round;
    std::vector<std::size_t> out;
    out.reserve(size);
    const std::size_t start = (t * size) % n;
    for (std::size_t i = 0; i < size; ++i) {
      out.push_back(permutation[(start + i) % n]);
    }
    return out;
  }

  void resolve_target(std::size_t t) {
    ModelEndpoint ep = cfg.target;
    if (t > 0) {
      const fs::path file = round_dir(t - 1) / "target_endpoint.json";
      if (fs::exists(file)) {
        nlohmann::json merged = to_json(cfg.target);
        merged.update(nlohmann::json::parse(read_file(file)));
        std::vector<std::string> problems;
        ep = parse_endpoint(merged, "target", cfg.target.temperature, problems);
        if (!problems.empty()) {
          throw ConfigError(std::move(problems));
        }
        spdlog::info("round {}: target endpoint re-resolved to {}", t, ep.base_url);
      }
    }
    target = EndpointClient::create(ep);
  }

  StageRecord stage_generate(std::size_t t) {
    const fs::path dir = round_dir(t);
    const auto premises = batch(t);
    ClientMap clients{{generator->config().name, generator}};
    const auto before = snapshot(clients);
    std::vector<std::optional<AdversarialCandidate>> made(premises.size());
    std::vector<std::string> failures(premises.size());
    parallel_for(premises.size(), generator->config().max_in_flight, [&](std::size_t p) {
      hook_item(t, "generate", p);
      const ExamplePair& query = corpus.at(premises[p]);
      const NliLabel target_label = kAllLabels[(p + t) % kAllLabels.size()];
      const auto context = retrieve_context(query, corpus, *index, store, cfg.fusion);
      const auto prompt = build_generation_prompt(query, context, target_label);
      AdversarialCandidate c;
      c.id = "r" + std::to_string(t) + "-" + query.id;
      c.round = t;
      c.premise_id = query.id;
      c.premise = query.premise;
      c.target_label = target_label;
      c.context_ids = context.shot_ids();
      try {
        c.hypothesis = generate_hypothesis(*generator, prompt);
      } catch (const Error& e) {
        failures[p] = e.what();
        spdlog::warn("{}: generation failed: {}", c.id, e.what());
        return;
      }
      made[p] = std::move(c);
    });
    std::vector<AdversarialCandidate> candidates;
    for (auto& c : made) {
      if (c) {
        candidates.push_back(std::move(*c));
      }
    }
    if (candidates.empty() && !premises.empty()) {
      throw Error("round " + std::to_string(t) + ": every generation failed (first error: " +
                  failures.front() + ")");
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    StageRecord record;
    record.stage = "generate";
    record.outputs["generated.jsonl"] = write_output(dir, "generated.jsonl", candidates_to_jsonl(candidates));
    record.counters = {{"premises", premises.size()},
                       {"generated", candidates.size()},
                       {"generation_failed", premises.size() - candidates.size()}};
    record.endpoint_calls = stats_delta(clients, before);
    return record;
  }

  StageRecord stage_filter(std::size_t t) {
    const fs::path dir = round_dir(t);
    auto candidates = load_candidates(dir / "generated.jsonl");
    ClientMap clients{{"target", target}};
    const auto before = snapshot(clients);
    parallel_for(candidates.size(), target->config().max_in_flight, [&](std::size_t i) {
      hook_item(t, "filter", i);
      candidates[i] = adversarial_filter(*target, std::move(candidates[i]));
    });
    std::size_t kept = 0;
    for (const auto& c : candidates) {
      kept += c.stage == Stage::kKeptByFilter ? 1 : 0;
    }
    StageRecord record;
    record.stage = "filter";
    record.outputs["filtered.jsonl"] = write_output(dir, "filtered.jsonl", candidates_to_jsonl(candidates));
    record.counters = {{"kept", kept}, {"dropped", candidates.size() - kept}};
    record.endpoint_calls = stats_delta(clients, before);
    record.details = {{"target_endpoint", target->config().base_url},
                      {"target_model", target->config().model_id}};
    return record;
  }

  StageRecord stage_validate(std::size_t t) {
    const fs::path dir = round_dir(t);
    auto candidates = load_candidates(dir / "filtered.jsonl");
    ClientMap clients;
    std::size_t workers = 1;
    for (const auto& j : judges) {
      clients[j->config().name] = j;
      workers = std::max(workers, j->config().max_in_flight);
    }
    const auto before = snapshot(clients);
    const EnsembleConfig ensemble{judges};
    parallel_for(candidates.size(), workers, [&](std::size_t i) {
      if (candidates[i].stage != Stage::kKeptByFilter) {
        return;
      }
      hook_item(t, "validate", i);
      candidates[i] = validate_unanimous(ensemble, std::move(candidates[i]));
    });
    std::vector<ExamplePair> validated;
    std::size_t rejected = 0;
    nlohmann::json agreement = nlohmann::json::object();
    for (const auto& j : judges) {
      agreement[j->config().name] = 0;
    }
    for (const auto& c : candidates) {
      if (c.stage == Stage::kValidated) {
        validated.push_back(to_example(c));
      } else if (c.stage == Stage::kRejected) {
        ++rejected;
      }
      for (const auto& v : c.verdicts) {
        if (v.predicted == c.target_label && agreement.contains(v.judge_id)) {
          agreement[v.judge_id] = agreement[v.judge_id].get<std::size_t>() + 1;
        }
      }
    }
    StageRecord record;
    record.stage = "validate";
    record.outputs["candidates.jsonl"] = write_output(dir, "candidates.jsonl", candidates_to_jsonl(candidates));
    record.outputs["validated.jsonl"] = write_output(dir, "validated.jsonl", to_jsonl(validated));
    record.counters = {{"validated", validated.size()}, {"rejected", rejected}};
    record.endpoint_calls = stats_delta(clients, before);
    record.details = {{"judge_agreement", agreement}};
    return record;
  }

  StageRecord stage_mix(std::size_t t) {
    const fs::path dir = round_dir(t);
    const auto adversarial = load_jsonl(dir / "validated.jsonl");
    StageRecord record;
    record.stage = "mix";
    record.endpoint_calls = nlohmann::json::object();
    const MixedDataset ds =
        mix(originals, adversarial.examples(), cfg.ratio, round_seed(cfg.seed, t),
            {cfg.originals.filename().string(), "validated.jsonl"});
    record.counters = {{"n_orig", ds.manifest.n_orig},
                       {"n_adv", ds.manifest.n_adv},
                       {"n_total", ds.manifest.n_total()}};
    if (ds.records.empty()) {
      record.details = {{"manifest", nullptr}, {"note", "no validated records; nothing to mix"}};
      return record;
    }
    const std::string name = "mixed-" + cfg.ratio.slug() + ".jsonl";
    emit_training_file(ds, dir / name);
    record.outputs[name] = sha256_file(dir / name);
    record.outputs["manifest.json"] = sha256_file(dir / "manifest.json");
    record.details = {{"manifest", to_json(ds.manifest)}, {"file", name}};
    return record;
  }

  StageRecord stage_train(std::size_t t, const StageRecord& mixed) {
    StageRecord record;
    record.stage = "train";
    record.endpoint_calls = nlohmann::json::object();
    if (!mixed.details.contains("file")) {
      record.details = {{"skipped", "no mixed file this round"}};
      return record;
    }
    const fs::path mixed_path =
        fs::absolute(round_dir(t) / mixed.details["file"].get<std::string>());
    const std::string command =
        expand_trainer_command(cfg.trainer_command, mixed_path, t, fs::absolute(cfg.output_dir));
    spdlog::info("round {}: running trainer: {}", t, command);
    const int raw = std::system(command.c_str());
    const int status = raw == -1 ? -1 : (WIFEXITED(raw) ? WEXITSTATUS(raw) : 128 + WTERMSIG(raw));
    if (status != 0) {
      throw Error("round " + std::to_string(t) + ": trainer_command exited with status " +
                  std::to_string(status));
    }
    record.counters = {{"exit_status", status}};
    record.details = {{"command_template", cfg.trainer_command}};
    return record;
  }
};

Pipeline::Pipeline(PipelineConfig config, RunOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = std::move(config);
  impl_->opts = std::move(options);
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::round_dir(std::size_t round) const { return impl_->round_dir(round); }

PipelineState Pipeline::start() {
  Impl& s = *impl_;
  s.check_output_dir();
  s.corpus = load_jsonl(s.cfg.corpus);
  if (s.corpus.empty()) {
    throw ConfigError({"corpus " + s.cfg.corpus.string() + " is empty"});
  }
  s.originals = s.cfg.originals == s.cfg.corpus ? s.corpus : load_jsonl(s.cfg.originals);
  if (s.cfg.premises_per_round && *s.cfg.premises_per_round > s.corpus.size()) {
    throw ConfigError({"premises_per_round " + std::to_string(*s.cfg.premises_per_round) +
                       " exceeds the corpus size " + std::to_string(s.corpus.size())});
  }
  s.index = Bm25Index::build(s.corpus, s.cfg.fusion.bm25);
  s.prepare_embeddings();
  s.permutation.resize(s.corpus.size());
  std::iota(s.permutation.begin(), s.permutation.end(), std::size_t{0});
  SplitMix64 rng(s.cfg.seed);
  shuffle(s.permutation, rng);
  s.generator = EndpointClient::create(s.cfg.generator);
  for (const auto& j : s.cfg.judges) {
    s.judges.push_back(EndpointClient::create(j));
  }
  return {};
}

PipelineState Pipeline::run_round(PipelineState state) {
  Impl& s = *impl_;
  const std::size_t t = state.round;
  const fs::path dir = s.round_dir(t);
  fs::create_directories(dir / "checkpoints");
  s.resolve_target(t);

  std::map<std::string, StageRecord> done;
  bool rerun = false;
  for (std::string_view stage : kStages) {
    if (stage == "train" && s.cfg.trainer_command.empty()) {
      continue;
    }
    std::optional<StageRecord> marker;
    if (!rerun) {
      marker = load_marker(dir, stage);
    }
    if (marker) {
      spdlog::info("round {}: {} already complete", t, stage);
      done[std::string(stage)] = std::move(*marker);
      continue;
    }
    rerun = true;
    std::error_code ignored;
    fs::remove(dir / "checkpoints" / (std::string(stage) + ".json"), ignored);
    StageRecord record;
    if (stage == "generate") {
      record = s.stage_generate(t);
    } else if (stage == "filter") {
      record = s.stage_filter(t);
    } else if (stage == "validate") {
      record = s.stage_validate(t);
    } else if (stage == "mix") {
      record = s.stage_mix(t);
    } else {
      record = s.stage_train(t, done.at("mix"));
    }
    write_marker(dir, record);
    spdlog::info("round {}: {} done {}", t, stage, record.counters.dump());
    done[std::string(stage)] = record;
    if (s.opts.hooks.after_stage) {
      s.opts.hooks.after_stage(t, stage);
    }
  }
  state.validated_total += counter(done.at("validate").counters, "validated");
  state.completed.push_back(std::move(done));
  state.round = t + 1;
  return state;
}

nlohmann::json Pipeline::report(const PipelineState& state) const {
  const Impl& s = *impl_;
  static const char* kCounterKeys[] = {"premises", "generated", "generation_failed", "kept",
                                       "dropped",  "validated", "rejected"};
  nlohmann::json totals = nlohmann::json::object();
  for (const char* key : kCounterKeys) {
    totals[key] = 0;
  }
  totals["mixed_records"] = 0;
  nlohmann::json calls = nlohmann::json::object();
  auto add_calls = [&calls](const nlohmann::json& stage_calls) {
    for (const auto& [name, c] : stage_calls.items()) {
      auto& slot = calls[name];
      if (slot.is_null()) {
        slot = nlohmann::json::object();
      }
      for (const char* key : {"calls", "attempts", "failures"}) {
        slot[key] = slot.value(key, std::size_t{0}) + c.at(key).get<std::size_t>();
      }
    }
  };

  nlohmann::json rounds = nlohmann::json::array();
  for (std::size_t t = 0; t < state.completed.size(); ++t) {
    const auto& stages = state.completed[t];
    nlohmann::json counters = nlohmann::json::object();
    nlohmann::json round_calls = nlohmann::json::object();
    nlohmann::json files = nlohmann::json::array();
    for (const auto& [name, record] : stages) {
      for (const auto& [file, _] : record.outputs) {
        files.push_back("round-" + std::to_string(t) + "/" + file);
      }
      round_calls[name] = record.endpoint_calls;
      add_calls(record.endpoint_calls);
    }
    for (const char* key : kCounterKeys) {
      for (const char* stage : {"generate", "filter", "validate"}) {
        if (stages.at(stage).counters.contains(key)) {
          counters[key] = stages.at(stage).counters[key];
          totals[key] = totals[key].get<std::size_t>() + counters[key].get<std::size_t>();
        }
      }
    }
    const auto& mix_record = stages.at("mix");
    totals["mixed_records"] =
        totals["mixed_records"].get<std::size_t>() + counter(mix_record.counters, "n_total");
    std::sort(files.begin(), files.end());
    nlohmann::json trainer = nullptr;
    if (auto it = stages.find("train"); it != stages.end()) {
      trainer = {{"exit_status", it->second.counters.value("exit_status", nlohmann::json(nullptr))},
                 {"details", it->second.details}};
    }
    rounds.push_back({{"round", t},
                      {"directory", "round-" + std::to_string(t)},
                      {"counters", counters},
                      {"mix", mix_record.details.value("manifest", nlohmann::json(nullptr))},
                      {"trainer", trainer},
                      {"target_endpoint", stages.at("filter").details.value("target_endpoint", "")},
                      {"judge_agreement", stages.at("validate").details.value("judge_agreement",
                                                                               nlohmann::json::object())},
                      {"endpoint_calls", round_calls},
                      {"files", files}});
  }

  nlohmann::json judges = nlohmann::json::array();
  for (const auto& j : s.cfg.judges) {
    judges.push_back({{"name", j.name}, {"model", j.model_id}});
  }
  nlohmann::json embedding = nullptr;
  if (s.has_embeddings) {
    embedding = {{"counters", s.embed_record.counters},
                 {"details", s.embed_record.details},
                 {"endpoint_calls", s.embed_record.endpoint_calls}};
  }
  const std::string target_model =
      s.cfg.trainer_command.empty()
          ? "single-model mining: no trainer_command is configured, so one target endpoint served "
            "every round"
          : "retrained between rounds by trainer_command; the target endpoint is re-read from "
            "round-<t>/target_endpoint.json when the trainer writes it";
  return {{"config",
           {{"fusion", fusion_json(s.cfg.fusion)},
            {"ratio", s.cfg.ratio.to_string()},
            {"rounds", state.completed.size()},
            {"premises_per_round", premises_json(s.cfg.premises_per_round)},
            {"seed", s.cfg.seed},
            {"generator", {{"name", s.cfg.generator.name}, {"model", s.cfg.generator.model_id}}},
            {"judges", judges},
            {"target", {{"name", s.cfg.target.name}, {"model", s.cfg.target.model_id}}}}},
          {"target_model", target_model},
          {"embedding", embedding},
          {"rounds", rounds},
          {"totals", totals},
          {"validated_accumulated", state.validated_total},
          {"endpoint_calls", calls}};
}

nlohmann::json run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  PipelineConfig cfg = config;
  if (options.rounds) {
    cfg.rounds = *options.rounds;
  }
  Pipeline pipeline(cfg, options);
  PipelineState state = pipeline.start();
  while (state.round < cfg.rounds) {
    state = pipeline.run_round(std::move(state));
  }
  nlohmann::json report = pipeline.report(state);
  write_file_atomic(cfg.output_dir / "report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace vault
