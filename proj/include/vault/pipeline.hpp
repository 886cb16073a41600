#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vault/gateway.hpp"
#include "vault/mixer.hpp"
#include "vault/retrieval.hpp"

namespace vault {

struct PipelineConfig {
  std::filesystem::path corpus;        // retrieval pool D and the premises to mine
  std::filesystem::path originals;     // mixing source; defaults to corpus
  std::filesystem::path embeddings;    // optional precomputed premise store
  FusionConfig fusion;
  ModelEndpoint generator;
  std::vector<ModelEndpoint> judges;
  ModelEndpoint target;
  std::optional<ModelEndpoint> embedder;
  std::size_t embedding_batch_size = 64;
  MixingRatio ratio;
  std::size_t rounds = 1;
  std::optional<std::size_t> premises_per_round;  // nullopt = all
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  /// Shell template run after each round's mix. {mixed}, {round} and
  /// {output_dir} are substituted (shell-quoted); without {mixed} the mixed
  /// file path is appended as the last argument.
  std::string trainer_command;
};

/// Parses the config document. Relative paths resolve against `base_dir`.
/// Every problem is collected into one ConfigError.
PipelineConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// The fields that decide pipeline outputs, for resume compatibility checks.
/// Round count and endpoint tuning (retries, timeouts) are excluded.
nlohmann::json config_fingerprint(const PipelineConfig& config);

inline constexpr std::string_view kStages[] = {"generate", "filter", "validate", "mix", "train"};

struct StageRecord {
  std::string stage;
  std::map<std::string, std::string> outputs;  // file name -> sha256
  nlohmann::json counters = nlohmann::json::object();
  nlohmann::json endpoint_calls = nlohmann::json::object();
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const StageRecord& record);
StageRecord stage_record_from_json(const nlohmann::json& doc);

struct PipelineState {
  std::size_t round = 0;  // next round to run
  std::vector<std::map<std::string, StageRecord>> completed;  // per round, by stage
  std::size_t validated_total = 0;
};

struct PipelineHooks {
  /// Called after a stage's marker is written.
  std::function<void(std::size_t round, std::string_view stage)> after_stage;
  /// Called for every work item inside generate/filter/validate, possibly
  /// from worker threads.
  std::function<void(std::size_t round, std::string_view stage, std::size_t item)> on_item;
};

struct RunOptions {
  bool resume = false;
  std::optional<std::size_t> rounds;  // overrides config.rounds
  PipelineHooks hooks;
};

/// Owns the loaded corpus, index, embeddings and endpoint clients for one
/// run. Rounds are sequential; work inside a stage fans out under the
/// endpoints' in-flight limits and is written by the calling thread in id
/// order.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, RunOptions options);
  ~Pipeline();

  /// Loads inputs, checks the output directory and prepares embeddings.
  PipelineState start();
  /// Runs (or resumes) round state.round and returns the advanced state.
  PipelineState run_round(PipelineState state);
  /// report.json contents for the rounds completed so far.
  nlohmann::json report(const PipelineState& state) const;

  std::filesystem::path round_dir(std::size_t round) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs every round and writes report.json into the output directory.
nlohmann::json run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

/// Round seed: the (round+1)-th output of SplitMix64(seed).
std::uint64_t round_seed(std::uint64_t seed, std::size_t round);

/// Single-quotes `text` for /bin/sh.
std::string shell_quote(std::string_view text);

/// Expands the trainer template for one round.
std::string expand_trainer_command(const std::string& templ, const std::filesystem::path& mixed,
                                   std::size_t round, const std::filesystem::path& output_dir);

}  // namespace vault
