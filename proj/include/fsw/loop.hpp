#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fsw/analyzer.hpp"
#include "fsw/backends.hpp"
#include "fsw/datagen.hpp"
#include "fsw/prompt.hpp"

namespace fsw::loop {

class SampleError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Append-only JSON-Lines response store. Keys are hashes of the full
/// request identity; a warm cache replays an experiment with zero backend
/// calls. Appends are serialized; lookups are safe from any thread once
/// loading is done.
class ResponseCache {
public:
    /// In-memory only.
    ResponseCache() = default;
    /// Backed by a file; loads existing entries (tolerating a truncated
    /// final line from an interrupted writer) and appends new ones.
    explicit ResponseCache(const std::filesystem::path& path);

    std::optional<std::string> lookup(const std::string& key) const;
    void insert(const std::string& key, const std::string& backend_id,
                const std::string& response);
    size_t size() const;

    /// Cache key: hash(backend id, decoding params, system text, user text,
    /// call tag). The tag keeps phase-1 selection and each evaluation run
    /// distinct, so "R independent runs" stay independent through the cache.
    static std::string key(const std::string& backend_id,
                           const backends::DecodingParams& params,
                           const prompt::PromptBundle& bundle,
                           const std::string& call_tag);

private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::string> entries_;
    std::filesystem::path path_;
    bool persistent_ = false;
};

/// One completion, cache-first. Returns the response and whether the
/// backend was actually consulted.
std::string cached_complete(ResponseCache* cache, backends::Backend& backend,
                            const backends::DecodingParams& params,
                            const prompt::PromptBundle& bundle,
                            const std::string& call_tag);

struct SelectionLogEntry {
    int record_id = 0;
    bool correct = false;
};

struct ShotSelectionState {
    std::vector<prompt::Shot> shots;
    size_t cursor = 0; // next record index to process
    size_t cap = 0;
    std::vector<SelectionLogEntry> log;
    bool exhausted_before_cap = false; // dataset ran out with shots < cap

    nlohmann::json to_json() const;
    static ShotSelectionState from_json(const nlohmann::json& j);
};

struct SelectOptions {
    prompt::Variant variant = prompt::Variant::PV1;
    bool cot = false;
    size_t cap = 10;
    std::string dataset_id;            // provenance stamped into shots
    std::filesystem::path state_path;  // persisted after every record when set
    ResponseCache* cache = nullptr;
    backends::DecodingParams decoding;
};

/// Phase 1, strictly sequential: walk the selection dataset in order,
/// prompting with the shots gathered so far; every incorrectly answered
/// record becomes a shot (expression + canonical trace) until `cap` shots
/// exist or the dataset ends. Fatal backend errors propagate after the
/// state has been persisted, so a rerun resumes at the stored cursor.
ShotSelectionState select_shots(
    const std::vector<datagen::DatasetRecord>& selection_dataset,
    backends::Backend& backend, const SelectOptions& options);

/// Resume-aware variant: continues from `resume` when provided.
ShotSelectionState select_shots(
    const std::vector<datagen::DatasetRecord>& selection_dataset,
    backends::Backend& backend, const SelectOptions& options,
    const ShotSelectionState* resume);

void save_selection_state(const std::filesystem::path& path,
                          const ShotSelectionState& state);
std::optional<ShotSelectionState>
load_selection_state(const std::filesystem::path& path);

/// Uniform sample without replacement, in sampled order.
/// Throws SampleError when n exceeds the dataset size.
std::vector<prompt::Shot>
random_shots(const std::vector<datagen::DatasetRecord>& selection_dataset,
             size_t n, uint64_t seed);

struct RunReport {
    std::string dataset_id;
    std::string regime; // zero | random | is | ise
    std::string variant;
    bool cot = false;
    std::string backend_id;
    std::vector<double> per_run_accuracy;
    double mean = 0.0;
    double std_dev = 0.0; // population formula; 0 for a single run
    int n_items = 0;
    int runs = 0;
    int shot_count = 0;
    bool shot_cap_shortfall = false;
    std::map<std::string, int> failure_histogram; // across all runs
    std::string fingerprint;
    uint64_t backend_calls = 0; // issued during this invocation
    nlohmann::json config_echo; // effective experiment configuration

    nlohmann::json to_json() const;
    static RunReport from_json(const nlohmann::json& j);
};

struct EvalOptions {
    prompt::Variant variant = prompt::Variant::PV1;
    bool cot = false;
    int runs = 3;
    int parallelism = 1;
    ResponseCache* cache = nullptr;
    backends::DecodingParams decoding;
    std::string dataset_id;
    std::string regime = "zero";
    bool shot_cap_shortfall = false;
    nlohmann::json config_echo;
    std::filesystem::path run_log_path; // per-answer JSONL when set
};

/// Phase 2: grade every record under a frozen prompt recipe, `runs` times,
/// with up to `parallelism` in-flight completions. The shot list is never
/// mutated; results reduce deterministically by record id.
RunReport evaluate_dataset(const std::vector<datagen::DatasetRecord>& test,
                           const std::vector<prompt::Shot>& shots,
                           backends::Backend& backend,
                           const EvalOptions& options);

double mean_of(const std::vector<double>& xs);
/// Population formula (divide by n); the sample of runs is the whole
/// population of runs, and a single run has spread 0.
double population_std(const std::vector<double>& xs);

/// Hash over everything that affects results: backend config, decoding
/// params, variant, cot, system prompt version+text, shot set, dataset id
/// and size, regime, runs, and the extraction-cascade version.
std::string fingerprint(const backends::BackendConfig& backend_config,
                        const backends::DecodingParams& decoding,
                        prompt::Variant variant, bool cot,
                        const std::vector<prompt::Shot>& shots,
                        const std::string& dataset_id, int n_items,
                        const std::string& regime, int runs);

inline constexpr const char* kExtractionVersion = "extract-v1";

} // namespace fsw::loop
