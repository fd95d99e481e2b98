#include "fsw/loop.hpp"

#include "fsw/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "fsw/hash.hpp"
#include "fsw/rng.hpp"

namespace fsw::loop {

using nlohmann::json;

ResponseCache::ResponseCache(const std::filesystem::path& path)
    : path_(path), persistent_(true) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
        return; // fresh cache; file appears on first insert
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("key") || !j.contains("response")) {
            continue; // interrupted writer left a partial line
        }
        entries_[j["key"].get<std::string>()] =
            j["response"].get<std::string>();
    }
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void ResponseCache::insert(const std::string& key,
                           const std::string& backend_id,
                           const std::string& response) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!entries_.emplace(key, response).second) {
        return;
    }
    if (persistent_) {
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        out << json{{"key", key}, {"backend", backend_id},
                    {"response", response}}
                   .dump()
            << '\n';
    }
}

size_t ResponseCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

std::string ResponseCache::key(const std::string& backend_id,
                               const backends::DecodingParams& params,
                               const prompt::PromptBundle& bundle,
                               const std::string& call_tag) {
    std::string material = backend_id;
    material += '\x1f';
    material += backends::decoding_to_json(params).dump();
    material += '\x1f';
    material += bundle.system_text;
    material += '\x1f';
    material += bundle.user_text;
    material += '\x1f';
    material += call_tag;
    return sha256_hex(material);
}

std::string cached_complete(ResponseCache* cache, backends::Backend& backend,
                            const backends::DecodingParams& params,
                            const prompt::PromptBundle& bundle,
                            const std::string& call_tag) {
    if (cache == nullptr) {
        return backend.complete(bundle, params);
    }
    const std::string key =
        ResponseCache::key(backend.id(), params, bundle, call_tag);
    if (auto hit = cache->lookup(key)) {
        return *hit;
    }
    std::string response = backend.complete(bundle, params);
    cache->insert(key, backend.id(), response);
    return response;
}

json ShotSelectionState::to_json() const {
    json shots_json = json::array();
    for (const prompt::Shot& s : shots) {
        json steps = json::array();
        for (const expr::Step& st : s.trace.steps) {
            steps.push_back(expr::to_string(st));
        }
        shots_json.push_back(json{{"expression", s.expression},
                                  {"steps", steps},
                                  {"final", s.trace.final_value},
                                  {"source",
                                   {{"dataset", s.source_dataset},
                                    {"record_id", s.source_record_id}}}});
    }
    json log_json = json::array();
    for (const SelectionLogEntry& e : log) {
        log_json.push_back(json{{"record_id", e.record_id},
                                {"correct", e.correct}});
    }
    return json{{"shots", shots_json},
                {"cursor", cursor},
                {"cap", cap},
                {"log", log_json},
                {"exhausted_before_cap", exhausted_before_cap}};
}

ShotSelectionState ShotSelectionState::from_json(const json& j) {
    ShotSelectionState s;
    s.cursor = j.at("cursor").get<size_t>();
    s.cap = j.at("cap").get<size_t>();
    s.exhausted_before_cap = j.value("exhausted_before_cap", false);
    for (const auto& sj : j.at("shots")) {
        prompt::Shot shot;
        shot.expression = sj.at("expression").get<std::string>();
        shot.trace.final_value = sj.at("final").get<int64_t>();
        for (const auto& stj : sj.at("steps")) {
            expr::Step st;
            if (!expr::parse_step(stj.get<std::string>(), st)) {
                throw std::runtime_error("selection state: malformed step");
            }
            shot.trace.steps.push_back(st);
        }
        if (sj.contains("source")) {
            shot.source_dataset = sj["source"].value("dataset", "");
            shot.source_record_id = sj["source"].value("record_id", -1);
        }
        s.shots.push_back(std::move(shot));
    }
    for (const auto& lj : j.at("log")) {
        s.log.push_back(SelectionLogEntry{lj.at("record_id").get<int>(),
                                          lj.at("correct").get<bool>()});
    }
    return s;
}

void save_selection_state(const std::filesystem::path& path,
                          const ShotSelectionState& state) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write state: " + tmp.string());
        }
        out << state.to_json().dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

std::optional<ShotSelectionState>
load_selection_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    json j;
    in >> j;
    return ShotSelectionState::from_json(j);
}

ShotSelectionState select_shots(
    const std::vector<datagen::DatasetRecord>& selection_dataset,
    backends::Backend& backend, const SelectOptions& options) {
    return select_shots(selection_dataset, backend, options, nullptr);
}

ShotSelectionState select_shots(
    const std::vector<datagen::DatasetRecord>& selection_dataset,
    backends::Backend& backend, const SelectOptions& options,
    const ShotSelectionState* resume) {
    ShotSelectionState state;
    if (resume != nullptr) {
        state = *resume;
    }
    state.cap = options.cap;

    const auto persist = [&] {
        if (!options.state_path.empty()) {
            save_selection_state(options.state_path, state);
        }
    };

    while (state.cursor < selection_dataset.size() &&
           state.shots.size() < state.cap) {
        const datagen::DatasetRecord& record = selection_dataset[state.cursor];
        const auto bundle = prompt::build_prompt(
            record.expression, state.shots, options.variant, options.cot);
        std::string response;
        try {
            response = cached_complete(options.cache, backend, options.decoding,
                                       bundle, "select");
        } catch (const backends::BackendError&) {
            persist();
            throw;
        }
        const auto graded = analyzer::grade(response, record);
        state.log.push_back(SelectionLogEntry{record.id, graded.correct});
        if (!graded.correct) {
            prompt::Shot shot;
            shot.expression = record.expression;
            shot.trace = record.trace;
            shot.source_dataset = options.dataset_id;
            shot.source_record_id = record.id;
            state.shots.push_back(std::move(shot));
        }
        ++state.cursor;
        persist();
    }
    state.exhausted_before_cap = state.shots.size() < state.cap &&
                                 state.cursor >= selection_dataset.size();
    persist();
    return state;
}

std::vector<prompt::Shot>
random_shots(const std::vector<datagen::DatasetRecord>& selection_dataset,
             size_t n, uint64_t seed) {
    if (n > selection_dataset.size()) {
        throw SampleError("requested " + std::to_string(n) + " shots from " +
                          std::to_string(selection_dataset.size()) +
                          " records");
    }
    std::vector<size_t> index(selection_dataset.size());
    for (size_t i = 0; i < index.size(); ++i) {
        index[i] = i;
    }
    Rng rng(seed);
    std::vector<prompt::Shot> shots;
    shots.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(
            static_cast<int64_t>(i), static_cast<int64_t>(index.size()) - 1));
        std::swap(index[i], index[j]);
        const datagen::DatasetRecord& record = selection_dataset[index[i]];
        prompt::Shot shot;
        shot.expression = record.expression;
        shot.trace = record.trace;
        shot.source_dataset = datagen::dataset_id(record.params);
        shot.source_record_id = record.id;
        shots.push_back(std::move(shot));
    }
    return shots;
}

json RunReport::to_json() const {
    json failures = json::object();
    for (const auto& [mode, count] : failure_histogram) {
        failures[mode] = count;
    }
    return json{{"dataset_id", dataset_id},
                {"regime", regime},
                {"variant", variant},
                {"cot", cot},
                {"backend_id", backend_id},
                {"per_run_accuracy", per_run_accuracy},
                {"mean", mean},
                {"std", std_dev},
                {"n_items", n_items},
                {"runs", runs},
                {"shot_count", shot_count},
                {"shot_cap_shortfall", shot_cap_shortfall},
                {"failure_histogram", failures},
                {"fingerprint", fingerprint},
                {"backend_calls", backend_calls},
                {"config", config_echo}};
}

RunReport RunReport::from_json(const json& j) {
    RunReport r;
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.regime = j.at("regime").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.cot = j.at("cot").get<bool>();
    r.backend_id = j.at("backend_id").get<std::string>();
    r.per_run_accuracy = j.at("per_run_accuracy").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std_dev = j.at("std").get<double>();
    r.n_items = j.at("n_items").get<int>();
    r.runs = j.at("runs").get<int>();
    r.shot_count = j.value("shot_count", 0);
    r.shot_cap_shortfall = j.value("shot_cap_shortfall", false);
    for (const auto& [mode, count] : j.at("failure_histogram").items()) {
        r.failure_histogram[mode] = count.get<int>();
    }
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.backend_calls = j.value("backend_calls", uint64_t{0});
    r.config_echo = j.value("config", json::object());
    return r;
}

namespace {

struct RowResult {
    analyzer::GradedAnswer graded;
    std::string prompt_sha;
};

void append_run_log(const std::filesystem::path& path, int run,
                    const std::vector<datagen::DatasetRecord>& test,
                    const std::vector<RowResult>& rows,
                    const std::string& backend_id) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) {
        throw IoError("cannot write run log: " + path.string());
    }
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const auto diag = analyzer::diagnose_steps(row.graded.raw);
        json j{{"run", run},
               {"record_id", test[i].id},
               {"prompt_sha", row.prompt_sha},
               {"backend", backend_id},
               {"correct", row.graded.correct},
               {"failure_mode",
                analyzer::failure_mode_name(row.graded.failure_mode)},
               {"steps_present", diag.steps_present},
               {"arithmetic_consistent", diag.arithmetic_consistent}};
        if (row.graded.extracted_final.has_value()) {
            j["extracted"] = *row.graded.extracted_final;
        } else {
            j["extracted"] = nullptr;
        }
        out << j.dump() << '\n';
    }
}

} // namespace

RunReport evaluate_dataset(const std::vector<datagen::DatasetRecord>& test,
                           const std::vector<prompt::Shot>& shots,
                           backends::Backend& backend,
                           const EvalOptions& options) {
    if (options.runs < 1) {
        throw std::invalid_argument("runs must be >= 1");
    }
    const uint64_t calls_before = backend.calls_issued();

    RunReport report;
    report.dataset_id = options.dataset_id;
    report.regime = options.regime;
    report.variant = prompt::variant_name(options.variant);
    report.cot = options.cot;
    report.backend_id = backend.id();
    report.n_items = static_cast<int>(test.size());
    report.runs = options.runs;
    report.shot_count = static_cast<int>(shots.size());
    report.shot_cap_shortfall = options.shot_cap_shortfall;
    report.config_echo = options.config_echo;
    report.fingerprint =
        fingerprint(backend.config(), options.decoding, options.variant,
                    options.cot, shots, options.dataset_id,
                    static_cast<int>(test.size()), options.regime,
                    options.runs);

    for (int run = 1; run <= options.runs; ++run) {
        const std::string tag = "run" + std::to_string(run);
        std::vector<RowResult> rows(test.size());

        auto grade_one = [&](size_t i) {
            const auto bundle = prompt::build_prompt(
                test[i].expression, shots, options.variant, options.cot);
            const std::string response = cached_complete(
                options.cache, backend, options.decoding, bundle, tag);
            rows[i].graded = analyzer::grade(response, test[i]);
            rows[i].prompt_sha = sha256_hex(bundle.user_text);
        };

        const int workers = std::max(
            1, std::min(options.parallelism, static_cast<int>(test.size())));
        if (workers == 1) {
            for (size_t i = 0; i < test.size(); ++i) {
                grade_one(i);
            }
        } else {
            std::atomic<size_t> next{0};
            std::atomic<bool> abort{false};
            std::exception_ptr first_error;
            std::mutex error_mu;
            auto worker = [&] {
                while (!abort.load(std::memory_order_relaxed)) {
                    const size_t i = next.fetch_add(1);
                    if (i >= test.size()) {
                        return;
                    }
                    try {
                        grade_one(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mu);
                        if (!first_error) {
                            first_error = std::current_exception();
                        }
                        abort.store(true);
                        return;
                    }
                }
            };
            std::vector<std::thread> pool;
            pool.reserve(static_cast<size_t>(workers));
            for (int w = 0; w < workers; ++w) {
                pool.emplace_back(worker);
            }
            for (auto& t : pool) {
                t.join();
            }
            if (first_error) {
                std::rethrow_exception(first_error);
            }
        }

        int correct = 0;
        for (const RowResult& row : rows) {
            if (row.graded.correct) {
                ++correct;
            }
            const char* mode =
                analyzer::failure_mode_name(row.graded.failure_mode);
            ++report.failure_histogram[mode];
        }
        report.per_run_accuracy.push_back(
            test.empty() ? 0.0
                         : static_cast<double>(correct) /
                               static_cast<double>(test.size()));
        if (!options.run_log_path.empty()) {
            append_run_log(options.run_log_path, run, test, rows,
                           report.backend_id);
        }
    }

    report.mean = mean_of(report.per_run_accuracy);
    report.std_dev = population_std(report.per_run_accuracy);
    report.backend_calls = backend.calls_issued() - calls_before;
    return report;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (double x : xs) {
        sum += x;
    }
    return sum / static_cast<double>(xs.size());
}

double population_std(const std::vector<double>& xs) {
    if (xs.size() <= 1) {
        return 0.0;
    }
    const double m = mean_of(xs);
    double sq = 0.0;
    for (double x : xs) {
        sq += (x - m) * (x - m);
    }
    return std::sqrt(sq / static_cast<double>(xs.size()));
}

std::string fingerprint(const backends::BackendConfig& backend_config,
                        const backends::DecodingParams& decoding,
                        prompt::Variant variant, bool cot,
                        const std::vector<prompt::Shot>& shots,
                        const std::string& dataset_id, int n_items,
                        const std::string& regime, int runs) {
    json shots_json = json::array();
    for (const prompt::Shot& s : shots) {
        json steps = json::array();
        for (const expr::Step& st : s.trace.steps) {
            steps.push_back(expr::to_string(st));
        }
        shots_json.push_back(json{{"expression", s.expression},
                                  {"steps", steps},
                                  {"final", s.trace.final_value}});
    }
    const json j{{"backend", backends::config_to_json(backend_config)},
                 {"decoding", backends::decoding_to_json(decoding)},
                 {"variant", prompt::variant_name(variant)},
                 {"cot", cot},
                 {"system",
                  {{"version", prompt::system_prompt_version()},
                   {"sha", sha256_hex(prompt::system_prompt_text())}}},
                 {"shots", shots_json},
                 {"dataset", {{"id", dataset_id}, {"n_items", n_items}}},
                 {"regime", regime},
                 {"runs", runs},
                 {"extraction", kExtractionVersion}};
    return sha256_hex(j.dump());
}

} // namespace fsw::loop
