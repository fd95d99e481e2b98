#include <CLI11.hpp>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsw/analyzer.hpp"
#include "fsw/backends.hpp"
#include "fsw/datagen.hpp"
#include "fsw/errors.hpp"
#include "fsw/expr.hpp"
#include "fsw/loop.hpp"
#include "fsw/prompt.hpp"
#include "fsw/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes, one class per failure family (see README).
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitTransport = 4;
constexpr int kExitAuth = 5;
constexpr int kExitLock = 6;

/// Holds <exp_dir>/.lock while a command writes into the directory.
/// A lock left behind by a dead process is reclaimed.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        for (int attempt = 0; attempt < 2; ++attempt) {
            const int fd =
                ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const std::string pid = std::to_string(::getpid()) + "\n";
                ssize_t ignored = ::write(fd, pid.data(), pid.size());
                (void)ignored;
                ::close(fd);
                held_ = true;
                return;
            }
            long pid = 0;
            std::ifstream in(path_);
            in >> pid;
            if (pid > 0 && ::kill(static_cast<pid_t>(pid), 0) != 0 &&
                errno == ESRCH) {
                std::error_code ec;
                fs::remove(path_, ec);
                continue;
            }
            throw fsw::LockError("experiment directory is locked by pid " +
                                 std::to_string(pid) + " (" + path_.string() +
                                 ")");
        }
        throw fsw::LockError("cannot acquire lock: " + path_.string());
    }

    ~DirLock() {
        if (held_) {
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }

    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    bool held_ = false;
};

struct ExpConfig {
    std::string dataset;
    std::string selection_dataset;
    std::string shots_path;
    std::string regime = "zero";
    int random_n = 10;
    uint64_t random_seed = 1;
    int cap = 10;
    int runs = 3;
    int parallelism = 1;
    std::string variant = "PV1";
    bool cot = false;
    std::string exp_dir = "exp";
    fsw::backends::BackendConfig backend;
    fsw::backends::DecodingParams decoding;
};

ExpConfig load_exp_config(const std::string& path) {
    ExpConfig cfg;
    if (path.empty()) {
        return cfg;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw fsw::IoError("cannot open config: " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    cfg.dataset = j.value("dataset", "");
    cfg.selection_dataset = j.value("selection_dataset", "");
    cfg.shots_path = j.value("shots", "");
    cfg.regime = j.value("regime", "zero");
    cfg.random_n = j.value("random_n", 10);
    cfg.random_seed = j.value("random_seed", uint64_t{1});
    cfg.cap = j.value("cap", 10);
    cfg.runs = j.value("runs", 3);
    cfg.parallelism = j.value("parallelism", 1);
    cfg.variant = j.value("variant", "PV1");
    cfg.cot = j.value("cot", false);
    cfg.exp_dir = j.value("exp_dir", "exp");
    if (j.contains("backend")) {
        cfg.backend = fsw::backends::config_from_json(j["backend"]);
    }
    if (j.contains("decoding")) {
        cfg.decoding = fsw::backends::decoding_from_json(j["decoding"]);
    }
    return cfg;
}

json effective_config_json(const ExpConfig& cfg) {
    return json{{"dataset", cfg.dataset},
                {"selection_dataset", cfg.selection_dataset},
                {"shots", cfg.shots_path},
                {"regime", cfg.regime},
                {"random_n", cfg.random_n},
                {"random_seed", cfg.random_seed},
                {"cap", cfg.cap},
                {"runs", cfg.runs},
                {"parallelism", cfg.parallelism},
                {"variant", cfg.variant},
                {"cot", cfg.cot},
                {"exp_dir", cfg.exp_dir},
                {"backend", fsw::backends::config_to_json(cfg.backend)},
                {"decoding", fsw::backends::decoding_to_json(cfg.decoding)},
                {"system_prompt_version", fsw::prompt::system_prompt_version()}};
}

/// Registers the config-file option plus every override flag on an
/// experiment subcommand. Flags win over the config file; the merge
/// happens in the returned callable.
struct ExpFlagSet {
    std::string config_path;
    std::string dataset;
    std::string selection_dataset;
    std::string shots_path;
    std::string regime;
    int random_n = 0;
    uint64_t random_seed = 0;
    int cap = 0;
    int runs = 0;
    int parallelism = 0;
    std::string variant;
    bool cot = false;
    std::string exp_dir;
    std::string backend_kind;
    std::string endpoint;
    std::string model;
    std::string api_key_env;
    double timeout = 0;
    int max_retries = 0;
    double backoff = 0;
    double flaky_p = 0;
    uint64_t backend_seed = 0;
    std::string audit_log;
    double temperature = 0;
    int max_tokens = 0;

    std::map<std::string, CLI::Option*> opts;

    void attach(CLI::App* cmd) {
        opts["config"] = cmd->add_option("--config", config_path,
                                         "experiment config file (JSON)");
        opts["dataset"] =
            cmd->add_option("--dataset", dataset, "dataset file (JSONL)");
        opts["selection_dataset"] = cmd->add_option(
            "--selection-dataset", selection_dataset,
            "dataset for the random regime's sampling pool");
        opts["shots"] =
            cmd->add_option("--shots", shots_path, "shot-set file (JSONL)");
        opts["regime"] = cmd->add_option("--regime", regime,
                                         "shot regime: zero|random|is|ise")
                             ->check(CLI::IsMember({"zero", "random", "is",
                                                    "ise"}));
        opts["random_n"] =
            cmd->add_option("--random-n", random_n, "random regime shot count");
        opts["random_seed"] = cmd->add_option("--random-seed", random_seed,
                                              "random regime sampling seed");
        opts["cap"] = cmd->add_option("--cap", cap, "selection shot cap");
        opts["runs"] = cmd->add_option("--runs", runs, "independent runs");
        opts["parallelism"] = cmd->add_option("--parallelism", parallelism,
                                              "max in-flight completions");
        opts["variant"] = cmd->add_option("--variant", variant,
                                          "prompt variant: PV1|PV2")
                              ->check(CLI::IsMember({"PV1", "PV2"}));
        opts["cot"] = cmd->add_flag("--cot,!--no-cot", cot,
                                    "append the chain-of-thought line");
        opts["exp_dir"] =
            cmd->add_option("--exp-dir", exp_dir, "experiment directory");
        opts["backend_kind"] =
            cmd->add_option("--backend-kind", backend_kind,
                            "http_chat|oracle|standard_bias|flaky_oracle|"
                            "shot_aware")
                ->check(CLI::IsMember({"http_chat", "oracle", "standard_bias",
                                       "flaky_oracle", "shot_aware"}));
        opts["endpoint"] =
            cmd->add_option("--endpoint", endpoint, "http_chat endpoint URL");
        opts["model"] = cmd->add_option("--model", model, "model name");
        opts["api_key_env"] = cmd->add_option(
            "--api-key-env", api_key_env,
            "environment variable holding the API key (never the key itself)");
        opts["timeout"] =
            cmd->add_option("--timeout", timeout, "request timeout seconds");
        opts["max_retries"] = cmd->add_option("--max-retries", max_retries,
                                              "total attempts bound");
        opts["backoff"] =
            cmd->add_option("--backoff", backoff, "initial retry delay seconds");
        opts["flaky_p"] = cmd->add_option("--flaky-p", flaky_p,
                                          "flaky_oracle perturbation prob");
        opts["backend_seed"] = cmd->add_option("--backend-seed", backend_seed,
                                               "mock backend seed");
        opts["audit_log"] = cmd->add_option("--audit-log", audit_log,
                                            "mirror requests/responses (JSONL)");
        opts["temperature"] =
            cmd->add_option("--temperature", temperature, "decoding temperature");
        opts["max_tokens"] =
            cmd->add_option("--max-tokens", max_tokens, "decoding token cap");
    }

    bool given(const std::string& name) const {
        const auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }

    ExpConfig merge() const {
        ExpConfig cfg = load_exp_config(config_path);
        if (given("dataset")) cfg.dataset = dataset;
        if (given("selection_dataset")) cfg.selection_dataset = selection_dataset;
        if (given("shots")) cfg.shots_path = shots_path;
        if (given("regime")) cfg.regime = regime;
        if (given("random_n")) cfg.random_n = random_n;
        if (given("random_seed")) cfg.random_seed = random_seed;
        if (given("cap")) cfg.cap = cap;
        if (given("runs")) cfg.runs = runs;
        if (given("parallelism")) cfg.parallelism = parallelism;
        if (given("variant")) cfg.variant = variant;
        if (given("cot")) cfg.cot = cot;
        if (given("exp_dir")) cfg.exp_dir = exp_dir;
        if (given("backend_kind"))
            cfg.backend.kind = fsw::backends::kind_from_name(backend_kind);
        if (given("endpoint")) cfg.backend.endpoint = endpoint;
        if (given("model")) cfg.backend.model_name = model;
        if (given("api_key_env")) cfg.backend.api_key_env = api_key_env;
        if (given("timeout")) cfg.backend.request_timeout_s = timeout;
        if (given("max_retries")) cfg.backend.max_retries = max_retries;
        if (given("backoff")) cfg.backend.backoff_s = backoff;
        if (given("flaky_p")) cfg.backend.flaky_p = flaky_p;
        if (given("backend_seed")) cfg.backend.seed = backend_seed;
        if (given("audit_log")) cfg.backend.audit_log = audit_log;
        if (given("temperature")) cfg.decoding.temperature = temperature;
        if (given("max_tokens")) cfg.decoding.max_tokens = max_tokens;
        return cfg;
    }
};

std::string dataset_id_of(const std::vector<fsw::datagen::DatasetRecord>& recs,
                          const std::string& path) {
    if (!recs.empty()) {
        return fsw::datagen::dataset_id(recs.front().params);
    }
    return fs::path(path).stem().string();
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    fsw::datagen::GenParams params;
    std::string preset;
    std::string out;
    std::string root_rule = "strict";
    bool dedup = false;
};

void run_gen(const GenArgs& args, bool preset_given) {
    fsw::datagen::GenParams params = args.params;
    if (preset_given) {
        bool found = false;
        for (const auto& preset : fsw::datagen::paper_presets()) {
            if (preset.name == args.preset) {
                const auto seed = params.seed;
                params = preset.params;
                params.seed = seed;
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::invalid_argument("unknown preset: " + args.preset +
                                        " (see `fsw presets`)");
        }
    }
    fsw::datagen::validate(params);
    fsw::datagen::GenOptions options;
    options.root_rule = fsw::datagen::root_rule_from_name(args.root_rule);
    options.dedup = args.dedup;

    const auto records = fsw::datagen::generate_dataset(params, options);
    const fs::path out = args.out.empty()
                             ? fs::path(fsw::datagen::dataset_filename(params))
                             : fs::path(args.out);
    fsw::datagen::write_dataset(out, records);

    size_t internal_nodes = 0;
    size_t operand_total = 0;
    int64_t min_final = records.front().final_value;
    int64_t max_final = min_final;
    for (const auto& rec : records) {
        const auto e = fsw::expr::parse(rec.expression);
        // count children per internal node
        std::vector<const fsw::expr::Expr*> stack{&e};
        while (!stack.empty()) {
            const auto* node = stack.back();
            stack.pop_back();
            if (node->is_leaf()) {
                continue;
            }
            ++internal_nodes;
            operand_total += node->children.size();
            for (const auto& c : node->children) {
                stack.push_back(&c);
            }
        }
        min_final = std::min(min_final, rec.final_value);
        max_final = std::max(max_final, rec.final_value);
    }
    std::cout << "wrote " << records.size() << " records to " << out.string()
              << "\n"
              << "  depth: " << params.depth << "\n"
              << "  mean operand count: "
              << (internal_nodes == 0
                      ? 0.0
                      : static_cast<double>(operand_total) /
                            static_cast<double>(internal_nodes))
              << "\n"
              << "  final value range: [" << min_final << ", " << max_final
              << "]\n";
}

// ---------------------------------------------------------------- trace

void run_trace(const std::string& expression, const std::string& policy_name,
               const std::string& variant_name) {
    const auto& policy = fsw::expr::PrecedencePolicy::by_name(policy_name);
    const auto e = fsw::expr::parse(expression);
    const auto trace = fsw::expr::evaluate(e, policy);
    std::cout << "Expression: " << fsw::expr::render(e) << "\n"
              << fsw::prompt::render_steps(
                     trace, fsw::prompt::variant_from_name(variant_name))
              << "\n"
              << "Final: " << trace.final_value << "\n";
}

// ---------------------------------------------------------------- presets

void run_presets() {
    std::cout << "name      depth  prob  count  file\n";
    for (const auto& preset : fsw::datagen::paper_presets()) {
        std::printf("%-9s %-6d %-5d %-6d %s\n", preset.name.c_str(),
                    preset.params.depth, preset.params.prob,
                    preset.params.count,
                    fsw::datagen::dataset_filename(preset.params).c_str());
    }
}

// ---------------------------------------------------------------- select

void run_select(const ExpConfig& cfg) {
    if (cfg.dataset.empty()) {
        throw std::invalid_argument("select needs --dataset (selection data)");
    }
    if (cfg.cap < 0) {
        throw std::invalid_argument("cap must be >= 0");
    }
    const auto records = fsw::datagen::load_dataset(cfg.dataset);
    const std::string dataset_id = dataset_id_of(records, cfg.dataset);

    const fs::path dir(cfg.exp_dir);
    DirLock lock(dir);
    fsw::loop::ResponseCache cache(dir / "cache.jsonl");

    auto backend = fsw::backends::make_backend(cfg.backend);

    // Guard against resuming under a different recipe.
    const json guard{{"dataset_id", dataset_id},
                     {"cap", cfg.cap},
                     {"variant", cfg.variant},
                     {"cot", cfg.cot},
                     {"backend_id", backend->id()}};
    const fs::path meta_path = dir / "select_meta.json";
    if (fs::exists(meta_path)) {
        std::ifstream in(meta_path);
        json existing;
        in >> existing;
        if (existing != guard) {
            throw std::invalid_argument(
                "selection in " + dir.string() +
                " was started with a different configuration; use a fresh "
                "--exp-dir");
        }
    } else {
        std::ofstream out(meta_path);
        out << guard.dump(2) << '\n';
    }

    const fs::path state_path = dir / "select_state.json";
    const auto resume = fsw::loop::load_selection_state(state_path);
    if (resume) {
        std::cerr << "resuming selection at cursor " << resume->cursor << "\n";
    }

    fsw::loop::SelectOptions options;
    options.variant = fsw::prompt::variant_from_name(cfg.variant);
    options.cot = cfg.cot;
    options.cap = static_cast<size_t>(cfg.cap);
    options.dataset_id = dataset_id;
    options.state_path = state_path;
    options.cache = &cache;
    options.decoding = cfg.decoding;

    const auto state = fsw::loop::select_shots(
        records, *backend, options, resume ? &*resume : nullptr);

    const fs::path shots_path = dir / "shots.jsonl";
    fsw::prompt::write_shots(shots_path, state.shots);

    std::cout << "selected " << state.shots.size() << " shots (cap " << cfg.cap
              << ") after " << state.log.size() << " queries; wrote "
              << shots_path.string() << "\n";
    if (state.shots.empty()) {
        std::cerr << "warning: backend answered everything correctly; "
                     "shot set is empty\n";
    }
    if (state.exhausted_before_cap) {
        std::cerr << "warning: selection dataset exhausted with "
                  << state.shots.size() << " < " << cfg.cap << " shots\n";
    }
}

// ---------------------------------------------------------------- eval

void run_eval(const ExpConfig& cfg, const std::string& out_path) {
    if (cfg.dataset.empty()) {
        throw std::invalid_argument("eval needs --dataset");
    }
    const auto records = fsw::datagen::load_dataset(cfg.dataset);
    const std::string dataset_id = dataset_id_of(records, cfg.dataset);

    const fs::path dir(cfg.exp_dir);
    DirLock lock(dir);
    fsw::loop::ResponseCache cache(dir / "cache.jsonl");

    auto backend = fsw::backends::make_backend(cfg.backend);

    std::vector<fsw::prompt::Shot> shots;
    bool shortfall = false;
    if (cfg.regime == "zero") {
        // no shots
    } else if (cfg.regime == "random") {
        const std::string pool_path = cfg.selection_dataset.empty()
                                          ? cfg.dataset
                                          : cfg.selection_dataset;
        const auto pool = fsw::datagen::load_dataset(pool_path);
        shots = fsw::loop::random_shots(
            pool, static_cast<size_t>(cfg.random_n), cfg.random_seed);
    } else { // is | ise
        const fs::path shots_path = cfg.shots_path.empty()
                                        ? dir / "shots.jsonl"
                                        : fs::path(cfg.shots_path);
        if (!fs::exists(shots_path)) {
            throw std::invalid_argument(
                "regime " + cfg.regime + " needs a shot set; run `fsw select` "
                "first or pass --shots (looked for " +
                shots_path.string() + ")");
        }
        shots = fsw::prompt::load_shots(shots_path);
        const auto state =
            fsw::loop::load_selection_state(dir / "select_state.json");
        shortfall = state && state->exhausted_before_cap;
    }

    fsw::loop::EvalOptions options;
    options.variant = fsw::prompt::variant_from_name(cfg.variant);
    options.cot = cfg.cot;
    options.runs = cfg.runs;
    options.parallelism = cfg.parallelism;
    options.cache = &cache;
    options.decoding = cfg.decoding;
    options.dataset_id = dataset_id;
    options.regime = cfg.regime;
    options.shot_cap_shortfall = shortfall;
    options.config_echo = effective_config_json(cfg);
    options.run_log_path = dir / "run_log.jsonl";
    std::error_code ec;
    fs::remove(options.run_log_path, ec); // one log per invocation

    const auto report = fsw::loop::evaluate_dataset(records, shots, *backend,
                                                    options);

    const fs::path report_path =
        out_path.empty() ? dir / "report.json" : fs::path(out_path);
    fsw::report::write_report(report_path, report);
    std::cout << fsw::report::summary_row(report) << "\n";
    std::cerr << "report: " << report_path.string() << " (backend calls "
              << report.backend_calls << ", cache " << cache.size()
              << " entries)\n";
}

// ---------------------------------------------------------------- report

void run_report(const std::vector<std::string>& paths,
                const std::string& csv_path, const std::string& out_path) {
    std::vector<fsw::loop::RunReport> reports;
    reports.reserve(paths.size());
    for (const auto& path : paths) {
        reports.push_back(fsw::report::load_report(path));
    }
    const std::string tables = fsw::report::render_tables(reports);
    std::cout << tables;
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw fsw::IoError("cannot write: " + out_path);
        }
        out << tables;
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw fsw::IoError("cannot write: " + csv_path);
        }
        out << fsw::report::render_csv(reports);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot prompting workbench: arithmetic with + before *"};
    app.require_subcommand(1);

    // gen
    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    gen->add_option("--depth", gen_args.params.depth, "bracket nesting levels");
    gen->add_option("--prob", gen_args.params.prob, "inverse-complexity knob");
    gen->add_option("--seed", gen_args.params.seed, "generator seed");
    gen->add_option("--count", gen_args.params.count, "records to generate");
    auto* preset_opt = gen->add_option("--preset", gen_args.preset,
                                       "named preset, e.g. db(2,20)");
    gen->add_option("--out", gen_args.out, "output path (JSONL)");
    gen->add_option("--root-rule", gen_args.root_rule,
                    "root child-count rule: strict|draft")
        ->check(CLI::IsMember({"strict", "draft"}));
    gen->add_flag("--dedup", gen_args.dedup,
                  "draw until `count` distinct expressions");
    gen->callback([&] { run_gen(gen_args, preset_opt->count() > 0); });

    // trace
    std::string trace_expr;
    std::string trace_policy = "nonstandard";
    std::string trace_variant = "PV1";
    auto* trace =
        app.add_subcommand("trace", "print the canonical trace of one "
                                    "expression");
    trace->add_option("expression", trace_expr, "expression text")->required();
    trace->add_option("--policy", trace_policy, "nonstandard|standard")
        ->check(CLI::IsMember({"nonstandard", "standard"}));
    trace->add_option("--variant", trace_variant, "PV1|PV2")
        ->check(CLI::IsMember({"PV1", "PV2"}));
    trace->callback([&] { run_trace(trace_expr, trace_policy, trace_variant); });

    // presets
    auto* presets =
        app.add_subcommand("presets", "list the shipped dataset presets");
    presets->callback([&] { run_presets(); });

    // select
    auto* select = app.add_subcommand(
        "select", "phase 1: iterative shot synthesis over a dataset");
    ExpFlagSet select_flags;
    select_flags.attach(select);
    select->callback([&] { run_select(select_flags.merge()); });

    // eval
    auto* eval = app.add_subcommand(
        "eval", "phase 2: fixed-shot evaluation of a dataset");
    ExpFlagSet eval_flags;
    eval_flags.attach(eval);
    std::string eval_out;
    eval->add_option("--out", eval_out, "report output path");
    eval->callback([&] { run_eval(eval_flags.merge(), eval_out); });

    // report
    std::vector<std::string> report_paths;
    std::string report_csv;
    std::string report_out;
    auto* report = app.add_subcommand(
        "report", "aggregate run reports into comparison tables");
    report->add_option("reports", report_paths, "report files")->required();
    report->add_option("--csv", report_csv, "CSV output path");
    report->add_option("--out", report_out, "table output path");
    report->callback(
        [&] { run_report(report_paths, report_csv, report_out); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    } catch (const fsw::backends::AuthError& e) {
        std::cerr << "auth error: " << e.what() << "\n";
        return kExitAuth;
    } catch (const fsw::backends::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const fsw::LockError& e) {
        std::cerr << "lock error: " << e.what() << "\n";
        return kExitLock;
    } catch (const fsw::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fsw::expr::SyntaxError& e) {
        std::cerr << "syntax error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fsw::loop::SampleError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fsw::report::SchemaMismatchError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}
