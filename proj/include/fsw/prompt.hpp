#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fsw/expr.hpp"

namespace fsw::prompt {

/// PV1 renders solution steps as a bracketed list on one line; PV2 as
/// line-separated text.
enum class Variant { PV1, PV2 };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// A solved example embedded in a prompt. The trace is always the
/// NonStandard evaluation of the expression. Provenance records where the
/// shot came from so selection regimes stay distinguishable in reports.
struct Shot {
    std::string expression;
    expr::Trace trace;
    std::string source_dataset; // optional
    int source_record_id = -1;  // optional

    friend bool operator==(const Shot&, const Shot&) = default;
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    bool cot = false;

    friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

/// PV1: "Steps: [s1, ..., sk, final]" on one line; PV2: "Steps:" then one
/// step per line and the bare final value last.
std::string render_steps(const expr::Trace& trace, Variant variant);

/// Assembles the user prompt: the example header and one block per shot
/// when shots are present, the task line, and the chain-of-thought suffix
/// when enabled. The target expression is normalized to canonical form.
/// Pure: identical inputs produce byte-identical bundles.
PromptBundle build_prompt(const std::string& target_expression,
                          const std::vector<Shot>& shots, Variant variant,
                          bool cot);

/// Fixed instruction text shared by both variants; experiments record its
/// version and hash rather than the full text.
const std::string& system_prompt_text();
const char* system_prompt_version();

/// Exact chain-of-thought suffix line.
inline constexpr const char* kCotLine = "A: Let's think step by step.";

/// Two-field record (system, user) for caches and audit logs.
std::string bundle_to_json(const PromptBundle& bundle);

/// Shot-set persistence: JSON-Lines, one shot per line with provenance.
void write_shots(const std::filesystem::path& path,
                 const std::vector<Shot>& shots);
std::vector<Shot> load_shots(const std::filesystem::path& path);

} // namespace fsw::prompt
