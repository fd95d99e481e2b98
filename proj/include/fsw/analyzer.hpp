#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "fsw/datagen.hpp"
#include "fsw/expr.hpp"

namespace fsw::analyzer {

enum class FailureMode { none, wrong_value, unparseable, empty };

const char* failure_mode_name(FailureMode mode);

struct GradedAnswer {
    std::optional<int64_t> extracted_final;
    bool correct = false;
    FailureMode failure_mode = FailureMode::none;
    std::string raw;
};

/// Extraction cascade: (1) the terminal bare value of a structured Steps:
/// block (PV1 list or PV2 lines); (2) the last line that is solely an
/// optionally signed integer once markdown emphasis and surrounding
/// punctuation are stripped; (3) the last integer token anywhere; (4) absent.
std::optional<int64_t> extract_final(const std::string& response);

/// Final-value-only scoring: correct iff the extracted value equals the
/// record's final value. Total: any text yields exactly one GradedAnswer.
GradedAnswer grade(const std::string& response,
                   const datagen::DatasetRecord& truth);

/// Strict structured parse of a rendered Steps: block, either variant.
std::optional<expr::Trace> parse_steps_block(const std::string& text);

struct ParsedShot {
    std::string expression;
    expr::Trace trace;
};

/// Recovers (expression, steps, final) from a rendered shot block.
std::optional<ParsedShot> parse_shot_block(const std::string& text);

/// Step-level diagnostics, reported separately from accuracy.
struct StepDiagnostics {
    bool steps_present = false;
    bool arithmetic_consistent = false; // every step's result is exact
    bool matches_final = false;         // last step result equals the final
};

StepDiagnostics diagnose_steps(const std::string& response);

} // namespace fsw::analyzer
