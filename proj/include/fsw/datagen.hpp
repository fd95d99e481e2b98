#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsw/expr.hpp"
#include "fsw/rng.hpp"

namespace fsw::datagen {

struct GenParams {
    int depth = 1;      // bracket nesting levels
    int prob = 6;       // inverse-complexity knob
    uint64_t seed = 1;
    int count = 200;

    friend bool operator==(const GenParams&, const GenParams&) = default;
};

/// Throws std::invalid_argument unless depth >= 1, prob >= 1, count >= 1.
void validate(const GenParams& params);

/// How the root child-count distribution is derived. `strict` guarantees a
/// 3- or 4-child root (at least two operators); `draft` applies the
/// root override as a literal assignment sequence and can yield 2-child
/// roots. strict is the default everywhere.
enum class RootRule { strict, draft };

RootRule root_rule_from_name(const std::string& name);
std::string root_rule_name(RootRule rule);

/// Probabilities over the operand count of one generated node:
/// p4 -> 5 operands, p3 -> 4, p2 -> 3, p1 -> 2 (pN picks N operators).
struct BranchProbs {
    double p4 = 0;
    double p3 = 0;
    double p2 = 0;
    double p1 = 0;

    double for_child_count(int k) const;
    double sum() const { return p4 + p3 + p2 + p1; }
};

/// Non-root: p4 = min(1, 1/prob), p3 = (1-p4)*min(1, 2/prob),
/// p2 = (1-p4-p3)*min(1, ceil(prob*0.3)/prob), p1 = remainder.
/// Root (strict): only 3 or 4 children, p(4 children) = min(1, 2/prob).
BranchProbs branch_probabilities(int prob, bool at_root,
                                 RootRule rule = RootRule::strict);

/// Recursive generation at depth d: a uniform digit leaf once d reaches
/// params.depth, otherwise a node whose child count, operators (uniform
/// over +,*), and children are drawn in that order.
expr::Expr generate_expr(const GenParams& params, Rng& rng, int d,
                         RootRule rule = RootRule::strict);

struct DatasetRecord {
    int id = 0;
    std::string expression; // canonical rendered form
    expr::Trace trace;      // NonStandard-policy evaluation
    int64_t final_value = 0;
    GenParams params;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct GenOptions {
    RootRule root_rule = RootRule::strict;
    bool dedup = false; // keep drawing until `count` distinct expressions
};

std::vector<DatasetRecord> generate_dataset(const GenParams& params,
                                            const GenOptions& options = {});

/// JSON-Lines, one record per line: id, expression, steps, final, params.
void write_dataset(const std::filesystem::path& path,
                   const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);

std::string record_to_json_line(const DatasetRecord& record);

/// "db_d{depth}_p{prob}_s{seed}"
std::string dataset_id(const GenParams& params);
std::string dataset_filename(const GenParams& params);

struct Preset {
    std::string name; // "db(1,6)"
    GenParams params;
};

/// The shipped dataset configurations, 200 records each.
std::vector<Preset> paper_presets();

} // namespace fsw::datagen
