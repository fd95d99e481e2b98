#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fsw::expr {

enum class Op { Add, Mul };

inline char op_char(Op op) { return op == Op::Add ? '+' : '*'; }

/// Expression tree: a leaf digit or a bracketed sequence of children joined
/// by operators. A node with k children carries exactly k-1 operators.
/// Generated data keeps 2..5 children per node and leaves only at maximum
/// depth; the parser is more permissive (any k >= 1) so that model output
/// and hand-written input can be re-read.
struct Expr {
    int value = 0;              // leaf digit, 0..9; unused for nodes
    std::vector<Expr> children; // empty for leaves
    std::vector<Op> ops;        // children.size()-1 entries for nodes

    bool is_leaf() const { return children.empty(); }

    /// Bracket nesting depth: 0 for a leaf, 1 + max over children otherwise.
    int depth() const;

    static Expr leaf(int digit);
    static Expr node(std::vector<Expr> children, std::vector<Op> ops);

    friend bool operator==(const Expr&, const Expr&) = default;
};

/// Operator priority as an ordered list of tiers, highest priority first.
/// Every operator lives in exactly one tier.
class PrecedencePolicy {
public:
    explicit PrecedencePolicy(std::vector<std::vector<Op>> tiers,
                              std::string name);

    int tier_of(Op op) const {
        return tier_of_[op == Op::Add ? 0 : 1];
    }
    int tier_count() const { return tier_count_; }
    const std::string& name() const { return name_; }

    /// Addition folds before multiplication.
    static const PrecedencePolicy& non_standard();
    /// Conventional arithmetic order.
    static const PrecedencePolicy& standard();

    static const PrecedencePolicy& by_name(const std::string& name);

private:
    int tier_of_[2] = {0, 0}; // [Add, Mul]
    int tier_count_ = 0;
    std::string name_;
};

/// One binary reduction, e.g. 8 + 1 = 9.
struct Step {
    int64_t lhs = 0;
    Op op = Op::Add;
    int64_t rhs = 0;
    int64_t result = 0;

    friend bool operator==(const Step&, const Step&) = default;
};

/// "lhs op rhs = result" with single spaces.
std::string to_string(const Step& step);

/// Parses "a + b = c" / "a * b = c"; returns false on any format mismatch.
bool parse_step(std::string_view text, Step& out);

/// Ordered reduction steps plus the final value. A bare leaf has no steps.
struct Trace {
    std::vector<Step> steps;
    int64_t final_value = 0;

    friend bool operator==(const Trace&, const Trace&) = default;
};

class SyntaxError : public std::runtime_error {
public:
    SyntaxError(const std::string& reason, size_t position);
    size_t position() const { return position_; }

private:
    size_t position_;
};

class OverflowError : public std::runtime_error {
public:
    OverflowError(int64_t lhs, Op op, int64_t rhs);
};

/// Parses a parenthesized expression over digits 0-9 and the operators
/// + and *, with arbitrary whitespace. Brackets always introduce a node
/// (including singletons such as "(7)"); an un-bracketed top-level
/// sequence is accepted and becomes a single node.
Expr parse(std::string_view text);

/// Canonical rendering: every node in parentheses, single spaces around
/// operators, e.g. "(3 * 8 + 1)". parse(render(e)) == e structurally.
std::string render(const Expr& e);

/// render with digit values masked out; two expressions with the same
/// bracket structure and operator sequence share a skeleton.
std::string render_skeleton(const Expr& e);

/// Canonical evaluation trace: depth-first, left-to-right. Within a node,
/// a freshly reduced child folds immediately with the pending value to its
/// left when the linking operator is in the highest tier; lower tiers are
/// deferred and folded tier by tier, left-to-right, once all children are
/// done. Throws OverflowError if any step leaves signed 64-bit range.
Trace evaluate(const Expr& e, const PrecedencePolicy& policy);

/// Same engine as evaluate(), writing into a caller-owned Trace so tight
/// loops (dataset generation, exhaustive checks) can reuse buffers.
void evaluate_into(const Expr& e, const PrecedencePolicy& policy, Trace& out);

/// Value-only oracle on a structurally different route: children are
/// reduced recursively, then the flat sequence splits at lowest-tier
/// operators into maximal highest-tier groups; groups reduce internally
/// first and the group results reduce left-to-right.
int64_t evaluate_reference(const Expr& e, const PrecedencePolicy& policy);

/// Checked application of one operator; throws OverflowError.
int64_t apply_op(int64_t lhs, Op op, int64_t rhs);

} // namespace fsw::expr
