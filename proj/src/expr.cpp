#include "fsw/expr.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

namespace fsw::expr {

int Expr::depth() const {
    if (is_leaf()) {
        return 0;
    }
    int d = 0;
    for (const Expr& c : children) {
        d = std::max(d, c.depth());
    }
    return d + 1;
}

Expr Expr::leaf(int digit) {
    if (digit < 0 || digit > 9) {
        throw std::invalid_argument("leaf value must be a digit 0-9");
    }
    Expr e;
    e.value = digit;
    return e;
}

Expr Expr::node(std::vector<Expr> children, std::vector<Op> ops) {
    if (children.empty()) {
        throw std::invalid_argument("node requires at least one child");
    }
    if (ops.size() + 1 != children.size()) {
        throw std::invalid_argument("node requires children.size()-1 operators");
    }
    Expr e;
    e.children = std::move(children);
    e.ops = std::move(ops);
    return e;
}

PrecedencePolicy::PrecedencePolicy(std::vector<std::vector<Op>> tiers,
                                   std::string name)
    : name_(std::move(name)) {
    int seen[2] = {0, 0};
    tier_count_ = static_cast<int>(tiers.size());
    for (size_t t = 0; t < tiers.size(); ++t) {
        for (Op op : tiers[t]) {
            const int idx = op == Op::Add ? 0 : 1;
            tier_of_[idx] = static_cast<int>(t);
            ++seen[idx];
        }
    }
    if (seen[0] != 1 || seen[1] != 1) {
        throw std::invalid_argument(
            "policy must place each operator in exactly one tier");
    }
}

const PrecedencePolicy& PrecedencePolicy::non_standard() {
    static const PrecedencePolicy p({{Op::Add}, {Op::Mul}}, "nonstandard");
    return p;
}

const PrecedencePolicy& PrecedencePolicy::standard() {
    static const PrecedencePolicy p({{Op::Mul}, {Op::Add}}, "standard");
    return p;
}

const PrecedencePolicy& PrecedencePolicy::by_name(const std::string& name) {
    if (name == "nonstandard") {
        return non_standard();
    }
    if (name == "standard") {
        return standard();
    }
    throw std::invalid_argument("unknown precedence policy: " + name);
}

std::string to_string(const Step& step) {
    std::string out = std::to_string(step.lhs);
    out += ' ';
    out += op_char(step.op);
    out += ' ';
    out += std::to_string(step.rhs);
    out += " = ";
    out += std::to_string(step.result);
    return out;
}

namespace {

bool scan_int(std::string_view text, size_t& pos, int64_t& out) {
    size_t p = pos;
    bool neg = false;
    if (p < text.size() && (text[p] == '-' || text[p] == '+')) {
        neg = text[p] == '-';
        ++p;
    }
    if (p >= text.size() || !std::isdigit(static_cast<unsigned char>(text[p]))) {
        return false;
    }
    int64_t v = 0;
    while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p]))) {
        v = v * 10 + (text[p] - '0');
        ++p;
    }
    out = neg ? -v : v;
    pos = p;
    return true;
}

void skip_spaces(std::string_view text, size_t& pos) {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos]))) {
        ++pos;
    }
}

} // namespace

bool parse_step(std::string_view text, Step& out) {
    size_t pos = 0;
    Step s;
    skip_spaces(text, pos);
    if (!scan_int(text, pos, s.lhs)) {
        return false;
    }
    skip_spaces(text, pos);
    if (pos >= text.size()) {
        return false;
    }
    if (text[pos] == '+') {
        s.op = Op::Add;
    } else if (text[pos] == '*') {
        s.op = Op::Mul;
    } else {
        return false;
    }
    ++pos;
    skip_spaces(text, pos);
    if (!scan_int(text, pos, s.rhs)) {
        return false;
    }
    skip_spaces(text, pos);
    if (pos >= text.size() || text[pos] != '=') {
        return false;
    }
    ++pos;
    skip_spaces(text, pos);
    if (!scan_int(text, pos, s.result)) {
        return false;
    }
    skip_spaces(text, pos);
    if (pos != text.size()) {
        return false;
    }
    out = s;
    return true;
}

SyntaxError::SyntaxError(const std::string& reason, size_t position)
    : std::runtime_error(reason + " at position " + std::to_string(position)),
      position_(position) {}

OverflowError::OverflowError(int64_t lhs, Op op, int64_t rhs)
    : std::runtime_error("64-bit overflow applying " + std::to_string(lhs) +
                         ' ' + op_char(op) + ' ' + std::to_string(rhs)) {}

namespace {

class ExprParser {
public:
    explicit ExprParser(std::string_view text) : text_(text) {}

    Expr parse_top() {
        auto [children, ops] = parse_sequence();
        skip_ws();
        if (pos_ != text_.size()) {
            throw SyntaxError("trailing input", pos_);
        }
        if (children.size() == 1) {
            return std::move(children.front());
        }
        return Expr::node(std::move(children), std::move(ops));
    }

private:
    void skip_ws() { skip_spaces(text_, pos_); }

    bool at_end() const { return pos_ >= text_.size(); }

    Expr parse_term() {
        skip_ws();
        if (at_end() || text_[pos_] == ')') {
            throw SyntaxError("empty operand slot", pos_);
        }
        const char c = text_[pos_];
        if (c >= '0' && c <= '9') {
            ++pos_;
            return Expr::leaf(c - '0');
        }
        if (c == '(') {
            ++pos_;
            auto [children, ops] = parse_sequence();
            skip_ws();
            if (at_end() || text_[pos_] != ')') {
                throw SyntaxError("unbalanced bracket, expected ')'", pos_);
            }
            ++pos_;
            return Expr::node(std::move(children), std::move(ops));
        }
        throw SyntaxError(std::string("illegal token '") + c + "'", pos_);
    }

    std::pair<std::vector<Expr>, std::vector<Op>> parse_sequence() {
        std::vector<Expr> children;
        std::vector<Op> ops;
        children.push_back(parse_term());
        while (true) {
            skip_ws();
            if (at_end() || text_[pos_] == ')') {
                break;
            }
            const char c = text_[pos_];
            if (c == '+') {
                ops.push_back(Op::Add);
            } else if (c == '*') {
                ops.push_back(Op::Mul);
            } else {
                break; // let the caller report trailing input / bad bracket
            }
            ++pos_;
            children.push_back(parse_term());
        }
        return {std::move(children), std::move(ops)};
    }

    std::string_view text_;
    size_t pos_ = 0;
};

} // namespace

Expr parse(std::string_view text) {
    return ExprParser(text).parse_top();
}

namespace {

void render_into(const Expr& e, std::string& out, bool mask_digits) {
    if (e.is_leaf()) {
        out.push_back(mask_digits ? '#' : static_cast<char>('0' + e.value));
        return;
    }
    out.push_back('(');
    render_into(e.children[0], out, mask_digits);
    for (size_t i = 1; i < e.children.size(); ++i) {
        out.push_back(' ');
        out.push_back(op_char(e.ops[i - 1]));
        out.push_back(' ');
        render_into(e.children[i], out, mask_digits);
    }
    out.push_back(')');
}

} // namespace

std::string render(const Expr& e) {
    std::string out;
    render_into(e, out, false);
    return out;
}

std::string render_skeleton(const Expr& e) {
    std::string out;
    render_into(e, out, true);
    return out;
}

int64_t apply_op(int64_t lhs, Op op, int64_t rhs) {
    int64_t r = 0;
    const bool overflow = op == Op::Add ? __builtin_add_overflow(lhs, rhs, &r)
                                        : __builtin_mul_overflow(lhs, rhs, &r);
    if (overflow) {
        throw OverflowError(lhs, op, rhs);
    }
    return r;
}

namespace {

// Shared frame stacks, reused across calls to keep tight evaluation loops
// allocation-free. eval_node never re-enters evaluate_into, so per-thread
// reuse is safe.
struct EvalScratch {
    std::vector<int64_t> values;
    std::vector<Op> deferred;
};

EvalScratch& eval_scratch() {
    thread_local EvalScratch s;
    return s;
}

void eval_node(const Expr& e, const PrecedencePolicy& policy,
               std::vector<Step>& steps, EvalScratch& s) {
    if (e.is_leaf()) {
        s.values.push_back(e.value);
        return;
    }
    const size_t vbase = s.values.size();
    const size_t obase = s.deferred.size();
    for (size_t i = 0; i < e.children.size(); ++i) {
        eval_node(e.children[i], policy, steps, s);
        if (i == 0) {
            continue;
        }
        const Op op = e.ops[i - 1];
        if (policy.tier_of(op) == 0) {
            const int64_t rhs = s.values.back();
            s.values.pop_back();
            const int64_t lhs = s.values.back();
            const int64_t r = apply_op(lhs, op, rhs);
            steps.push_back({lhs, op, rhs, r});
            s.values.back() = r;
        } else {
            s.deferred.push_back(op);
        }
    }
    // Remaining frame: values[vbase..], deferred[obase..]; operator j joins
    // values j and j+1. Fold tier by tier, left-to-right.
    for (int tier = 1; tier < policy.tier_count(); ++tier) {
        size_t oi = obase;
        while (oi < s.deferred.size()) {
            if (policy.tier_of(s.deferred[oi]) != tier) {
                ++oi;
                continue;
            }
            const size_t vi = vbase + (oi - obase);
            const int64_t lhs = s.values[vi];
            const int64_t rhs = s.values[vi + 1];
            const int64_t r = apply_op(lhs, s.deferred[oi], rhs);
            steps.push_back({lhs, s.deferred[oi], rhs, r});
            s.values[vi] = r;
            s.values.erase(s.values.begin() + static_cast<ptrdiff_t>(vi) + 1);
            s.deferred.erase(s.deferred.begin() + static_cast<ptrdiff_t>(oi));
        }
    }
}

} // namespace

void evaluate_into(const Expr& e, const PrecedencePolicy& policy, Trace& out) {
    out.steps.clear();
    auto& s = eval_scratch();
    s.values.clear();
    s.deferred.clear();
    eval_node(e, policy, out.steps, s);
    out.final_value = s.values.back();
}

Trace evaluate(const Expr& e, const PrecedencePolicy& policy) {
    Trace t;
    evaluate_into(e, policy, t);
    return t;
}

int64_t evaluate_reference(const Expr& e, const PrecedencePolicy& policy) {
    if (e.is_leaf()) {
        return e.value;
    }
    // Group-and-combine route: maximal runs joined by highest-tier operators
    // reduce first; run results then combine left-to-right across the
    // lower-tier boundaries.
    int64_t group = evaluate_reference(e.children[0], policy);
    int64_t combined = 0;
    Op boundary = Op::Add;
    bool have_combined = false;
    for (size_t i = 0; i < e.ops.size(); ++i) {
        const int64_t v = evaluate_reference(e.children[i + 1], policy);
        if (policy.tier_of(e.ops[i]) == 0) {
            group = apply_op(group, e.ops[i], v);
        } else {
            if (have_combined) {
                combined = apply_op(combined, boundary, group);
            } else {
                combined = group;
                have_combined = true;
            }
            boundary = e.ops[i];
            group = v;
        }
    }
    if (!have_combined) {
        return group;
    }
    return apply_op(combined, boundary, group);
}

} // namespace fsw::expr
