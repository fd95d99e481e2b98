#include "fsw/analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <string_view>
#include <vector>

namespace fsw::analyzer {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

/// Full-match parse of an optionally signed integer.
bool parse_bare_int(std::string_view s, int64_t& out) {
    s = trim(s);
    if (s.empty()) {
        return false;
    }
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    const auto result = std::from_chars(first, last, out);
    return result.ec == std::errc{} && result.ptr == last;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    while (start <= text.size()) {
        const size_t eol = text.find('\n', start);
        if (eol == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, eol - start));
        start = eol + 1;
    }
    return lines;
}

bool is_emphasis_or_punct(char c) {
    switch (c) {
    case '*': case '_': case '`': case '.': case ',': case '!': case ':':
    case ';': case '"': case '\'': case '(': case ')': case '[': case ']':
        return true;
    default:
        return false;
    }
}

std::string_view strip_decoration(std::string_view s) {
    s = trim(s);
    while (!s.empty() && is_emphasis_or_punct(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_emphasis_or_punct(s.back())) {
        s.remove_suffix(1);
    }
    return trim(s);
}

std::optional<expr::Trace> parse_pv1_list(std::string_view inner) {
    expr::Trace trace;
    std::vector<std::string_view> elements;
    size_t start = 0;
    while (start <= inner.size()) {
        const size_t comma = inner.find(',', start);
        if (comma == std::string_view::npos) {
            elements.push_back(inner.substr(start));
            break;
        }
        elements.push_back(inner.substr(start, comma - start));
        start = comma + 1;
    }
    if (elements.empty()) {
        return std::nullopt;
    }
    if (!parse_bare_int(elements.back(), trace.final_value)) {
        return std::nullopt;
    }
    for (size_t i = 0; i + 1 < elements.size(); ++i) {
        expr::Step step;
        if (!expr::parse_step(elements[i], step)) {
            return std::nullopt;
        }
        trace.steps.push_back(step);
    }
    return trace;
}

std::optional<expr::Trace> parse_pv2_lines(std::string_view after_header) {
    expr::Trace trace;
    for (std::string_view line : split_lines(after_header)) {
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        expr::Step step;
        if (expr::parse_step(line, step)) {
            trace.steps.push_back(step);
            continue;
        }
        if (parse_bare_int(line, trace.final_value)) {
            return trace;
        }
        return std::nullopt;
    }
    return std::nullopt; // no terminal bare value
}

} // namespace

std::optional<expr::Trace> parse_steps_block(const std::string& text) {
    const std::string_view sv(text);
    const size_t header = sv.rfind("Steps:");
    if (header == std::string_view::npos) {
        return std::nullopt;
    }
    std::string_view rest = sv.substr(header + 6);
    // PV1 when the next token opens a bracketed list, PV2 otherwise.
    const std::string_view peek = trim(rest.substr(0, rest.find('\n')));
    if (!peek.empty() && peek.front() == '[') {
        const size_t open = rest.find('[');
        const size_t close = rest.find(']', open);
        if (close == std::string_view::npos) {
            return std::nullopt;
        }
        return parse_pv1_list(rest.substr(open + 1, close - open - 1));
    }
    const size_t eol = rest.find('\n');
    if (eol == std::string_view::npos) {
        return std::nullopt;
    }
    return parse_pv2_lines(rest.substr(eol + 1));
}

std::optional<ParsedShot> parse_shot_block(const std::string& text) {
    static const std::string marker = "Expression: ";
    const size_t pos = text.find(marker);
    if (pos == std::string::npos) {
        return std::nullopt;
    }
    const size_t start = pos + marker.size();
    const size_t eol = text.find('\n', start);
    if (eol == std::string::npos) {
        return std::nullopt;
    }
    ParsedShot shot;
    shot.expression = std::string(trim(std::string_view(text).substr(
        start, eol - start)));
    auto trace = parse_steps_block(text.substr(eol + 1));
    if (!trace) {
        return std::nullopt;
    }
    shot.trace = std::move(*trace);
    return shot;
}

std::optional<int64_t> extract_final(const std::string& response) {
    // (1) structured Steps: block
    if (const auto trace = parse_steps_block(response)) {
        return trace->final_value;
    }
    // (2) last line that is solely an integer after decoration stripping
    const auto lines = split_lines(response);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const std::string_view stripped = strip_decoration(*it);
        int64_t v = 0;
        if (parse_bare_int(stripped, v)) {
            return v;
        }
    }
    // (3) last integer token anywhere
    std::optional<int64_t> last;
    const std::string_view sv(response);
    size_t i = 0;
    while (i < sv.size()) {
        if (!is_digit(sv[i]) &&
            !(sv[i] == '-' && i + 1 < sv.size() && is_digit(sv[i + 1]))) {
            ++i;
            continue;
        }
        size_t start = i;
        if (sv[i] == '-') {
            // a minus glued to a preceding word or number is not a sign
            if (start > 0 && (is_digit(sv[start - 1]) ||
                              std::isalpha(static_cast<unsigned char>(
                                  sv[start - 1])))) {
                ++i;
                continue;
            }
            ++i;
        }
        while (i < sv.size() && is_digit(sv[i])) {
            ++i;
        }
        int64_t v = 0;
        if (parse_bare_int(sv.substr(start, i - start), v)) {
            last = v;
        }
    }
    return last;
}

const char* failure_mode_name(FailureMode mode) {
    switch (mode) {
    case FailureMode::none: return "none";
    case FailureMode::wrong_value: return "wrong_value";
    case FailureMode::unparseable: return "unparseable";
    case FailureMode::empty: return "empty";
    }
    return "unknown";
}

GradedAnswer grade(const std::string& response,
                   const datagen::DatasetRecord& truth) {
    GradedAnswer g;
    g.raw = response;
    g.extracted_final = extract_final(response);
    if (g.extracted_final.has_value()) {
        g.correct = *g.extracted_final == truth.final_value;
        g.failure_mode = g.correct ? FailureMode::none : FailureMode::wrong_value;
    } else {
        g.correct = false;
        g.failure_mode = trim(response).empty() ? FailureMode::empty
                                                : FailureMode::unparseable;
    }
    return g;
}

StepDiagnostics diagnose_steps(const std::string& response) {
    StepDiagnostics d;
    const auto trace = parse_steps_block(response);
    if (!trace) {
        return d;
    }
    d.steps_present = true;
    d.arithmetic_consistent = true;
    for (const expr::Step& s : trace->steps) {
        try {
            if (expr::apply_op(s.lhs, s.op, s.rhs) != s.result) {
                d.arithmetic_consistent = false;
                break;
            }
        } catch (const expr::OverflowError&) {
            d.arithmetic_consistent = false;
            break;
        }
    }
    d.matches_final = trace->steps.empty() ||
                      trace->steps.back().result == trace->final_value;
    return d;
}

} // namespace fsw::analyzer
