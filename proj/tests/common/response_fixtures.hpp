#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fsw_test {

/// Synthetic model-response styles and the value the extractor must find.
/// std::nullopt marks responses with no usable final integer.
struct ResponseFixture {
    const char* name;
    std::string text;
    std::optional<int64_t> expected;
};

inline const std::vector<ResponseFixture>& response_fixtures() {
    static const std::vector<ResponseFixture> fixtures = {
        {"bare_integer", "27", 27},
        {"bare_integer_newline", "27\n", 27},
        {"pv1_canonical",
         "Steps: [5 + 4 = 9, 3 * 9 = 27, 2 + 9 = 11, 11 * 0 = 0, "
         "27 + 0 = 27, 27]",
         27},
        {"pv2_canonical", "Steps:\n8 + 1 = 9\n3 * 9 = 27\n27", 27},
        {"headerless_steps", "3 + 5 = 8\n8 * 5 = 40\n40", 40},
        {"prose_bold", "The answer is **40**.", 40},
        {"bold_only", "**44**", 44},
        {"final_prefix", "Final: 44", 44},
        {"answer_prefix", "Answer: 12.", 12},
        {"short_prose", "the value is 7", 7},
        {"equals_prefix", "= 44", 44},
        {"result_prose", "Result is 40", 40},
        {"code_fence", "```\n42\n```", 42},
        {"exclamation", "The result is 100!", 100},
        {"pv1_sloppy_spacing", "Steps: [8+1 = 9, 3 *9= 27, 27]", 27},
        {"pv1_final_only", "Steps: [44]", 44},
        {"pv2_trailing_prose",
         "Steps:\n2 + 8 = 10\n10\nHope this helps!", 10},
        {"echoed_shot_then_answer",
         "Expression: (2 + 8)\nSteps: [2 + 8 = 10, 10]", 10},
        {"two_blocks_rethink",
         "Steps: [1 + 1 = 2, 2]\nWait, actually:\n"
         "Steps: [1 + 1 = 2, 2 * 3 = 6, 6]",
         6},
        {"negative_bare", "-5", -5},
        {"negative_prose", "The answer is -5.", -5},
        {"empty", "", std::nullopt},
        {"whitespace_only", "   \n\t ", std::nullopt},
        {"lorem", "lorem ipsum dolor", std::nullopt},
        {"no_digits", "no digits here!", std::nullopt},
        {"inline_guess", "I think it's around 44 or so", 44},
        {"several_numbers", "First I got 10, then 20, final answer 30", 30},
        {"number_first", "30 is my final answer", 30},
        {"large_value", "123456789", 123456789},
        {"int64_max", "9223372036854775807", 9223372036854775807LL},
        {"oversized_token", "99999999999999999999999999", std::nullopt},
        {"oversized_then_fits", "9999999999999999999999 then 42", 42},
        {"pv1_unclosed", "Steps: [5 + 5 = 10, 10", 10},
        {"pv2_missing_final", "Steps:\n5 + 5 = 10", 10},
        {"zero", "0", 0},
        {"negative_zero", "-0", 0},
        {"leading_zeros", "007", 7},
        {"decimal_takes_last_token", "3.14", 14},
        {"approximately", "approximately 40.\n", 40},
        {"double_quoted", "\"44\"", 44},
        {"parenthesized", "(44)", 44},
        {"bracketed", "[44]", 44},
        {"nested_emphasis", "*_44_*", 44},
        {"colon_suffix", "44:", 44},
        {"prose_then_final_line", "Let's compute.\nStep one gives 9.\n27", 27},
        {"restated_final", "I get 27\n27", 27},
        {"crlf_endings", "Steps:\r\n2 + 2 = 4\r\n4\r\n", 4},
        {"variable_equals", "x = 44", 44},
        {"count_suffix", "44 items processed", 44},
        {"blank_lines_around", "\n\n 27 \n\n", 27},
    };
    return fixtures;
}

} // namespace fsw_test
