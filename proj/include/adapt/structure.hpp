#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace adapt {

struct TrackerOptions {
    /// Count the first statement after a prompt-level docstring as block-initial when that
    /// docstring is the only statement of a block the prompt opened (HumanEval-style prompts).
    /// When false, labels follow strict INDENT semantics.
    bool prompt_docstring_opens_block = true;
    int tab_width = 8;
};

/// Label attached to one token-text fragment.
struct PositionLabel {
    bool has_content = false;     // fragment holds at least one non-whitespace character
    bool is_line_first = false;   // first content token of a code line
    bool is_block_initial = false;
    std::size_t line_index = 0;
    std::size_t position_in_line = 0;  // ordinal of the whitespace-separated word the token starts or continues
    std::size_t byte_offset = 0;       // start of the fragment in the fed stream
};

/// Streaming detector of line starts and block-initial positions in indentation-delimited
/// source. Fed one decoded token fragment at a time.
///
/// A position is block-initial when the current line holds only whitespace and either the
/// previous logical line ends with ':' outside strings and comments, or the indentation
/// emitted so far exceeds the previous logical line's indentation. Blank and comment-only
/// lines are transparent. Bracketed multi-line expressions and backslash continuations are
/// not tracked.
class StructureTracker {
public:
    StructureTracker() = default;  // not initialized; see init()

    static StructureTracker init(std::string_view prompt, TrackerOptions options = {});

    bool initialized() const { return initialized_; }

    /// Consumes a fragment and returns its label.
    PositionLabel feed(std::string_view fragment);

    /// Decision for the next sampling step.
    bool is_block_initial() const;

    /// True when the current line holds only whitespace and is not inside a multi-line string.
    bool at_line_start() const { return !line_has_content_ && !continuation_line_; }

    const std::vector<int>& indent_stack() const { return indent_stack_; }
    std::size_t line_index() const { return line_index_; }
    /// Whitespace-separated content groups started on the current line.
    std::size_t content_tokens_on_line() const { return tokens_on_line_; }
    int current_indent() const { return leading_width_; }
    std::string_view current_line() const { return line_buffer_; }
    std::size_t bytes_consumed() const { return bytes_consumed_; }
    bool in_string() const { return string_.active || quote_run_ > 0; }
    bool in_comment() const { return in_comment_; }

private:
    struct LogicalLineInfo {
        bool valid = false;
        int indent = 0;
        bool ends_with_colon = false;
        bool string_only = false;
    };

    struct StringState {
        bool active = false;
        bool triple = false;
        char quote = 0;
        bool escape = false;
        int closing_run = 0;
    };

    bool rule_holds() const;
    void consume(char c);
    void on_code_char(char c);
    void start_logical_line();
    void end_physical_line();
    void resolve_quote_run(char next);

    TrackerOptions options_{};
    bool initialized_ = false;

    std::vector<int> indent_stack_{0};
    std::string line_buffer_;
    std::size_t line_index_ = 0;
    std::size_t bytes_consumed_ = 0;

    int leading_width_ = 0;
    bool line_has_content_ = false;
    bool continuation_line_ = false;  // line began inside a triple-quoted string
    std::size_t tokens_on_line_ = 0;
    bool after_space_ = true;  // previous character on the line was whitespace

    // current logical line
    bool logical_open_ = false;
    int logical_indent_ = 0;
    char last_significant_ = 0;
    bool logical_string_only_ = true;

    LogicalLineInfo prev_;
    LogicalLineInfo prev_prev_;
    bool primed_block_ = false;

    StringState string_;
    char quote_char_ = 0;
    int quote_run_ = 0;
    bool in_comment_ = false;
};

/// Offline labeling with the streaming logic. Fragments must concatenate to `code`.
std::vector<PositionLabel> label_positions(std::string_view code,
                                           const std::vector<std::string>& fragments,
                                           TrackerOptions options = {});

/// Segmentation helpers used by tests and analysis tooling.
std::vector<std::string> split_chars(std::string_view text);
/// Alternating runs of whitespace and non-whitespace characters.
std::vector<std::string> split_whitespace_runs(std::string_view text);

}  // namespace adapt
