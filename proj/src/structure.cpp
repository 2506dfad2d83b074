#include "adapt/structure.hpp"

#include "adapt/error.hpp"

namespace adapt {
namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

StructureTracker StructureTracker::init(std::string_view prompt, TrackerOptions options) {
    StructureTracker tracker;
    tracker.options_ = options;
    tracker.initialized_ = true;
    tracker.feed(prompt);

    if (options.prompt_docstring_opens_block && !tracker.logical_open_) {
        const auto& doc = tracker.prev_;
        const auto& header = tracker.prev_prev_;
        tracker.primed_block_ = doc.valid && doc.string_only && header.valid &&
                                header.ends_with_colon && doc.indent > header.indent;
    }
    return tracker;
}

bool StructureTracker::is_block_initial() const {
    return initialized_ && rule_holds();
}

bool StructureTracker::rule_holds() const {
    if (line_has_content_ || continuation_line_) return false;
    if (primed_block_) return true;
    if (!prev_.valid) return false;
    if (prev_.ends_with_colon) return true;
    return leading_width_ > prev_.indent;
}

PositionLabel StructureTracker::feed(std::string_view fragment) {
    PositionLabel label;
    label.byte_offset = bytes_consumed_;

    for (char c : fragment) {
        if (!label.has_content && !is_space(c)) {
            label.has_content = true;
            label.is_line_first = at_line_start();
            label.is_block_initial = label.is_line_first && rule_holds();
            label.line_index = line_index_;
            // A fragment that continues a word keeps that word's position.
            label.position_in_line = after_space_ ? tokens_on_line_ : tokens_on_line_ - 1;
        }
        consume(c);
    }
    if (!label.has_content) {
        label.line_index = line_index_;
        label.position_in_line = tokens_on_line_;
    }
    bytes_consumed_ += fragment.size();
    return label;
}

void StructureTracker::consume(char c) {
    if (c == '\n') {
        end_physical_line();
        return;
    }
    line_buffer_.push_back(c);

    const bool ws = is_space(c);
    if (ws && at_line_start()) {
        if (c == ' ') {
            leading_width_ += 1;
        } else if (c == '\t') {
            leading_width_ = (leading_width_ / options_.tab_width + 1) * options_.tab_width;
        } else if (c == '\f') {
            leading_width_ = 0;
        }
        return;
    }
    if (!ws) {
        line_has_content_ = true;
        if (after_space_) ++tokens_on_line_;
    }
    after_space_ = ws;

    if (in_comment_) return;

    if (quote_run_ > 0) {
        if (c == quote_char_) {
            if (++quote_run_ == 3) {
                string_ = StringState{.active = true, .triple = true, .quote = quote_char_};
                quote_run_ = 0;
            }
            return;
        }
        resolve_quote_run(c);
    }

    if (string_.active) {
        if (string_.escape) {
            string_.escape = false;
            return;
        }
        if (c == '\\') {
            string_.escape = true;
            string_.closing_run = 0;
            return;
        }
        if (c == string_.quote) {
            if (!string_.triple) {
                string_.active = false;
            } else if (++string_.closing_run == 3) {
                string_ = StringState{};
            }
            return;
        }
        string_.closing_run = 0;
        return;
    }

    if (ws) return;
    if (c == '#') {
        in_comment_ = true;
        return;
    }
    if (c == '"' || c == '\'') {
        on_code_char(c);
        quote_char_ = c;
        quote_run_ = 1;
        return;
    }
    on_code_char(c);
}

// A run of one quote opens a single-quoted string whose first character is `next`;
// a run of two is an empty string literal.
void StructureTracker::resolve_quote_run(char next) {
    const int run = quote_run_;
    quote_run_ = 0;
    if (run == 1 && next != '\n') {
        string_ = StringState{.active = true, .triple = false, .quote = quote_char_};
    }
}

void StructureTracker::on_code_char(char c) {
    if (!logical_open_ && !continuation_line_) start_logical_line();
    last_significant_ = c;
    if (c != '"' && c != '\'') logical_string_only_ = false;
}

void StructureTracker::start_logical_line() {
    logical_open_ = true;
    logical_indent_ = leading_width_;
    logical_string_only_ = true;
    last_significant_ = 0;
    primed_block_ = false;

    if (leading_width_ > indent_stack_.back()) {
        indent_stack_.push_back(leading_width_);
    } else {
        while (indent_stack_.back() > leading_width_) indent_stack_.pop_back();
        if (indent_stack_.back() < leading_width_) indent_stack_.push_back(leading_width_);
    }
}

void StructureTracker::end_physical_line() {
    if (quote_run_ > 0) resolve_quote_run('\n');
    if (string_.active && !string_.triple) string_ = StringState{};  // unterminated literal
    string_.escape = false;
    in_comment_ = false;

    const bool in_triple = string_.active && string_.triple;
    if (!in_triple && logical_open_) {
        prev_prev_ = prev_;
        prev_ = LogicalLineInfo{.valid = true,
                                .indent = logical_indent_,
                                .ends_with_colon = last_significant_ == ':',
                                .string_only = logical_string_only_};
        logical_open_ = false;
    }

    ++line_index_;
    line_buffer_.clear();
    leading_width_ = 0;
    line_has_content_ = false;
    tokens_on_line_ = 0;
    after_space_ = true;
    continuation_line_ = in_triple;
}

std::vector<PositionLabel> label_positions(std::string_view code,
                                           const std::vector<std::string>& fragments,
                                           TrackerOptions options) {
    std::size_t total = 0;
    for (const auto& f : fragments) {
        if (code.substr(total, f.size()) != f) {
            fail(ErrorKind::InvalidInput, "segmentation does not concatenate to the code text");
        }
        total += f.size();
    }
    if (total != code.size()) {
        fail(ErrorKind::InvalidInput, "segmentation does not cover the code text");
    }

    auto tracker = StructureTracker::init("", options);
    std::vector<PositionLabel> labels;
    labels.reserve(fragments.size());
    for (const auto& f : fragments) labels.push_back(tracker.feed(f));
    return labels;
}

std::vector<std::string> split_chars(std::string_view text) {
    std::vector<std::string> out;
    out.reserve(text.size());
    for (char c : text) out.emplace_back(1, c);
    return out;
}

std::vector<std::string> split_whitespace_runs(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const bool ws = is_space(text[i]);
        std::size_t j = i + 1;
        while (j < text.size() && is_space(text[j]) == ws) ++j;
        out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace adapt
