#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adapt/provider.hpp"
#include "adapt/structure.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return ADAPT_SOURCE_DIR; }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct OracleToken {
    std::size_t byte_offset = 0;
    bool is_line_first = false;
    bool is_block_initial = false;
};

struct StructureFixture {
    std::string name;
    std::string code;
    std::vector<OracleToken> oracle;
    bool curated() const { return name.rfind("curated_", 0) == 0; }
};

/// Snippets under data/structure with their labels.tsv records.
inline std::vector<StructureFixture> load_structure_fixtures() {
    const auto dir = source_dir() / "data" / "structure";
    std::map<std::string, std::vector<OracleToken>> labels;
    std::istringstream tsv(read_file(dir / "labels.tsv"));
    std::string line;
    std::getline(tsv, line);  // header
    while (std::getline(tsv, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string file;
        OracleToken t;
        int first = 0, block = 0;
        std::getline(row, file, '\t');
        row >> t.byte_offset >> first >> block;
        t.is_line_first = first != 0;
        t.is_block_initial = block != 0;
        labels[file].push_back(t);
    }
    std::vector<StructureFixture> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".py") continue;
        StructureFixture f;
        f.name = entry.path().filename().string();
        f.code = read_file(entry.path());
        f.oracle = labels[f.name];
        out.push_back(std::move(f));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

struct LineAgreement {
    std::size_t lines = 0;
    std::size_t agreed = 0;
    std::vector<std::size_t> disagreeing_lines;
};

/// Compares line-first block-initial flags per line. A line counts when either side has
/// a line-first token on it; it agrees when both do and the flags match.
inline LineAgreement line_agreement(const StructureFixture& f, const std::vector<adapt::PositionLabel>& labels) {
    std::map<std::size_t, bool> ours, theirs;
    for (const auto& l : labels) {
        if (l.has_content && l.is_line_first) ours.emplace(l.line_index, l.is_block_initial);
    }
    for (const auto& t : f.oracle) {
        if (!t.is_line_first) continue;
        const auto line = static_cast<std::size_t>(
            std::count(f.code.begin(), f.code.begin() + static_cast<long>(t.byte_offset), '\n'));
        theirs.emplace(line, t.is_block_initial);
    }
    std::map<std::size_t, int> all;
    for (auto& [k, _] : ours) all[k];
    for (auto& [k, _] : theirs) all[k];
    LineAgreement out;
    for (auto& [line, _] : all) {
        ++out.lines;
        const auto a = ours.find(line);
        const auto b = theirs.find(line);
        if (a != ours.end() && b != theirs.end() && a->second == b->second) {
            ++out.agreed;
        } else {
            out.disagreeing_lines.push_back(line);
        }
    }
    return out;
}

/// Provider whose logits come from a callback over the full context.
class FunctionModel final : public adapt::LogitsProvider {
public:
    using Fn = std::function<std::vector<double>(std::span<const adapt::TokenId>)>;

    FunctionModel(adapt::Vocabulary vocab, Fn fn) : vocab_(std::move(vocab)), fn_(std::move(fn)) {}

    const adapt::Vocabulary& vocabulary() const override { return vocab_; }
    adapt::LogitVector next_logits(std::span<const adapt::TokenId> context) const override {
        return adapt::LogitVector(fn_(context));
    }
    std::vector<adapt::TokenId> tokenize(std::string_view text) const override {
        return vocab_.tokenize_longest_match(text);
    }

private:
    adapt::Vocabulary vocab_;
    Fn fn_;
};

}  // namespace testsupport
