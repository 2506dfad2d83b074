#include "adapt/provider.hpp"

#include <algorithm>

#include "adapt/error.hpp"

namespace adapt {

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenId eos_id)
    : tokens_(std::move(tokens)), eos_id_(eos_id) {
    if (tokens_.empty()) fail(ErrorKind::InvalidInput, "empty vocabulary");
    if (!contains(eos_id_)) fail(ErrorKind::InvalidInput, "EOS id outside vocabulary");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto id = static_cast<TokenId>(i);
        if (id != eos_id_ && tokens_[i].empty()) {
            fail(ErrorKind::InvalidInput, "empty token text at id " + std::to_string(i));
        }
        if (!index_.emplace(tokens_[i], id).second) {
            fail(ErrorKind::InvalidInput, "duplicate token text '" + tokens_[i] + "'");
        }
        if (id != eos_id_) max_token_len_ = std::max(max_token_len_, tokens_[i].size());
    }
}

const std::string& Vocabulary::text(TokenId id) const {
    static const std::string empty;
    if (id == eos_id_) return empty;
    return tokens_.at(static_cast<std::size_t>(id));
}

TokenId Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
    std::string out;
    for (auto id : ids) {
        if (!contains(id)) {
            fail(ErrorKind::DetokenizationError, "token id " + std::to_string(id) + " outside vocabulary");
        }
        out += text(id);
    }
    return out;
}

std::vector<TokenId> Vocabulary::tokenize_longest_match(std::string_view text) const {
    std::vector<TokenId> ids;
    std::size_t pos = 0;
    std::string probe;
    while (pos < text.size()) {
        TokenId match = -1;
        std::size_t len = std::min(max_token_len_, text.size() - pos);
        for (; len > 0; --len) {
            probe.assign(text.substr(pos, len));
            auto it = index_.find(probe);
            if (it != index_.end() && it->second != eos_id_) {
                match = it->second;
                break;
            }
        }
        if (match < 0) {
            fail(ErrorKind::InvalidInput,
                 "text at byte " + std::to_string(pos) + " is not covered by the vocabulary");
        }
        ids.push_back(match);
        pos += len;
    }
    return ids;
}

}  // namespace adapt
