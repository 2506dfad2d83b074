#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adapt/types.hpp"

namespace adapt {

/// Bijection between token ids and token text. EOS is a reserved entry whose text is empty
/// when detokenized.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::string> tokens, TokenId eos_id);

    std::size_t size() const { return tokens_.size(); }
    TokenId eos_id() const { return eos_id_; }
    const std::string& text(TokenId id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Returns -1 when the string is not a vocabulary entry.
    TokenId find(std::string_view token) const;
    bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }

    /// Concatenated token text; EOS contributes nothing. Unknown ids throw detokenization-error.
    std::string detokenize(std::span<const TokenId> ids) const;

    /// Greedy longest-match segmentation. Throws invalid-input when some suffix cannot be matched.
    std::vector<TokenId> tokenize_longest_match(std::string_view text) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId eos_id_ = -1;
    std::size_t max_token_len_ = 0;
};

/// Backend contract: anything that can score the next token given a context.
class LogitsProvider {
public:
    virtual ~LogitsProvider() = default;

    virtual const Vocabulary& vocabulary() const = 0;
    virtual LogitVector next_logits(std::span<const TokenId> context) const = 0;
    virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;

    virtual std::string detokenize(std::span<const TokenId> ids) const {
        return vocabulary().detokenize(ids);
    }
    TokenId eos_id() const { return vocabulary().eos_id(); }
};

}  // namespace adapt
