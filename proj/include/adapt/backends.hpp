#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adapt/provider.hpp"
#include "adapt/types.hpp"

namespace httplib {
class Server;
}

namespace adapt {

inline constexpr std::string_view kEosText = "<|endoftext|>";

// ---------------------------------------------------------------------------
// Scripted model

/// Replays one logit vector per generation step, then the fallback. The step index is the
/// context length minus `prompt_length`.
class ScriptedModel final : public LogitsProvider {
public:
    ScriptedModel(Vocabulary vocab, std::vector<LogitVector> steps, LogitVector fallback,
                  std::size_t prompt_length = 0);

    /// JSON: {"tokens": [..], "eos_id": n, "steps": [[..], ..], "fallback": [..],
    ///        "prompt_length": n}
    static ScriptedModel from_json(std::string_view json_text);
    static ScriptedModel load(const std::filesystem::path& path);

    const Vocabulary& vocabulary() const override { return vocab_; }
    LogitVector next_logits(std::span<const TokenId> context) const override;
    std::vector<TokenId> tokenize(std::string_view text) const override {
        return vocab_.tokenize_longest_match(text);
    }

private:
    Vocabulary vocab_;
    std::vector<LogitVector> steps_;
    LogitVector fallback_;
    std::size_t prompt_length_;
};

// ---------------------------------------------------------------------------
// N-gram model

enum class NGramUnit : std::uint8_t { Char = 0, Word = 1 };

struct NGramOptions {
    std::size_t order = 6;
    double alpha = 0.01;
    NGramUnit unit = NGramUnit::Char;
    /// Unseen contexts fall back to their longest seen suffix. When false, an unseen context
    /// yields the uniform distribution that additive smoothing gives zero counts.
    bool backoff = true;
};

/// Smoothed n-gram model over characters (default) or whitespace-aware word pieces.
/// Documents in a training corpus are separated by lines holding only "<|endoftext|>";
/// EOS is appended after every document.
class NGramModel final : public LogitsProvider {
public:
    static NGramModel train(std::string_view corpus, const NGramOptions& options);

    const Vocabulary& vocabulary() const override { return vocab_; }
    LogitVector next_logits(std::span<const TokenId> context) const override;
    std::vector<TokenId> tokenize(std::string_view text) const override;

    /// Smoothed conditional distribution of the next token.
    std::vector<double> conditional(std::span<const TokenId> context) const;

    const NGramOptions& options() const { return options_; }
    std::size_t context_count() const { return table_.size(); }

    std::string serialize() const;
    static NGramModel deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static NGramModel load(const std::filesystem::path& path);

    friend bool operator==(const NGramModel& a, const NGramModel& b);

private:
    struct ContextCounts {
        std::uint64_t total = 0;
        std::vector<std::pair<TokenId, std::uint64_t>> next;  // sorted by id
    };

    NGramModel() = default;
    const ContextCounts* lookup(std::span<const TokenId> context) const;
    static std::string key_of(std::span<const TokenId> ids);

    NGramOptions options_;
    Vocabulary vocab_;
    std::unordered_map<std::string, ContextCounts> table_;
};

/// Splits a corpus on lines holding only the EOS marker; empty documents are dropped.
std::vector<std::string_view> split_documents(std::string_view corpus);

/// Splits text into word-model pieces: identifier runs, a newline with its following
/// indentation, other whitespace runs, and single punctuation characters.
std::vector<std::string> split_word_pieces(std::string_view text);

// ---------------------------------------------------------------------------
// Remote backend

struct RemoteOptions {
    std::string endpoint;  // e.g. "http://127.0.0.1:8080"
    std::optional<std::string> model;
    std::optional<std::string> auth_token;
    std::chrono::milliseconds timeout{10000};
    int max_retries = 3;
    std::chrono::milliseconds retry_backoff{100};
    std::size_t max_in_flight = 8;
};

/// Client for the logits wire protocol:
///   POST /v1/logits {context_ids, model?} -> {logits, vocab_size}
///   GET  /v1/vocab                        -> {tokens, eos_id?}
/// Errors from the server carry {code, message}.
class RemoteBackend final : public LogitsProvider {
public:
    explicit RemoteBackend(RemoteOptions options);
    ~RemoteBackend() override;

    const Vocabulary& vocabulary() const override;
    LogitVector next_logits(std::span<const TokenId> context) const override;
    std::vector<TokenId> tokenize(std::string_view text) const override {
        return vocabulary().tokenize_longest_match(text);
    }

    const RemoteOptions& options() const { return options_; }

private:
    std::string request(const std::string& method, const std::string& path,
                        const std::string& body) const;

    RemoteOptions options_;
    mutable std::once_flag vocab_once_;
    mutable std::unique_ptr<Vocabulary> vocab_;

    mutable std::mutex slots_mutex_;
    mutable std::condition_variable slots_cv_;
    mutable std::size_t in_flight_ = 0;
};

LogitVector remote_next_logits(const RemoteBackend& backend, std::span<const TokenId> context);

/// Serves any provider over the wire protocol. Blocks in listen(); stop() from another thread.
class LogitsServer {
public:
    explicit LogitsServer(const LogitsProvider& model);
    ~LogitsServer();

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    void listen();
    void stop();

private:
    const LogitsProvider& model_;
    std::unique_ptr<httplib::Server> server_;
};

// ---------------------------------------------------------------------------

/// Backend spec strings: "scripted:<file>", "ngram:<file>", "remote:<url>".
std::unique_ptr<LogitsProvider> open_backend(std::string_view spec,
                                             std::optional<std::string> auth_token = {});

}  // namespace adapt
