#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapt/provider.hpp"
#include "adapt/structure.hpp"

namespace adapt {

struct TokenLossRecord {
    std::string text;
    double loss = 0.0;  // nats
    std::size_t line_index = 0;
    std::size_t position_in_line = 0;
    bool has_content = false;
    bool is_line_first = false;
    bool is_block_initial = false;
};

struct SnippetLossProfile {
    std::string id;
    std::vector<TokenLossRecord> records;
    std::vector<double> pd;  // predictive difficulty, parallel to records

    std::vector<double> losses() const;
};

struct DistributionStats {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;                 // population
    std::optional<double> skewness;      // g1; empty when n < 3 or variance is zero
    double perplexity = 1.0;             // exp(mean)
};

/// Teacher-forced scoring of `text` (optionally conditioned on `context`) at T = 1.
/// Positional labels come from the structure tracker primed with `context`.
SnippetLossProfile compute_losses(const LogitsProvider& model, std::string_view text,
                                  std::string id = {}, std::string_view context = {});

DistributionStats distribution_stats(std::span<const double> losses);

/// Fractional (tie-averaged, 1-indexed) rank of each loss divided by N.
std::vector<double> predictive_difficulty(std::span<const double> losses);

struct PositionEntry {
    std::size_t position = 0;
    double average_pd = 0.0;
    std::size_t token_count = 0;
    bool omitted = false;
};

struct ChallengingShare {
    double threshold = 0.0;
    std::size_t challenging = 0;
    std::size_t at_first_position = 0;
    std::size_t at_block_initial = 0;
    double first_position_share = 0.0;
    double block_initial_share = 0.0;
};

struct PositionDifficultyReport {
    std::size_t total_tokens = 0;   // content tokens
    std::size_t min_reported_count = 0;
    std::vector<PositionEntry> positions;  // every observed position, omitted ones flagged
    std::optional<double> block_initial_average_pd;
    std::optional<double> other_line_first_average_pd;
    std::vector<ChallengingShare> threshold_sweep;

    std::vector<PositionEntry> reported() const;
};

inline const std::vector<double> kDefaultThresholdSweep{0.5, 0.6, 0.7, 0.8, 0.9};

/// Per snippet, average PD by within-line position; then average across snippets.
/// Positions holding fewer than ceil(5% of content tokens) are flagged omitted.
PositionDifficultyReport position_difficulty(std::span<const SnippetLossProfile> corpus,
                                             std::span<const double> thresholds = kDefaultThresholdSweep);

enum class TokenClass { Confident, Challenging };

struct ClassificationSummary {
    std::vector<TokenClass> classes;  // parallel to records
    ChallengingShare share;
};

/// Challenging iff PD > H. Shares are over content tokens.
ClassificationSummary classify_tokens(const SnippetLossProfile& profile, double threshold);

}  // namespace adapt
