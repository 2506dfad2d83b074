#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "adapt/provider.hpp"
#include "adapt/structure.hpp"
#include "adapt/types.hpp"

namespace adapt {

/// Seeded 64-bit stream. Uniform draws are built from the raw engine output, not from
/// std::uniform_real_distribution, so sequences match across standard libraries.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 bits of resolution.
    double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

ProbVector softmax_with_temperature(const LogitVector& logits, double temperature);
std::vector<double> log_softmax(const LogitVector& logits);

/// Argmax; ties go to the lowest id.
TokenId greedy_select(const LogitVector& logits);
TokenId greedy_select(std::span<const double> scores);

ProbVector top_k_filter(const ProbVector& probs, std::size_t k);
/// Keeps the shortest descending-probability prefix whose mass reaches p (boundary included).
ProbVector top_p_filter(const ProbVector& probs, double p);

/// Inverse CDF over ascending token id.
TokenId sample_categorical(const ProbVector& probs, RandomSource& rng);

/// Temperature rescale, then nucleus filter, then draw. A temperature of 0 selects greedily.
TokenId sample_next(const LogitVector& logits, double temperature, double top_p,
                    RandomSource& rng);

enum class StopReason { Eos, StopSequence, MaxLength };
std::string_view to_string(StopReason reason);

struct StopCriteria {
    bool stop_on_eos = true;
    /// Stop when a generated line starts at column 0 with non-whitespace.
    bool stop_on_toplevel_line = true;
    std::vector<std::string> stop_strings;

    static StopCriteria function_body() { return {}; }
    static StopCriteria none() { return {.stop_on_eos = true, .stop_on_toplevel_line = false, .stop_strings = {}}; }
};

struct GenerationResult {
    std::vector<TokenId> tokens;
    std::string text;
    std::vector<double> temperatures;
    std::vector<bool> block_initial;
    StopReason stop_reason = StopReason::MaxLength;
    double log_prob = 0.0;  // cumulative, filled by beam search
};

struct StepContext {
    bool block_initial = false;
    std::size_t step = 0;
};

/// Supplies T(t) for each decoding step.
class TemperaturePolicy {
public:
    virtual ~TemperaturePolicy() = default;
    virtual double next_temperature(const StepContext& ctx) const = 0;
    virtual std::string describe() const = 0;
};

class ConstantTemperature final : public TemperaturePolicy {
public:
    explicit ConstantTemperature(double temperature);
    double next_temperature(const StepContext&) const override { return temperature_; }
    std::string describe() const override;

private:
    double temperature_;
};

struct GenerateOptions {
    double top_p = 0.95;
    std::size_t max_len = 500;
    StopCriteria stop = StopCriteria::function_body();
    TrackerOptions tracker{};
};

GenerationResult generate(const LogitsProvider& model, std::string_view prompt,
                          const TemperaturePolicy& policy, const GenerateOptions& options,
                          RandomSource& rng);

struct BeamOptions {
    std::size_t beam_width = 4;
    std::size_t max_len = 500;
    StopCriteria stop = StopCriteria::function_body();
    /// Ranking uses log_prob / len^length_penalty; 0 disables normalization.
    double length_penalty = 0.0;
    TrackerOptions tracker{};
};

/// Returns up to beam_width hypotheses, best first.
std::vector<GenerationResult> beam_search(const LogitsProvider& model, std::string_view prompt,
                                          const BeamOptions& options);

/// Stop-point search over a completion. `at_line_start` is whether the prompt ended a line.
/// Returns the byte offset where the completion must be cut, if a stop fired.
std::optional<std::size_t> find_stop(std::string_view completion, bool at_line_start,
                                     const StopCriteria& stop, std::size_t search_from = 0);

}  // namespace adapt
