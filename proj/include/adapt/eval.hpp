#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adapt/policy.hpp"
#include "adapt/provider.hpp"
#include "adapt/sampling.hpp"

namespace adapt {

struct Task {
    std::string task_id;
    std::string prompt;
    std::string entry_point;
    std::string test;
    std::optional<std::string> canonical_solution;
};

struct Sample {
    std::string task_id;
    std::size_t sample_index = 0;
    std::string completion;
    std::uint64_t seed = 0;
    std::string strategy;
    std::string stop_reason;
    std::vector<double> temperatures;
    std::vector<bool> block_initial;
};

enum class OutcomeClass { Passed, WrongAnswer, SyntaxError, TypeError, NameError, Timeout, Other };

struct ExecutionOutcome {
    OutcomeClass cls = OutcomeClass::Other;
    std::string other_label;  // exception name (or signal / exit code) for Other
    double wall_seconds = 0.0;
    std::string stderr_excerpt;

    /// "Passed", "WrongAnswer", ... or the Other label.
    std::string label() const;
};

std::string_view to_string(OutcomeClass cls);

/// Unbiased pass@k: 1 - C(n-c, k) / C(n, k), evaluated as a product for stability.
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

struct ExecutionOptions {
    double time_limit_seconds = 10.0;
    std::string python = "python3";
    std::size_t memory_limit_mb = 2048;
    std::filesystem::path scratch_root;  // empty: system temp directory
};

/// prompt + completion + test program (+ check(entry_point) when the test defines check).
std::string assemble_program(const Task& task, std::string_view completion);

/// Runs the assembled program in a child process inside an empty scratch directory.
/// Throws environment-error when the interpreter is missing.
ExecutionOutcome execute_sample(const Task& task, std::string_view completion,
                                const ExecutionOptions& options = {});

/// Classifies a finished run from its exit status and stderr.
ExecutionOutcome classify_exit(int exit_code, int term_signal, std::string_view stderr_text);

struct TaskResult {
    std::string task_id;
    std::size_t n = 0;
    std::size_t c = 0;
    std::map<std::size_t, std::optional<double>> pass_at;  // empty optional when k > n
    std::vector<std::string> outcomes;                      // per sample, by sample index
};

struct PassKReport {
    std::vector<std::size_t> ks;
    std::vector<TaskResult> tasks;  // sorted by task id
    std::map<std::size_t, std::optional<double>> mean_pass_at;
    std::map<std::string, std::size_t> outcome_histogram;
    std::size_t solved = 0;  // tasks with c >= 1
    std::vector<std::string> warnings;
    double wall_seconds = 0.0;  // metadata only
};

/// Thread-safe memo of outcomes keyed by (task id, completion). Shared across evaluate()
/// calls, e.g. between strategies in a comparison.
class ExecutionCache {
public:
    std::optional<ExecutionOutcome> find(const std::string& task_id, const std::string& completion) const;
    void store(const std::string& task_id, const std::string& completion, const ExecutionOutcome& outcome);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, ExecutionOutcome> entries_;
};

struct EvalOptions {
    ExecutionOptions execution{};
    std::size_t workers = 4;
    std::shared_ptr<ExecutionCache> cache;  // optional
};

/// Runs every sample, counts correct samples per task and macro-averages pass@k.
/// Identical (task, completion) pairs are executed once.
PassKReport evaluate(const std::vector<Task>& tasks, const std::vector<Sample>& samples,
                     const std::vector<std::size_t>& ks, const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Strategies and sample generation

struct StrategySpec {
    enum class Kind { Greedy, Beam, Sampling, Adapt };
    Kind kind = Kind::Greedy;
    double temperature = 0.0;    // Sampling
    AdaptConfig adapt{};         // Adapt
    std::size_t beam_width = 1;  // Beam

    /// Canonical spelling, e.g. "sp{0.4}", "adapt{0.8,0.5}", "beam{4}", "greedy".
    std::string name() const;
    bool deterministic() const { return kind == Kind::Greedy || kind == Kind::Beam; }
};

/// Accepts "greedy", "beam{B}", "sp{T}", "adapt{a,b}" (colon forms like "sp:0.4" too).
/// A bare "adapt" uses `adapt_defaults`.
StrategySpec parse_strategy(std::string_view text, const AdaptConfig& adapt_defaults = {});

struct GenerationConfig {
    double top_p = 0.95;
    std::size_t max_len = 500;
    std::size_t n = 15;
    std::uint64_t seed = 0;
    StopCriteria stop = StopCriteria::function_body();
    TrackerOptions tracker{};
};

/// seed_base XOR a stable hash of (task id, sample index).
std::uint64_t derive_seed(std::uint64_t seed_base, std::string_view task_id, std::size_t sample_index);

struct GenerationFailure {
    std::string task_id;
    std::string message;
};

struct GeneratedSamples {
    std::vector<Sample> samples;  // ordered by task, then sample index
    std::vector<GenerationFailure> failures;
};

/// n samples per task (one for deterministic strategies).
GeneratedSamples generate_samples(const LogitsProvider& model, const std::vector<Task>& tasks,
                                  const StrategySpec& strategy, const GenerationConfig& config,
                                  std::size_t workers = 1);

struct StrategyResult {
    StrategySpec strategy;
    PassKReport report;
    std::vector<GenerationFailure> failures;
};

struct ComparisonReport {
    std::vector<std::size_t> ks;
    std::vector<StrategyResult> results;
};

ComparisonReport compare_strategies(const LogitsProvider& model, const std::vector<Task>& tasks,
                                    const std::vector<StrategySpec>& strategies,
                                    const GenerationConfig& config,
                                    const std::vector<std::size_t>& ks,
                                    const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// File formats

std::vector<Task> load_tasks(const std::filesystem::path& path);
std::vector<Task> parse_tasks(std::string_view jsonl);
std::vector<Sample> load_samples(const std::filesystem::path& path);
std::vector<Sample> parse_samples(std::string_view jsonl);
std::string samples_to_jsonl(const std::vector<Sample>& samples);

/// Deterministic payload; timings are kept out.
std::string report_json(const PassKReport& report);
/// Rows: task_id, n, c, pass@k...; final row "mean".
std::string report_csv(const PassKReport& report);

/// One row per strategy: strategy, samples_per_task, pass@k..., solved.
std::string comparison_csv(const ComparisonReport& report);
std::string comparison_json(const ComparisonReport& report);

}  // namespace adapt
