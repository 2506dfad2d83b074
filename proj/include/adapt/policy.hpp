#pragma once

#include <string>
#include <string_view>

#include "adapt/sampling.hpp"
#include "adapt/structure.hpp"

namespace adapt {

/// AdapT hyperparameters: `a` at block-initial steps, `b` everywhere else.
struct AdaptConfig {
    double a = 0.8;
    double b = 0.5;
    double top_p = 0.95;

    /// Throws invalid-parameter unless a, b and top_p all lie in (0, 1].
    void validate() const;
    /// a < b is allowed for ablations but runs against the intended schedule.
    bool inverted() const { return a < b; }

    /// Tuned for pass@k with k > 1.
    static AdaptConfig pass_at_k_profile() { return {0.8, 0.5, 0.95}; }
    /// Tuned for pass@1.
    static AdaptConfig pass_at_1_profile() { return {0.2, 0.01, 0.95}; }
    /// Looks up "pass@k" / "passk" / "pass@1" / "pass1". Throws invalid-parameter otherwise.
    static AdaptConfig profile(std::string_view name);
};

inline double adapt_temperature(bool block_initial, const AdaptConfig& cfg) {
    return block_initial ? cfg.a : cfg.b;
}

/// Step-context driven schedule used by generate(). Logs a warning when a < b.
class AdaptPolicy final : public TemperaturePolicy {
public:
    explicit AdaptPolicy(AdaptConfig cfg);

    double next_temperature(const StepContext& ctx) const override {
        return adapt_temperature(ctx.block_initial, cfg_);
    }
    std::string describe() const override;
    const AdaptConfig& config() const { return cfg_; }

private:
    AdaptConfig cfg_;
};

/// Schedule bound to a caller-owned tracker, for decoding loops driven outside generate().
/// Each call reads the tracker's current block-initial decision.
class TrackedAdaptPolicy {
public:
    TrackedAdaptPolicy(AdaptConfig cfg, const StructureTracker& tracker)
        : cfg_(cfg), tracker_(&tracker) {}

    double next_temperature() const {
        return adapt_temperature(tracker_->is_block_initial(), cfg_);
    }
    const AdaptConfig& config() const { return cfg_; }

private:
    AdaptConfig cfg_;
    const StructureTracker* tracker_;
};

/// Throws invalid-state when the tracker was never initialized with a prompt.
TrackedAdaptPolicy make_adapt_policy(const AdaptConfig& cfg, const StructureTracker& tracker);

}  // namespace adapt
