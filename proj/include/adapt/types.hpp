#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace adapt {

using TokenId = std::int32_t;

/// Raw next-token scores indexed by token id. Non-empty, all entries finite.
class LogitVector {
public:
    explicit LogitVector(std::vector<double> scores);

    std::size_t size() const { return scores_.size(); }
    double operator[](std::size_t i) const { return scores_[i]; }
    std::span<const double> values() const { return scores_; }

private:
    std::vector<double> scores_;
};

/// Normalized distribution over token ids: entries in [0,1] summing to 1 within 1e-9.
class ProbVector {
public:
    static constexpr double kSumTolerance = 1e-9;

    explicit ProbVector(std::vector<double> probs);

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> values() const { return probs_; }

private:
    std::vector<double> probs_;
};

}  // namespace adapt
