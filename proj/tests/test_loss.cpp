#include <doctest.h>

#include <cmath>
#include <random>

#include "adapt/backends.hpp"
#include "adapt/error.hpp"
#include "adapt/loss_analysis.hpp"
#include "adapt/sampling.hpp"
#include "support.hpp"

using namespace adapt;

namespace {

// Rank by counting: strictly-smaller count plus the average slot among equals.
std::vector<double> pd_by_counting(const std::vector<double>& x) {
    std::vector<double> out;
    for (double v : x) {
        double less = 0, equal = 0;
        for (double w : x) {
            less += w < v;
            equal += w == v;
        }
        out.push_back((less + (equal + 1.0) / 2.0) / static_cast<double>(x.size()));
    }
    return out;
}

TokenLossRecord rec(std::size_t pos, bool first, bool block, bool content = true) {
    TokenLossRecord r;
    r.position_in_line = pos;
    r.is_line_first = first;
    r.is_block_initial = block;
    r.has_content = content;
    return r;
}

}  // namespace

TEST_CASE("distribution stats match direct formulas") {
    const std::vector<double> x{1.0, 2.0, 4.0, 8.0};
    const auto s = distribution_stats(x);
    CHECK(s.count == 4);
    CHECK(s.mean == doctest::Approx(3.75));
    const double var = ((1 - 3.75) * (1 - 3.75) + (2 - 3.75) * (2 - 3.75) + (4 - 3.75) * (4 - 3.75) +
                        (8 - 3.75) * (8 - 3.75)) / 4.0;
    CHECK(s.stddev == doctest::Approx(std::sqrt(var)));
    double z3 = 0;
    for (double v : x) z3 += std::pow((v - 3.75) / std::sqrt(var), 3);
    REQUIRE(s.skewness.has_value());
    CHECK(*s.skewness == doctest::Approx(z3 / 4.0));
    CHECK(s.perplexity == doctest::Approx(std::exp(3.75)));
}

TEST_CASE("skewness is undefined for short or flat inputs") {
    CHECK_FALSE(distribution_stats(std::vector<double>{1.0, 2.0}).skewness.has_value());
    CHECK_FALSE(distribution_stats(std::vector<double>{3.0, 3.0, 3.0}).skewness.has_value());
    CHECK(distribution_stats(std::vector<double>{3.0, 3.0, 3.0}).stddev == 0.0);
    CHECK_THROWS_AS(distribution_stats(std::vector<double>{}), Error);
}

TEST_CASE("symmetric data has zero skew; right tail is positive") {
    CHECK(*distribution_stats(std::vector<double>{1, 2, 3, 4, 5}).skewness == doctest::Approx(0.0));
    CHECK(*distribution_stats(std::vector<double>{0, 0, 0, 0, 10}).skewness > 0.0);
}

TEST_CASE("predictive difficulty uses tie-averaged ranks") {
    const std::vector<double> x{0.5, 0.1, 0.5, 0.9};
    const auto pd = predictive_difficulty(x);
    CHECK(pd == std::vector<double>{2.5 / 4, 1.0 / 4, 2.5 / 4, 4.0 / 4});
    CHECK(predictive_difficulty(std::vector<double>{}).empty());
    const auto flat = predictive_difficulty(std::vector<double>(5, 1.0));
    for (double v : flat) CHECK(v == doctest::Approx(0.6));
}

TEST_CASE("property: PD matches counting oracle and lies in (0, 1]") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 30;
        std::vector<double> x;
        for (std::size_t i = 0; i < n; ++i) x.push_back(static_cast<double>(rng() % 6) * 0.25);
        const auto pd = predictive_difficulty(x);
        const auto oracle = pd_by_counting(x);
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(pd[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
            CHECK(pd[i] > 0.0);
            CHECK(pd[i] <= 1.0);
            sum += pd[i];
        }
        // ranks always sum to n(n+1)/2
        CHECK(sum == doctest::Approx((static_cast<double>(n) + 1) / 2.0));
        // monotone in loss
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (x[i] < x[j]) CHECK(pd[i] < pd[j]);
    }
}

TEST_CASE("compute_losses under a perfect predictor") {
    Vocabulary vocab({"def", " f", "():", "\n", "    ", "return", " 1", "<|endoftext|>"}, 7);
    const std::string code = "def f():\n    return 1";
    const auto ids = vocab.tokenize_longest_match(code);
    testsupport::FunctionModel model(vocab, [&](std::span<const TokenId> ctx) {
        std::vector<double> u(vocab.size(), -1e4);
        const auto next = ctx.size() < ids.size() ? ids[ctx.size()] : vocab.eos_id();
        u[static_cast<std::size_t>(next)] = 1e4;
        return u;
    });
    const auto p = compute_losses(model, code, "perfect");
    REQUIRE(p.records.size() == ids.size());
    for (const auto& r : p.records) CHECK(r.loss == 0.0);
    for (double v : p.pd) CHECK(v == doctest::Approx((ids.size() + 1.0) / 2.0 / ids.size()));
    CHECK(distribution_stats(p.losses()).perplexity == 1.0);
    // labels
    CHECK(p.records[0].is_line_first);
    CHECK_FALSE(p.records[4].has_content);
    CHECK(p.records[5].is_block_initial);
    CHECK(p.records[5].line_index == 1);
    CHECK(p.records[6].position_in_line == 1);
}

TEST_CASE("compute_losses equals negative log-softmax of the scored token") {
    const std::string corpus = "ab ab ba\n<|endoftext|>\nabba\n";
    const auto model = NGramModel::train(corpus, NGramOptions{.order = 3, .alpha = 0.1});
    const std::string text = "abab";
    const auto p = compute_losses(model, text, "x", "b");
    std::vector<TokenId> ctx = model.tokenize("b");
    const auto ids = model.tokenize(text);
    REQUIRE(p.records.size() == ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto cond = model.conditional(ctx);
        CHECK(p.records[i].loss == doctest::Approx(-std::log(cond[static_cast<std::size_t>(ids[i])])));
        ctx.push_back(ids[i]);
    }
    CHECK(compute_losses(model, "", "empty").records.empty());
}

TEST_CASE("compute_losses rejects logits of the wrong length") {
    Vocabulary vocab({"a", "<|endoftext|>"}, 1);
    testsupport::FunctionModel bad(vocab, [](auto) { return std::vector<double>{0.0, 0.0, 0.0}; });
    try {
        compute_losses(bad, "a");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ProtocolError);
    }
}

TEST_CASE("position difficulty averages per snippet, then across snippets") {
    SnippetLossProfile a;
    a.id = "a";
    a.records = {rec(0, true, true), rec(1, false, false), rec(1, false, false), rec(0, true, false)};
    a.pd = {1.0, 0.25, 0.5, 0.75};
    SnippetLossProfile b;
    b.id = "b";
    b.records = {rec(0, true, false), rec(1, false, false), rec(0, false, false, false)};
    b.pd = {0.5, 1.0, 0.25};
    const std::vector<SnippetLossProfile> corpus{a, b};
    const auto report = position_difficulty(corpus, std::vector<double>{0.6});
    CHECK(report.total_tokens == 6);
    CHECK(report.min_reported_count == 1);
    REQUIRE(report.positions.size() == 2);
    CHECK(report.positions[0].position == 0);
    CHECK(report.positions[0].token_count == 3);
    CHECK(report.positions[0].average_pd == doctest::Approx(((1.0 + 0.75) / 2 + 0.5) / 2));
    CHECK(report.positions[1].average_pd == doctest::Approx((0.375 + 1.0) / 2));
    REQUIRE(report.block_initial_average_pd);
    CHECK(*report.block_initial_average_pd == doctest::Approx(1.0));
    CHECK(*report.other_line_first_average_pd == doctest::Approx((0.75 + 0.5) / 2));

    REQUIRE(report.threshold_sweep.size() == 1);
    const auto& s = report.threshold_sweep[0];
    CHECK(s.challenging == 3);  // 1.0, 0.75, 1.0
    CHECK(s.at_first_position == 2);
    CHECK(s.at_block_initial == 1);
    CHECK(s.first_position_share == doctest::Approx(2.0 / 3));
}

TEST_CASE("sparse positions are flagged, not dropped") {
    SnippetLossProfile p;
    p.id = "p";
    for (int i = 0; i < 40; ++i) {
        p.records.push_back(rec(static_cast<std::size_t>(i % 2), i % 2 == 0, false));
    }
    p.records.push_back(rec(7, false, false));
    p.pd = predictive_difficulty(std::vector<double>(p.records.size(), 1.0));
    const std::vector<SnippetLossProfile> corpus{p};
    const auto report = position_difficulty(corpus);
    CHECK(report.min_reported_count == 3);  // ceil(0.05 * 41)
    CHECK(report.positions.size() == 3);
    CHECK(report.positions.back().omitted);
    CHECK(report.reported().size() == 2);
    CHECK(report.threshold_sweep.size() == kDefaultThresholdSweep.size());
    CHECK_THROWS_AS(position_difficulty(std::vector<SnippetLossProfile>{}), Error);
}

TEST_CASE("classification threshold") {
    SnippetLossProfile p;
    p.records = {rec(0, true, true), rec(1, false, false), rec(0, true, false)};
    p.pd = {0.9, 0.5, 0.7};
    const auto c = classify_tokens(p, 0.7);
    CHECK(c.classes == std::vector<TokenClass>{TokenClass::Challenging, TokenClass::Confident,
                                               TokenClass::Confident});
    CHECK(c.share.challenging == 1);
    CHECK(c.share.block_initial_share == 1.0);
    for (double bad : {0.0, 1.0, -0.5, 2.0}) CHECK_THROWS_AS(classify_tokens(p, bad), Error);
    // higher H never marks more tokens
    CHECK(classify_tokens(p, 0.4).share.challenging >= classify_tokens(p, 0.6).share.challenging);
}
