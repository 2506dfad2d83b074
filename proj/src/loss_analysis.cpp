#include "adapt/loss_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "adapt/error.hpp"
#include "adapt/sampling.hpp"

namespace adapt {
namespace {

struct PdAccumulator {
    double sum = 0.0;
    std::size_t count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    double mean() const { return sum / static_cast<double>(count); }
};

std::optional<double> two_stage_mean(const std::vector<PdAccumulator>& per_snippet) {
    PdAccumulator across;
    for (const auto& s : per_snippet) {
        if (s.count > 0) across.add(s.mean());
    }
    if (across.count == 0) return std::nullopt;
    return across.mean();
}

void finish_share(ChallengingShare& s) {
    if (s.challenging == 0) return;
    s.first_position_share = static_cast<double>(s.at_first_position) / static_cast<double>(s.challenging);
    s.block_initial_share = static_cast<double>(s.at_block_initial) / static_cast<double>(s.challenging);
}

}  // namespace

std::vector<double> SnippetLossProfile::losses() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.loss);
    return out;
}

SnippetLossProfile compute_losses(const LogitsProvider& model, std::string_view text,
                                  std::string id, std::string_view context) {
    SnippetLossProfile profile;
    profile.id = std::move(id);
    if (text.empty()) return profile;

    std::vector<TokenId> history = context.empty() ? std::vector<TokenId>{} : model.tokenize(context);
    const auto ids = model.tokenize(text);
    auto tracker = StructureTracker::init(context);

    profile.records.reserve(ids.size());
    for (auto id_ : ids) {
        const auto logits = model.next_logits(history);
        if (logits.size() != model.vocabulary().size()) {
            fail(ErrorKind::ProtocolError, "backend logits length disagrees with its vocabulary");
        }
        const auto lp = log_softmax(logits);
        const auto& fragment = model.vocabulary().text(id_);
        const auto label = tracker.feed(fragment);

        TokenLossRecord rec;
        rec.text = fragment;
        rec.loss = std::max(0.0, -lp[static_cast<std::size_t>(id_)]);
        rec.line_index = label.line_index;
        rec.position_in_line = label.position_in_line;
        rec.has_content = label.has_content;
        rec.is_line_first = label.is_line_first;
        rec.is_block_initial = label.is_block_initial;
        profile.records.push_back(std::move(rec));
        history.push_back(id_);
    }
    profile.pd = predictive_difficulty(profile.losses());
    return profile;
}

DistributionStats distribution_stats(std::span<const double> losses) {
    if (losses.empty()) fail(ErrorKind::InvalidInput, "distribution_stats needs at least one value");
    DistributionStats s;
    s.count = losses.size();
    const double n = static_cast<double>(losses.size());
    s.mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0;
    for (double x : losses) {
        const double d = x - s.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    s.stddev = std::sqrt(m2);
    if (losses.size() >= 3 && m2 > 0.0) s.skewness = m3 / std::pow(m2, 1.5);
    s.perplexity = std::exp(s.mean);
    return s;
}

std::vector<double> predictive_difficulty(std::span<const double> losses) {
    const std::size_t n = losses.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });

    std::vector<double> pd(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && losses[order[j]] == losses[order[i]]) ++j;
        // Ranks i+1 .. j share their average.
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) pd[order[t]] = rank / static_cast<double>(n);
        i = j;
    }
    return pd;
}

std::vector<PositionEntry> PositionDifficultyReport::reported() const {
    std::vector<PositionEntry> out;
    for (const auto& p : positions) {
        if (!p.omitted) out.push_back(p);
    }
    return out;
}

PositionDifficultyReport position_difficulty(std::span<const SnippetLossProfile> corpus,
                                             std::span<const double> thresholds) {
    if (corpus.empty()) fail(ErrorKind::InvalidInput, "position_difficulty needs a non-empty corpus");

    PositionDifficultyReport report;
    std::map<std::size_t, std::vector<PdAccumulator>> by_position;  // position -> per-snippet
    std::map<std::size_t, std::size_t> counts;
    std::vector<PdAccumulator> block_initial(corpus.size());
    std::vector<PdAccumulator> other_line_first(corpus.size());

    for (std::size_t s = 0; s < corpus.size(); ++s) {
        const auto& profile = corpus[s];
        if (profile.pd.size() != profile.records.size()) {
            fail(ErrorKind::InvalidInput, "profile '" + profile.id + "' has mismatched PD list");
        }
        for (std::size_t t = 0; t < profile.records.size(); ++t) {
            const auto& rec = profile.records[t];
            if (!rec.has_content) continue;
            ++report.total_tokens;
            auto& slots = by_position[rec.position_in_line];
            slots.resize(corpus.size());
            slots[s].add(profile.pd[t]);
            ++counts[rec.position_in_line];
            if (rec.is_line_first) {
                (rec.is_block_initial ? block_initial : other_line_first)[s].add(profile.pd[t]);
            }
        }
    }

    report.min_reported_count =
        static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(report.total_tokens)));
    for (const auto& [pos, slots] : by_position) {
        PositionEntry e;
        e.position = pos;
        e.token_count = counts[pos];
        e.average_pd = *two_stage_mean(slots);
        e.omitted = e.token_count < report.min_reported_count;
        report.positions.push_back(e);
    }
    report.block_initial_average_pd = two_stage_mean(block_initial);
    report.other_line_first_average_pd = two_stage_mean(other_line_first);

    for (double h : thresholds) {
        ChallengingShare total;
        total.threshold = h;
        for (const auto& profile : corpus) {
            const auto part = classify_tokens(profile, h).share;
            total.challenging += part.challenging;
            total.at_first_position += part.at_first_position;
            total.at_block_initial += part.at_block_initial;
        }
        finish_share(total);
        report.threshold_sweep.push_back(total);
    }
    return report;
}

ClassificationSummary classify_tokens(const SnippetLossProfile& profile, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        fail(ErrorKind::InvalidParameter, "threshold H must lie in (0, 1)");
    }
    ClassificationSummary out;
    out.share.threshold = threshold;
    out.classes.reserve(profile.pd.size());
    for (std::size_t t = 0; t < profile.pd.size(); ++t) {
        const bool challenging = profile.pd[t] > threshold;
        out.classes.push_back(challenging ? TokenClass::Challenging : TokenClass::Confident);
        if (!challenging || t >= profile.records.size()) continue;
        const auto& rec = profile.records[t];
        if (!rec.has_content) continue;
        ++out.share.challenging;
        if (rec.is_line_first) ++out.share.at_first_position;
        if (rec.is_block_initial) ++out.share.at_block_initial;
    }
    finish_share(out.share);
    return out;
}

}  // namespace adapt
