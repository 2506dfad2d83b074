#include "adapt/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "adapt/error.hpp"

namespace adapt {
namespace {

// Indices ordered by descending probability, ties by ascending id.
std::vector<std::size_t> descending_order(std::span<const double> probs) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    return order;
}

ProbVector keep_and_renormalize(std::span<const double> probs,
                                std::span<const std::size_t> kept) {
    std::vector<double> out(probs.size(), 0.0);
    double mass = 0.0;
    for (auto i : kept) mass += probs[i];
    for (auto i : kept) out[i] = probs[i] / mass;
    return ProbVector(std::move(out));
}

std::vector<TokenId> tokenize_prompt(const LogitsProvider& model, std::string_view prompt) {
    std::vector<TokenId> ids;
    try {
        ids = model.tokenize(prompt);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::InvalidInput) throw;
        fail(ErrorKind::DetokenizationError, std::string("prompt cannot be tokenized: ") + e.what());
    }
    if (model.detokenize(ids) != prompt) {
        fail(ErrorKind::DetokenizationError, "prompt does not survive a tokenize/detokenize round trip");
    }
    return ids;
}

const std::string& token_text(const LogitsProvider& model, TokenId id) {
    const auto& vocab = model.vocabulary();
    if (!vocab.contains(id)) {
        fail(ErrorKind::DetokenizationError, "token id " + std::to_string(id) + " outside vocabulary");
    }
    return vocab.text(id);
}

bool ends_line(std::string_view prompt) { return prompt.empty() || prompt.back() == '\n'; }

std::size_t max_stop_len(const StopCriteria& stop) {
    std::size_t n = 0;
    for (const auto& s : stop.stop_strings) n = std::max(n, s.size());
    return n;
}

void check_logits_size(const LogitVector& logits, const Vocabulary& vocab) {
    if (logits.size() != vocab.size()) {
        fail(ErrorKind::ProtocolError, "backend returned " + std::to_string(logits.size()) +
                                           " logits for a vocabulary of " +
                                           std::to_string(vocab.size()));
    }
}

}  // namespace

LogitVector::LogitVector(std::vector<double> scores) : scores_(std::move(scores)) {
    if (scores_.empty()) fail(ErrorKind::InvalidInput, "empty logit vector");
    for (double s : scores_) {
        if (!std::isfinite(s)) fail(ErrorKind::InvalidInput, "non-finite logit");
    }
}

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) fail(ErrorKind::InvalidInput, "empty probability vector");
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidInput, "probability outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        fail(ErrorKind::InvalidInput, "probabilities sum to " + std::to_string(sum));
    }
}

ProbVector softmax_with_temperature(const LogitVector& logits, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        fail(ErrorKind::InvalidParameter, "temperature must be positive; use greedy_select for T = 0");
    }
    const auto u = logits.values();
    const double max_logit = *std::max_element(u.begin(), u.end());
    std::vector<double> out(u.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[i] = std::exp((u[i] - max_logit) / temperature);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return ProbVector(std::move(out));
}

std::vector<double> log_softmax(const LogitVector& logits) {
    const auto u = logits.values();
    const double max_logit = *std::max_element(u.begin(), u.end());
    double sum = 0.0;
    for (double v : u) sum += std::exp(v - max_logit);
    const double log_z = max_logit + std::log(sum);
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] - log_z;
    return out;
}

TokenId greedy_select(std::span<const double> scores) {
    if (scores.empty()) fail(ErrorKind::InvalidInput, "greedy_select on empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return static_cast<TokenId>(best);
}

TokenId greedy_select(const LogitVector& logits) { return greedy_select(logits.values()); }

ProbVector top_k_filter(const ProbVector& probs, std::size_t k) {
    if (k == 0) fail(ErrorKind::InvalidParameter, "top-k requires k >= 1");
    if (k >= probs.size()) return probs;
    auto order = descending_order(probs.values());
    order.resize(k);
    return keep_and_renormalize(probs.values(), order);
}

ProbVector top_p_filter(const ProbVector& probs, double p) {
    if (!(p > 0.0 && p <= 1.0)) fail(ErrorKind::InvalidParameter, "top-p requires p in (0, 1]");
    if (p == 1.0) return probs;
    const auto values = probs.values();
    auto order = descending_order(values);
    double cumulative = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        cumulative += values[order[keep]];
        ++keep;
        if (cumulative >= p) break;
    }
    order.resize(keep);
    return keep_and_renormalize(values, order);
}

TokenId sample_categorical(const ProbVector& probs, RandomSource& rng) {
    const double u = rng.next_unit();
    const auto values = probs.values();
    double cumulative = 0.0;
    std::size_t last_nonzero = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] <= 0.0) continue;
        cumulative += values[i];
        last_nonzero = i;
        if (u < cumulative) return static_cast<TokenId>(i);
    }
    // u fell into the rounding gap above the accumulated mass.
    return static_cast<TokenId>(last_nonzero);
}

TokenId sample_next(const LogitVector& logits, double temperature, double top_p,
                    RandomSource& rng) {
    if (temperature == 0.0) return greedy_select(logits);
    const auto probs = softmax_with_temperature(logits, temperature);
    return sample_categorical(top_p_filter(probs, top_p), rng);
}

std::string_view to_string(StopReason reason) {
    switch (reason) {
        case StopReason::Eos:          return "eos";
        case StopReason::StopSequence: return "stop-sequence";
        case StopReason::MaxLength:    return "max-length";
    }
    return "unknown";
}

ConstantTemperature::ConstantTemperature(double temperature) : temperature_(temperature) {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        fail(ErrorKind::InvalidParameter, "temperature must be non-negative");
    }
}

std::string ConstantTemperature::describe() const {
    std::ostringstream os;
    os << "constant(T=" << temperature_ << ")";
    return os.str();
}

std::optional<std::size_t> find_stop(std::string_view completion, bool at_line_start,
                                     const StopCriteria& stop, std::size_t search_from) {
    std::optional<std::size_t> cut;
    auto consider = [&](std::size_t pos) {
        if (!cut || pos < *cut) cut = pos;
    };

    if (!stop.stop_strings.empty()) {
        std::string hay;
        const std::size_t shift = at_line_start ? 1 : 0;
        if (at_line_start) hay.push_back('\n');
        hay.append(completion);
        const std::size_t from = search_from;  // already in hay coordinates when shifted by one
        for (const auto& s : stop.stop_strings) {
            if (s.empty()) continue;
            const auto pos = hay.find(s, from);
            if (pos != std::string::npos) consider(pos >= shift ? pos - shift : 0);
        }
    }

    if (stop.stop_on_toplevel_line) {
        for (std::size_t i = search_from; i < completion.size(); ++i) {
            const bool line_start = i == 0 ? at_line_start : completion[i - 1] == '\n';
            const char c = completion[i];
            if (line_start && c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f') {
                consider(i == 0 ? 0 : i - 1);
                break;
            }
        }
    }
    return cut;
}

GenerationResult generate(const LogitsProvider& model, std::string_view prompt,
                          const TemperaturePolicy& policy, const GenerateOptions& options,
                          RandomSource& rng) {
    if (!(options.top_p > 0.0 && options.top_p <= 1.0)) {
        fail(ErrorKind::InvalidParameter, "top-p requires p in (0, 1]");
    }
    auto context = tokenize_prompt(model, prompt);
    auto tracker = StructureTracker::init(prompt, options.tracker);
    const bool line_start = ends_line(prompt);
    const std::size_t stop_window = max_stop_len(options.stop);

    GenerationResult result;
    result.stop_reason = StopReason::MaxLength;

    for (std::size_t step = 0; step < options.max_len; ++step) {
        const bool block_initial = tracker.is_block_initial();
        const double temperature = policy.next_temperature({block_initial, step});
        if (!(temperature >= 0.0)) {
            fail(ErrorKind::InvalidParameter, "policy returned a negative temperature");
        }
        const auto logits = model.next_logits(context);
        check_logits_size(logits, model.vocabulary());
        const TokenId token = sample_next(logits, temperature, options.top_p, rng);

        result.tokens.push_back(token);
        result.temperatures.push_back(temperature);
        result.block_initial.push_back(block_initial);

        if (options.stop.stop_on_eos && token == model.eos_id()) {
            result.stop_reason = StopReason::Eos;
            break;
        }
        const auto& fragment = token_text(model, token);
        const std::size_t before = result.text.size();
        result.text += fragment;
        tracker.feed(fragment);
        context.push_back(token);

        // Only the tail can hold a new match: the newest fragment plus one stop string.
        const std::size_t from = before > stop_window ? before - stop_window : 0;
        if (auto cut = find_stop(result.text, line_start, options.stop, from)) {
            result.text.resize(*cut);
            result.stop_reason = StopReason::StopSequence;
            break;
        }
    }
    return result;
}

namespace {

struct Hypothesis {
    std::vector<TokenId> tokens;
    std::string text;
    std::vector<bool> block_initial;
    StructureTracker tracker;
    double log_prob = 0.0;
    bool finished = false;
    StopReason reason = StopReason::MaxLength;
};

double ranking_score(double log_prob, std::size_t length, double length_penalty) {
    if (length_penalty == 0.0 || length == 0) return log_prob;
    return log_prob / std::pow(static_cast<double>(length), length_penalty);
}

}  // namespace

std::vector<GenerationResult> beam_search(const LogitsProvider& model, std::string_view prompt,
                                          const BeamOptions& options) {
    if (options.beam_width == 0) fail(ErrorKind::InvalidParameter, "beam width must be >= 1");
    const auto prompt_ids = tokenize_prompt(model, prompt);
    const bool line_start = ends_line(prompt);
    const TokenId eos = model.eos_id();

    std::vector<Hypothesis> beam(1);
    beam[0].tracker = StructureTracker::init(prompt, options.tracker);

    struct Candidate {
        std::size_t parent;
        TokenId token;  // -1 keeps a finished parent as is
        double log_prob;
        double key;
    };

    for (std::size_t step = 0; step < options.max_len; ++step) {
        std::vector<Candidate> candidates;
        bool any_open = false;
        for (std::size_t h = 0; h < beam.size(); ++h) {
            const auto& hyp = beam[h];
            if (hyp.finished) {
                candidates.push_back({h, -1, hyp.log_prob,
                                      ranking_score(hyp.log_prob, hyp.tokens.size(),
                                                    options.length_penalty)});
                continue;
            }
            any_open = true;
            std::vector<TokenId> context = prompt_ids;
            context.insert(context.end(), hyp.tokens.begin(), hyp.tokens.end());
            const auto logits = model.next_logits(context);
            check_logits_size(logits, model.vocabulary());
            const auto lp = log_softmax(logits);
            for (std::size_t t = 0; t < lp.size(); ++t) {
                const double total = hyp.log_prob + lp[t];
                candidates.push_back({h, static_cast<TokenId>(t), total,
                                      ranking_score(total, hyp.tokens.size() + 1,
                                                    options.length_penalty)});
            }
        }
        if (!any_open) break;

        // Deterministic order: score, then token sequence.
        auto seq_less = [&](const Candidate& a, const Candidate& b) {
            const auto& ta = beam[a.parent].tokens;
            const auto& tb = beam[b.parent].tokens;
            std::vector<TokenId> sa = ta, sb = tb;
            if (a.token >= 0) sa.push_back(a.token);
            if (b.token >= 0) sb.push_back(b.token);
            return sa < sb;
        };
        const std::size_t keep = std::min(options.beam_width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep),
                          candidates.end(), [&](const Candidate& a, const Candidate& b) {
                              if (a.key != b.key) return a.key > b.key;
                              return seq_less(a, b);
                          });
        candidates.resize(keep);

        std::vector<Hypothesis> next;
        next.reserve(keep);
        for (const auto& c : candidates) {
            Hypothesis hyp = beam[c.parent];
            if (c.token < 0) {
                next.push_back(std::move(hyp));
                continue;
            }
            hyp.block_initial.push_back(hyp.tracker.is_block_initial());
            hyp.tokens.push_back(c.token);
            hyp.log_prob = c.log_prob;
            if (options.stop.stop_on_eos && c.token == eos) {
                hyp.finished = true;
                hyp.reason = StopReason::Eos;
            } else {
                const auto& fragment = token_text(model, c.token);
                hyp.text += fragment;
                hyp.tracker.feed(fragment);
                if (auto cut = find_stop(hyp.text, line_start, options.stop)) {
                    hyp.text.resize(*cut);
                    hyp.finished = true;
                    hyp.reason = StopReason::StopSequence;
                }
            }
            next.push_back(std::move(hyp));
        }
        beam = std::move(next);
    }

    std::vector<GenerationResult> results;
    results.reserve(beam.size());
    for (auto& hyp : beam) {
        GenerationResult r;
        r.tokens = std::move(hyp.tokens);
        r.text = std::move(hyp.text);
        r.block_initial = std::move(hyp.block_initial);
        r.temperatures.assign(r.tokens.size(), 1.0);
        r.stop_reason = hyp.finished ? hyp.reason : StopReason::MaxLength;
        r.log_prob = hyp.log_prob;
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace adapt
