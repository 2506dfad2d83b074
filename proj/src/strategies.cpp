#include <algorithm>
#include <charconv>
#include <cstdio>
#include <memory>

#include "adapt/error.hpp"
#include "adapt/eval.hpp"
#include "adapt/parallel.hpp"

namespace adapt {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

double parse_number(std::string_view text, std::string_view spec) {
    const auto t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        fail(ErrorKind::InvalidParameter,
             "cannot read number '" + t + "' in strategy '" + std::string(spec) + "'");
    }
    return v;
}

std::vector<std::string> split_args(std::string_view args) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= args.size()) {
        const auto comma = args.find(',', start);
        const auto end = comma == std::string_view::npos ? args.size() : comma;
        out.push_back(trim(args.substr(start, end - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::string StrategySpec::name() const {
    switch (kind) {
        case Kind::Greedy:   return "greedy";
        case Kind::Beam:     return "beam{" + std::to_string(beam_width) + "}";
        case Kind::Sampling: return "sp{" + short_number(temperature) + "}";
        case Kind::Adapt:    return "adapt{" + short_number(adapt.a) + "," + short_number(adapt.b) + "}";
    }
    return "unknown";
}

StrategySpec parse_strategy(std::string_view text, const AdaptConfig& adapt_defaults) {
    const std::string spec = trim(text);
    std::string head = spec;
    std::string args;
    bool has_args = false;
    if (const auto brace = spec.find('{'); brace != std::string::npos) {
        if (spec.back() != '}') fail(ErrorKind::InvalidParameter, "unbalanced braces in strategy '" + spec + "'");
        head = spec.substr(0, brace);
        args = spec.substr(brace + 1, spec.size() - brace - 2);
        has_args = true;
    } else if (const auto colon = spec.find(':'); colon != std::string::npos) {
        head = spec.substr(0, colon);
        args = spec.substr(colon + 1);
        has_args = true;
    }

    StrategySpec out;
    const auto values = has_args ? split_args(args) : std::vector<std::string>{};
    auto expect_args = [&](std::size_t n) {
        if (values.size() != n) {
            fail(ErrorKind::InvalidParameter, "strategy '" + spec + "' expects " + std::to_string(n) +
                                                  " argument(s)");
        }
    };

    if (head == "greedy") {
        expect_args(0);
        out.kind = StrategySpec::Kind::Greedy;
    } else if (head == "beam") {
        out.kind = StrategySpec::Kind::Beam;
        out.beam_width = 4;
        if (has_args) {
            expect_args(1);
            const double b = parse_number(values[0], spec);
            if (b < 1 || b != static_cast<double>(static_cast<std::size_t>(b))) {
                fail(ErrorKind::InvalidParameter, "beam width must be a positive integer");
            }
            out.beam_width = static_cast<std::size_t>(b);
        }
    } else if (head == "sp") {
        expect_args(1);
        out.kind = StrategySpec::Kind::Sampling;
        out.temperature = parse_number(values[0], spec);
        if (!(out.temperature >= 0.0)) fail(ErrorKind::InvalidParameter, "sp temperature must be >= 0");
    } else if (head == "adapt") {
        out.kind = StrategySpec::Kind::Adapt;
        out.adapt = adapt_defaults;
        if (has_args) {
            expect_args(2);
            out.adapt.a = parse_number(values[0], spec);
            out.adapt.b = parse_number(values[1], spec);
        }
        out.adapt.validate();
    } else {
        fail(ErrorKind::InvalidParameter,
             "unknown strategy '" + spec + "' (expected greedy, beam{B}, sp{T} or adapt{a,b})");
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t seed_base, std::string_view task_id, std::size_t sample_index) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : task_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    h = splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(sample_index)));
    return seed_base ^ h;
}

GeneratedSamples generate_samples(const LogitsProvider& model, const std::vector<Task>& tasks,
                                  const StrategySpec& strategy, const GenerationConfig& config,
                                  std::size_t workers) {
    const bool single = strategy.deterministic() ||
                        (strategy.kind == StrategySpec::Kind::Sampling && strategy.temperature == 0.0);
    const std::size_t per_task = single ? 1 : config.n;

    std::unique_ptr<TemperaturePolicy> policy;
    switch (strategy.kind) {
        case StrategySpec::Kind::Greedy:
        case StrategySpec::Kind::Beam:
            policy = std::make_unique<ConstantTemperature>(0.0);
            break;
        case StrategySpec::Kind::Sampling:
            policy = std::make_unique<ConstantTemperature>(strategy.temperature);
            break;
        case StrategySpec::Kind::Adapt:
            policy = std::make_unique<AdaptPolicy>(strategy.adapt);
            break;
    }

    GenerateOptions gen;
    gen.top_p = config.top_p;
    gen.max_len = config.max_len;
    gen.stop = config.stop;
    gen.tracker = config.tracker;

    BeamOptions beam;
    beam.beam_width = strategy.beam_width;
    beam.max_len = config.max_len;
    beam.stop = config.stop;
    beam.tracker = config.tracker;

    const std::size_t jobs = tasks.size() * per_task;
    std::vector<std::optional<Sample>> slots(jobs);
    std::vector<std::optional<std::string>> errors(jobs);

    parallel_for(jobs, workers, [&](std::size_t j) {
        const auto& task = tasks[j / per_task];
        const std::size_t index = j % per_task;
        const auto seed = derive_seed(config.seed, task.task_id, index);
        try {
            GenerationResult r;
            if (strategy.kind == StrategySpec::Kind::Beam) {
                r = beam_search(model, task.prompt, beam).front();
            } else {
                RandomSource rng(seed);
                r = generate(model, task.prompt, *policy, gen, rng);
            }
            Sample s;
            s.task_id = task.task_id;
            s.sample_index = index;
            s.completion = std::move(r.text);
            s.seed = seed;
            s.strategy = strategy.name();
            s.stop_reason = std::string(to_string(r.stop_reason));
            s.temperatures = std::move(r.temperatures);
            s.block_initial = std::move(r.block_initial);
            slots[j] = std::move(s);
        } catch (const Error& e) {
            errors[j] = e.what();
        }
    });

    GeneratedSamples out;
    for (std::size_t j = 0; j < jobs; ++j) {
        if (slots[j]) {
            out.samples.push_back(std::move(*slots[j]));
        } else if (errors[j]) {
            const auto& task_id = tasks[j / per_task].task_id;
            if (out.failures.empty() || out.failures.back().task_id != task_id) {
                out.failures.push_back({task_id, *errors[j]});
            }
        }
    }
    return out;
}

ComparisonReport compare_strategies(const LogitsProvider& model, const std::vector<Task>& tasks,
                                    const std::vector<StrategySpec>& strategies,
                                    const GenerationConfig& config,
                                    const std::vector<std::size_t>& ks,
                                    const EvalOptions& options) {
    if (strategies.empty()) fail(ErrorKind::InvalidParameter, "no strategies to compare");
    EvalOptions eval = options;
    if (!eval.cache) eval.cache = std::make_shared<ExecutionCache>();

    ComparisonReport out;
    out.ks = ks;
    std::sort(out.ks.begin(), out.ks.end());
    out.ks.erase(std::unique(out.ks.begin(), out.ks.end()), out.ks.end());
    for (const auto& strategy : strategies) {
        auto generated = generate_samples(model, tasks, strategy, config, eval.workers);
        StrategyResult result;
        result.strategy = strategy;
        result.report = evaluate(tasks, generated.samples, out.ks, eval);
        result.failures = std::move(generated.failures);
        out.results.push_back(std::move(result));
    }
    return out;
}

}  // namespace adapt
