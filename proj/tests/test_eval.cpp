#include <doctest.h>

#include <chrono>
#include <csignal>
#include <sstream>
#include <json.hpp>
#include <random>
#include <set>

#include "adapt/backends.hpp"
#include "adapt/error.hpp"
#include "adapt/eval.hpp"
#include "support.hpp"

using namespace adapt;
using nlohmann::json;

namespace {

// Share of k-subsets of n samples (the first c correct) holding a correct one.
double pass_at_k_subsets(std::size_t n, std::size_t c, std::size_t k) {
    std::size_t hit = 0, total = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
        ++total;
        if (mask & ((1u << c) - 1)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

struct HarnessFixture {
    std::string name, completion, expected;
};

std::vector<HarnessFixture> harness_fixtures() {
    std::vector<HarnessFixture> out;
    std::istringstream in(testsupport::read_file(testsupport::source_dir() / "data/harness/fixtures.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        out.push_back({j["name"], j["completion"], j["expected"]});
    }
    return out;
}

Task harness_task() { return load_tasks(testsupport::source_dir() / "data/harness/task.jsonl").at(0); }

Sample sample(const std::string& task, std::size_t index, const std::string& completion) {
    Sample s;
    s.task_id = task;
    s.sample_index = index;
    s.completion = completion;
    return s;
}

}  // namespace

TEST_CASE("pass@k equals subset enumeration") {
    for (std::size_t n = 1; n <= 10; ++n)
        for (std::size_t c = 0; c <= n; ++c)
            for (std::size_t k = 1; k <= n; ++k) {
                CAPTURE(n);
                CAPTURE(c);
                CAPTURE(k);
                CHECK(pass_at_k(n, c, k) == doctest::Approx(pass_at_k_subsets(n, c, k)).epsilon(1e-12));
            }
}

TEST_CASE("pass@k edge values and validation") {
    CHECK(pass_at_k(15, 0, 5) == 0.0);
    CHECK(pass_at_k(15, 15, 1) == 1.0);
    CHECK(pass_at_k(15, 11, 5) == 1.0);  // n - c < k
    CHECK(pass_at_k(10, 3, 1) == doctest::Approx(0.3));
    CHECK(pass_at_k(200, 1, 1) == doctest::Approx(0.005));
    CHECK_THROWS_AS(pass_at_k(0, 0, 1), Error);
    CHECK_THROWS_AS(pass_at_k(5, 1, 0), Error);
    CHECK_THROWS_AS(pass_at_k(5, 1, 6), Error);
    CHECK_THROWS_AS(pass_at_k(5, 6, 1), Error);
}

TEST_CASE("property: pass@k is monotone in c and k") {
    for (std::size_t n = 1; n <= 30; ++n)
        for (std::size_t c = 0; c <= n; ++c)
            for (std::size_t k = 1; k <= n; ++k) {
                const double v = pass_at_k(n, c, k);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                if (c < n) CHECK(pass_at_k(n, c + 1, k) >= v);
                if (k < n) CHECK(pass_at_k(n, c, k + 1) >= v);
            }
}

TEST_CASE("classify_exit reads the final exception line") {
    CHECK(classify_exit(0, 0, "").cls == OutcomeClass::Passed);
    CHECK(classify_exit(1, 0, "Traceback\n  ...\nAssertionError\n").cls == OutcomeClass::WrongAnswer);
    CHECK(classify_exit(1, 0, "x\nTypeError: bad operand\n").cls == OutcomeClass::TypeError);
    const auto other = classify_exit(1, 0, "KeyError: 'k'\n");
    CHECK(other.cls == OutcomeClass::Other);
    CHECK(other.label() == "KeyError");
    CHECK(classify_exit(3, 0, "no exception here").label() == "ExitCode3");
    CHECK(classify_exit(-1, 9, "").label() == "Signal9");
    CHECK(classify_exit(-1, SIGXCPU, "").cls == OutcomeClass::Timeout);
}

TEST_CASE("assembled program calls check on the entry point") {
    const auto t = harness_task();
    const auto program = assemble_program(t, "    return a + b\n");
    CHECK(program.rfind(t.prompt + "    return a + b\n", 0) == 0);
    CHECK(program.find("check(add)") != std::string::npos);
}

TEST_CASE("harness taxonomy over the fixture programs") {
    const auto task = harness_task();
    const auto fixtures = harness_fixtures();
    REQUIRE(fixtures.size() == 7);
    ExecutionOptions opts;
    opts.time_limit_seconds = 2.0;
    for (const auto& f : fixtures) {
        CAPTURE(f.name);
        const auto out = execute_sample(task, f.completion, opts);
        CHECK(out.label() == f.expected);
        if (f.expected == "Timeout") CHECK(out.wall_seconds < opts.time_limit_seconds + 2.0);
    }
}

TEST_CASE("programs run in an empty scratch directory and cannot leave files behind") {
    Task t = harness_task();
    t.test = "import os\nassert os.listdir('.') == ['program.py'], os.listdir('.')\nopen('junk', 'w').write('x')\n";
    const auto first = execute_sample(t, "    return a + b\n", {});
    CHECK(first.label() == "Passed");
    CHECK(execute_sample(t, "    return a + b\n", {}).label() == "Passed");
}

TEST_CASE("missing interpreter is an environment error") {
    ExecutionOptions opts;
    opts.python = "/nonexistent/python-xyz";
    try {
        execute_sample(harness_task(), "    return 0\n", opts);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EnvironmentError);
    }
}

TEST_CASE("evaluate: per-task counts, undefined pass@k for k > n, dedup and cache") {
    const auto task = harness_task();
    Task other = task;
    other.task_id = "Harness/1";
    const std::vector<Sample> samples{
        sample("Harness/0", 1, "    return a - b\n"), sample("Harness/0", 0, "    return a + b\n"),
        sample("Harness/0", 2, "    return a + b\n"), sample("Harness/1", 0, "    return a - b\n"),
    };
    EvalOptions opts;
    opts.cache = std::make_shared<ExecutionCache>();
    const auto r = evaluate({task, other}, samples, {3, 1, 1}, opts);
    CHECK(r.ks == std::vector<std::size_t>{1, 3});
    REQUIRE(r.tasks.size() == 2);
    CHECK(r.tasks[0].n == 3);
    CHECK(r.tasks[0].c == 2);
    CHECK(r.tasks[0].outcomes == std::vector<std::string>{"Passed", "WrongAnswer", "Passed"});
    CHECK(*r.tasks[0].pass_at.at(1) == doctest::Approx(2.0 / 3));
    CHECK(*r.tasks[0].pass_at.at(3) == 1.0);
    CHECK_FALSE(r.tasks[1].pass_at.at(3).has_value());
    CHECK(*r.mean_pass_at.at(1) == doctest::Approx((2.0 / 3 + 0.0) / 2));
    CHECK(*r.mean_pass_at.at(3) == 1.0);  // only defined tasks are averaged
    CHECK(r.solved == 1);
    CHECK(r.outcome_histogram.at("Passed") == 2);
    CHECK(r.warnings.size() == 1);
    CHECK(opts.cache->size() == 3);  // (task, completion) pairs

    // A cached outcome is reused even if it disagrees with a fresh run.
    ExecutionOutcome fake;
    fake.cls = OutcomeClass::Passed;
    opts.cache = std::make_shared<ExecutionCache>();
    opts.cache->store("Harness/1", "    return a - b\n", fake);
    const auto again = evaluate({task, other}, samples, {1}, opts);
    CHECK(again.tasks[1].c == 1);

    CHECK_THROWS_AS(evaluate({task}, {sample("Nope", 0, "")}, {1}), Error);
}

TEST_CASE("report serializations are deterministic and exclude timings") {
    const auto task = harness_task();
    const std::vector<Sample> samples{sample("Harness/0", 0, "    return a + b\n")};
    const auto a = evaluate({task}, samples, {1});
    const auto b = evaluate({task}, samples, {1});
    CHECK(report_json(a) == report_json(b));
    CHECK(report_csv(a) == report_csv(b));
    CHECK(report_json(a).find("wall") == std::string::npos);
    CHECK(report_csv(a).find("mean") != std::string::npos);
}

TEST_CASE("strategy parsing and canonical names") {
    CHECK(parse_strategy("greedy").kind == StrategySpec::Kind::Greedy);
    CHECK(parse_strategy("beam{3}").beam_width == 3);
    CHECK(parse_strategy("beam").beam_width == 4);
    CHECK(parse_strategy("sp{0.4}").temperature == 0.4);
    CHECK(parse_strategy("sp:0.4").name() == "sp{0.4}");
    const auto a = parse_strategy("adapt{0.8, 0.2}");
    CHECK(a.adapt.a == 0.8);
    CHECK(a.adapt.b == 0.2);
    CHECK(a.name() == "adapt{0.8,0.2}");
    CHECK(parse_strategy("adapt", AdaptConfig{0.6, 0.3, 0.9}).name() == "adapt{0.6,0.3}");
    CHECK(parse_strategy("sp{0}").temperature == 0.0);
    for (const char* bad : {"sp{-1}", "adapt{0,0.5}", "adapt{0.5}", "beam{0}", "topk{3}", "sp{x}", ""}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_strategy(bad), Error);
    }
}

TEST_CASE("derived seeds are stable and distinct") {
    CHECK(derive_seed(7, "T/0", 3) == derive_seed(7, "T/0", 3));
    std::set<std::uint64_t> seen;
    for (int t = 0; t < 20; ++t)
        for (std::size_t i = 0; i < 20; ++i) seen.insert(derive_seed(7, "T/" + std::to_string(t), i));
    CHECK(seen.size() == 400);
    CHECK(derive_seed(7, "T/0", 0) != derive_seed(8, "T/0", 0));
}

TEST_CASE("generate_samples: deterministic strategies give one sample, seeds are recorded") {
    Vocabulary vocab({"    return 1", "\n", "x", "<|endoftext|>", "def f():"}, 3);
    // body line, newline, then a top-level token that the stop rule cuts
    ScriptedModel model(vocab,
                        {LogitVector({2.0, 1.0, 0.5, 0.1, -5.0}), LogitVector({0.5, 2.0, 1.0, 0.1, -5.0}),
                         LogitVector({0.5, 1.0, 2.0, 0.1, -5.0})},
                        LogitVector({0.0, 0.0, 0.0, 3.0, -5.0}), 2);
    Task t;
    t.task_id = "S/0";
    t.prompt = "def f():\n";
    t.entry_point = "f";
    Task u = t;
    u.task_id = "S/1";
    u.prompt = "def f():\n";
    GenerationConfig cfg;
    cfg.n = 4;
    cfg.max_len = 5;
    cfg.seed = 99;
    const auto greedy = generate_samples(model, {t, u}, parse_strategy("greedy"), cfg);
    REQUIRE(greedy.samples.size() == 2);
    CHECK(greedy.samples[0].completion == "    return 1");
    CHECK(greedy.samples[0].strategy == "greedy");

    const auto sp = generate_samples(model, {t, u}, parse_strategy("sp{1.0}"), cfg, 3);
    REQUIRE(sp.samples.size() == 8);
    CHECK(sp.failures.empty());
    for (const auto& s : sp.samples) CHECK(s.seed == derive_seed(99, s.task_id, s.sample_index));
    const auto again = generate_samples(model, {t, u}, parse_strategy("sp{1.0}"), cfg, 1);
    CHECK(samples_to_jsonl(sp.samples) == samples_to_jsonl(again.samples));
    // T = 0 sampling is deterministic too
    CHECK(generate_samples(model, {t}, parse_strategy("sp{0}"), cfg).samples.size() == 1);
}

TEST_CASE("generation failures are recorded per task, others continue") {
    Vocabulary vocab({"a", "<|endoftext|>"}, 1);
    ScriptedModel model(vocab, {}, LogitVector({0.0, 0.0}));
    Task ok;
    ok.task_id = "ok";
    ok.prompt = "a";
    Task bad = ok;
    bad.task_id = "bad";
    bad.prompt = "zzz";  // not tokenizable
    GenerationConfig cfg;
    cfg.n = 2;
    cfg.max_len = 3;
    const auto r = generate_samples(model, {bad, ok}, parse_strategy("sp{0.5}"), cfg);
    CHECK(r.samples.size() == 2);
    REQUIRE(r.failures.size() == 1);
    CHECK(r.failures[0].task_id == "bad");
}

TEST_CASE("task and sample files round trip") {
    const auto tasks = parse_tasks(
        "{\"task_id\": 3, \"prompt\": \"p\", \"test\": \"t\"}\n\n"
        "{\"task_id\": \"X/1\", \"prompt\": \"q\", \"test\": \"u\", \"entry_point\": \"f\", "
        "\"canonical_solution\": \"s\"}\n");
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[0].task_id == "3");
    CHECK_FALSE(tasks[0].canonical_solution.has_value());
    CHECK(tasks[1].entry_point == "f");
    CHECK(*tasks[1].canonical_solution == "s");
    CHECK_THROWS_AS(parse_tasks("{\"task_id\": 1, \"prompt\": \"p\"}\n"), Error);
    CHECK_THROWS_AS(parse_tasks("{\"task_id\": 1, \"prompt\": \"p\", \"test\": \"t\"}\n"
                                "{\"task_id\": 1, \"prompt\": \"p\", \"test\": \"t\"}\n"),
                    Error);
    CHECK_THROWS_AS(parse_tasks("not json\n"), Error);
    CHECK_THROWS_AS(load_tasks("/nonexistent/tasks.jsonl"), Error);

    Sample s = sample("X/1", 4, "  return \"q\"\n");
    s.seed = 12345678901234ull;
    s.strategy = "adapt{0.8,0.5}";
    s.stop_reason = "stop";
    s.temperatures = {0.8, 0.5};
    s.block_initial = {true, false};
    const auto text = samples_to_jsonl({s, sample("X/1", 5, "")});
    const auto back = parse_samples(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].completion == s.completion);
    CHECK(back[0].seed == s.seed);
    CHECK(back[0].strategy == s.strategy);
    CHECK(back[0].temperatures == s.temperatures);
    CHECK(back[0].block_initial == s.block_initial);
    CHECK(samples_to_jsonl(back) == text);
}

TEST_CASE("compare_strategies on a tiny task set shares executions") {
    Vocabulary vocab({"    return a + b\n", "    return a - b\n", "<|endoftext|>", "def add(a, b):\n"}, 2);
    ScriptedModel model(vocab, {}, LogitVector({0.0, 0.0, -50.0, -50.0}));
    const auto task = harness_task();
    GenerationConfig cfg;
    cfg.n = 4;
    cfg.max_len = 1;
    cfg.seed = 3;
    cfg.stop = StopCriteria::none();
    EvalOptions opts;
    opts.cache = std::make_shared<ExecutionCache>();
    const auto cmp = compare_strategies(model, {task}, {parse_strategy("sp{0.7}"), parse_strategy("adapt{0.7,0.7}")},
                                        cfg, {4, 1}, opts);
    CHECK(cmp.ks == std::vector<std::size_t>{1, 4});
    REQUIRE(cmp.results.size() == 2);
    CHECK(opts.cache->size() <= 2);
    // equal temperatures and shared seeds give identical columns
    CHECK(report_json(cmp.results[0].report) == report_json(cmp.results[1].report));
    const auto csv = comparison_csv(cmp);
    CHECK(csv.rfind("strategy,samples_per_task,pass@1,pass@4,solved\n", 0) == 0);
}
