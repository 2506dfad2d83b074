#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "adapt/backends.hpp"
#include "adapt/error.hpp"
#include "adapt/eval.hpp"
#include "adapt/loss_analysis.hpp"
#include "adapt/policy.hpp"

namespace adapt::cli {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr const char* kTokenEnv = "ADAPT_REMOTE_TOKEN";

// Values as typed on the command line; nullopt means "not given".
struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> backend;
    std::vector<std::string> strategies;
    std::optional<double> a, b, temp, top_p, time_limit;
    std::optional<std::size_t> n, seed, max_len, workers;
    std::vector<std::size_t> ks;
    std::optional<std::string> dataset, out, profile, samples, corpus, nl_corpus;
    // train
    std::optional<std::size_t> order;
    std::optional<double> alpha;
    std::optional<std::string> unit;
    bool no_backoff = false;
    // serve
    std::string host = "127.0.0.1";
    int port = 8080;
};

struct RunConfig {
    std::string backend;
    std::vector<std::string> strategies;
    std::optional<double> a, b, temp;
    std::string profile = "pass@k";
    double top_p = 0.95;
    std::size_t n = 15;
    bool n_given = false;
    std::vector<std::size_t> ks{1, 5, 10, 15};
    std::uint64_t seed = 0;
    std::size_t max_len = 500;
    std::string dataset;
    std::string out;
    std::size_t workers = 4;
    double time_limit = 10.0;
    std::string samples;
    std::string corpus;
    std::string nl_corpus;
    std::size_t order = 6;
    double alpha = 0.01;
    std::string unit = "char";
    bool backoff = true;
};

[[noreturn]] void usage(const std::string& msg) { fail(ErrorKind::InvalidParameter, msg); }

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) fail(ErrorKind::IoError, "cannot write " + path);
}

template <typename T>
std::vector<T> one_or_many(const json& v, const char* key) {
    try {
        if (v.is_array()) return v.get<std::vector<T>>();
        return {v.get<T>()};
    } catch (const json::exception&) {
        usage(std::string("config key '") + key + "' has the wrong type");
    }
}

// Config file values first, then command-line flags on top.
RunConfig resolve(const Flags& f) {
    RunConfig c;
    if (f.config) {
        json doc;
        try {
            doc = json::parse(read_text(*f.config));
        } catch (const json::exception& e) {
            fail(ErrorKind::InvalidInput, "config " + *f.config + ": " + e.what());
        }
        if (!doc.is_object()) fail(ErrorKind::InvalidInput, "config " + *f.config + ": expected an object");
        for (const auto& [key, v] : doc.items()) {
            try {
                if (key == "backend") c.backend = v.get<std::string>();
                else if (key == "strategy" || key == "strategies") c.strategies = one_or_many<std::string>(v, "strategy");
                else if (key == "a") c.a = v.get<double>();
                else if (key == "b") c.b = v.get<double>();
                else if (key == "temp") c.temp = v.get<double>();
                else if (key == "profile") c.profile = v.get<std::string>();
                else if (key == "top_p") c.top_p = v.get<double>();
                else if (key == "n") { c.n = v.get<std::size_t>(); c.n_given = true; }
                else if (key == "k") c.ks = one_or_many<std::size_t>(v, "k");
                else if (key == "seed") c.seed = v.get<std::uint64_t>();
                else if (key == "max_len") c.max_len = v.get<std::size_t>();
                else if (key == "dataset") c.dataset = v.get<std::string>();
                else if (key == "out") c.out = v.get<std::string>();
                else if (key == "workers") c.workers = v.get<std::size_t>();
                else if (key == "time_limit") c.time_limit = v.get<double>();
                else if (key == "samples") c.samples = v.get<std::string>();
                else if (key == "corpus") c.corpus = v.get<std::string>();
                else if (key == "nl_corpus") c.nl_corpus = v.get<std::string>();
                else if (key == "order") c.order = v.get<std::size_t>();
                else if (key == "alpha") c.alpha = v.get<double>();
                else if (key == "unit") c.unit = v.get<std::string>();
                else if (key == "backoff") c.backoff = v.get<bool>();
                else usage("unknown config key '" + key + "'");
            } catch (const json::exception&) {
                usage("config key '" + key + "' has the wrong type");
            }
        }
    }
    if (f.backend) c.backend = *f.backend;
    if (!f.strategies.empty()) c.strategies = f.strategies;
    if (f.a) c.a = f.a;
    if (f.b) c.b = f.b;
    if (f.temp) c.temp = f.temp;
    if (f.profile) c.profile = *f.profile;
    if (f.top_p) c.top_p = *f.top_p;
    if (f.n) { c.n = *f.n; c.n_given = true; }
    if (!f.ks.empty()) c.ks = f.ks;
    if (f.seed) c.seed = *f.seed;
    if (f.max_len) c.max_len = *f.max_len;
    if (f.dataset) c.dataset = *f.dataset;
    if (f.out) c.out = *f.out;
    if (f.workers) c.workers = *f.workers;
    if (f.time_limit) c.time_limit = *f.time_limit;
    if (f.samples) c.samples = *f.samples;
    if (f.corpus) c.corpus = *f.corpus;
    if (f.nl_corpus) c.nl_corpus = *f.nl_corpus;
    if (f.order) c.order = *f.order;
    if (f.alpha) c.alpha = *f.alpha;
    if (f.unit) c.unit = *f.unit;
    if (f.no_backoff) c.backoff = false;

    if (!(c.top_p > 0.0 && c.top_p <= 1.0)) usage("top-p must lie in (0, 1], got " + std::to_string(c.top_p));
    if (c.n == 0) usage("n must be at least 1");
    if (c.workers == 0) usage("workers must be at least 1");
    if (!(c.time_limit > 0.0)) usage("time limit must be positive");
    for (auto k : c.ks) {
        if (k == 0) usage("k must be at least 1");
    }
    return c;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) usage(std::string("missing ") + flag);
}

AdaptConfig adapt_defaults(const RunConfig& c) {
    AdaptConfig cfg = AdaptConfig::profile(c.profile);
    if (c.a) cfg.a = *c.a;
    if (c.b) cfg.b = *c.b;
    cfg.top_p = c.top_p;
    return cfg;
}

StrategySpec strategy_from(const std::string& text, const RunConfig& c) {
    auto spec = parse_strategy(text, adapt_defaults(c));
    if (spec.kind == StrategySpec::Kind::Adapt) spec.adapt.top_p = c.top_p;
    return spec;
}

// The single strategy of generate/evaluate runs. Without --strategy: sp{--temp} if given,
// otherwise AdapT from the profile.
StrategySpec single_strategy(const RunConfig& c) {
    if (c.strategies.size() > 1) usage("this command takes exactly one strategy");
    if (!c.strategies.empty()) return strategy_from(c.strategies.front(), c);
    if (c.temp) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "sp{%.17g}", *c.temp);
        return strategy_from(buf, c);
    }
    return strategy_from("adapt", c);
}

std::unique_ptr<LogitsProvider> backend_from(const RunConfig& c) {
    require(c.backend, "--backend");
    std::optional<std::string> token;
    if (const char* t = std::getenv(kTokenEnv)) token = std::string(t);
    return open_backend(c.backend, token);
}

GenerationConfig generation_config(const RunConfig& c) {
    GenerationConfig g;
    g.top_p = c.top_p;
    g.max_len = c.max_len;
    g.n = c.n;
    g.seed = c.seed;
    return g;
}

EvalOptions eval_options(const RunConfig& c) {
    EvalOptions e;
    e.workers = c.workers;
    e.execution.time_limit_seconds = c.time_limit;
    return e;
}

json config_json(const RunConfig& c, const std::vector<StrategySpec>& strategies) {
    json j;
    j["backend"] = c.backend;
    json names = json::array();
    for (const auto& s : strategies) names.push_back(s.name());
    j["strategies"] = names;
    j["profile"] = c.profile;
    j["top_p"] = c.top_p;
    j["n"] = c.n;
    j["k"] = c.ks;
    j["seed"] = c.seed;
    j["max_len"] = c.max_len;
    j["dataset"] = c.dataset;
    j["workers"] = c.workers;
    j["time_limit"] = c.time_limit;
    return j;
}

json metadata(Clock::time_point started) {
    return {{"wall_seconds", std::chrono::duration<double>(Clock::now() - started).count()}};
}

void warn_n_ignored(const RunConfig& c, const StrategySpec& s, std::ostream& err) {
    if (c.n_given && s.deterministic() && c.n != 1) {
        err << "warning: " << s.name() << " is deterministic; n=" << c.n << " ignored, 1 sample per task\n";
    }
}

int report_failures(const std::vector<GenerationFailure>& failures, std::ostream& err) {
    for (const auto& f : failures) err << "error: task " << f.task_id << ": " << f.message << "\n";
    return failures.empty() ? kOk : kPartial;
}

// ---------------------------------------------------------------------------

int cmd_generate(const RunConfig& c, std::ostream& err) {
    const auto started = Clock::now();
    require(c.dataset, "--dataset");
    require(c.out, "--out");
    const auto strategy = single_strategy(c);
    warn_n_ignored(c, strategy, err);
    const auto tasks = load_tasks(c.dataset);
    const auto model = backend_from(c);
    const auto generated = generate_samples(*model, tasks, strategy, generation_config(c), c.workers);
    write_text(c.out, samples_to_jsonl(generated.samples));
    json meta;
    meta["config"] = config_json(c, {strategy});
    meta["generation_failures"] = json::array();
    for (const auto& f : generated.failures) {
        meta["generation_failures"].push_back({{"task_id", f.task_id}, {"message", f.message}});
    }
    meta["metadata"] = metadata(started);
    write_text(c.out + ".meta.json", meta.dump(2) + "\n");
    err << "wrote " << generated.samples.size() << " samples to " << c.out << "\n";
    return report_failures(generated.failures, err);
}

int cmd_evaluate(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const auto started = Clock::now();
    require(c.dataset, "--dataset");
    require(c.samples, "--samples");
    require(c.out, "--out");
    const auto tasks = load_tasks(c.dataset);
    const auto samples = load_samples(c.samples);
    const auto report = evaluate(tasks, samples, c.ks, eval_options(c));
    json doc;
    json cfg = config_json(c, {});
    cfg.erase("strategies");
    cfg["samples"] = c.samples;
    doc["config"] = cfg;
    doc["report"] = json::parse(report_json(report));
    doc["metadata"] = metadata(started);
    write_text(c.out + ".json", doc.dump(2) + "\n");
    const auto csv = report_csv(report);
    write_text(c.out + ".csv", csv);
    out << csv;
    (void)err;
    return kOk;
}

int cmd_compare(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const auto started = Clock::now();
    require(c.dataset, "--dataset");
    require(c.out, "--out");
    if (c.strategies.size() < 2) usage("compare needs at least two --strategy values");
    std::vector<StrategySpec> strategies;
    for (const auto& s : c.strategies) {
        strategies.push_back(strategy_from(s, c));
        warn_n_ignored(c, strategies.back(), err);
    }
    const auto tasks = load_tasks(c.dataset);
    const auto model = backend_from(c);
    const auto report =
        compare_strategies(*model, tasks, strategies, generation_config(c), c.ks, eval_options(c));
    json doc;
    doc["config"] = config_json(c, strategies);
    doc["comparison"] = json::parse(comparison_json(report));
    doc["metadata"] = metadata(started);
    write_text(c.out + ".json", doc.dump(2) + "\n");
    const auto csv = comparison_csv(report);
    write_text(c.out + ".csv", csv);
    out << csv;
    int code = kOk;
    for (const auto& r : report.results) {
        if (report_failures(r.failures, err) != kOk) code = kPartial;
    }
    return code;
}

// ---------------------------------------------------------------------------
// analyze

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string csv_quote(const std::string& text) {
    // JSON escaping keeps control characters readable; CSV quoting doubles the quotes.
    const std::string escaped = json(text).dump();
    std::string out = "\"";
    for (char ch : escaped) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    return out + "\"";
}

json stats_json(const DistributionStats& s) {
    json j;
    j["count"] = s.count;
    j["mean"] = s.mean;
    j["stddev"] = s.stddev;
    j["skewness"] = s.skewness ? json(*s.skewness) : json(nullptr);
    j["perplexity"] = s.perplexity;
    return j;
}

struct AnalyzedSet {
    std::string name;
    std::vector<SnippetLossProfile> profiles;
    PositionDifficultyReport positions;
};

AnalyzedSet analyze_corpus(const LogitsProvider& model, const std::string& name, const std::string& path) {
    AnalyzedSet set;
    set.name = name;
    const auto text = read_text(path);
    const auto docs = split_documents(text);
    if (docs.empty()) fail(ErrorKind::InvalidInput, path + ": corpus holds no documents");
    for (std::size_t i = 0; i < docs.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "%s-%04zu", name.c_str(), i);
        set.profiles.push_back(compute_losses(model, docs[i], id));
    }
    set.positions = position_difficulty(set.profiles);
    return set;
}

json set_json(const AnalyzedSet& set) {
    json j;
    json per_text = json::array();
    std::vector<double> pooled;
    double sum_mean = 0, sum_std = 0, sum_ppl = 0, sum_skew = 0;
    std::size_t skew_count = 0;
    for (const auto& p : set.profiles) {
        const auto losses = p.losses();
        pooled.insert(pooled.end(), losses.begin(), losses.end());
        const auto s = distribution_stats(losses);
        sum_mean += s.mean;
        sum_std += s.stddev;
        sum_ppl += s.perplexity;
        if (s.skewness) {
            sum_skew += *s.skewness;
            ++skew_count;
        }
        per_text.push_back({{"id", p.id}, {"stats", stats_json(s)}});
    }
    const double m = static_cast<double>(set.profiles.size());
    j["texts"] = per_text;
    j["pooled"] = stats_json(distribution_stats(pooled));
    j["per_text_average"] = {
        {"mean", sum_mean / m},
        {"stddev", sum_std / m},
        {"perplexity", sum_ppl / m},
        {"skewness", skew_count ? json(sum_skew / static_cast<double>(skew_count)) : json(nullptr)},
    };
    const auto& r = set.positions;
    json pos;
    pos["total_tokens"] = r.total_tokens;
    pos["min_reported_count"] = r.min_reported_count;
    json entries = json::array();
    for (const auto& e : r.reported()) {
        entries.push_back({{"position", e.position}, {"average_pd", e.average_pd}, {"token_count", e.token_count}});
    }
    pos["positions"] = entries;
    json omitted = json::array();
    for (const auto& e : r.positions) {
        if (e.omitted) omitted.push_back({{"position", e.position}, {"token_count", e.token_count}});
    }
    pos["omitted_positions"] = omitted;
    pos["block_initial_average_pd"] = r.block_initial_average_pd ? json(*r.block_initial_average_pd) : json(nullptr);
    pos["other_line_first_average_pd"] =
        r.other_line_first_average_pd ? json(*r.other_line_first_average_pd) : json(nullptr);
    json sweep = json::array();
    for (const auto& s : r.threshold_sweep) {
        sweep.push_back({{"threshold", s.threshold},
                         {"challenging", s.challenging},
                         {"at_first_position", s.at_first_position},
                         {"at_block_initial", s.at_block_initial},
                         {"first_position_share", s.first_position_share},
                         {"block_initial_share", s.block_initial_share}});
    }
    pos["threshold_sweep"] = sweep;
    j["position_difficulty"] = pos;
    return j;
}

int cmd_analyze(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const auto started = Clock::now();
    require(c.corpus, "--corpus");
    require(c.out, "--out");
    const auto model = backend_from(c);
    std::vector<AnalyzedSet> sets;
    sets.push_back(analyze_corpus(*model, "code", c.corpus));
    if (!c.nl_corpus.empty()) sets.push_back(analyze_corpus(*model, "nl", c.nl_corpus));

    json doc;
    doc["config"] = {{"backend", c.backend}, {"corpus", c.corpus}, {"nl_corpus", c.nl_corpus}};
    json blocks;
    for (const auto& s : sets) blocks[s.name] = set_json(s);
    doc["sets"] = blocks;
    doc["metadata"] = metadata(started);
    write_text(c.out + ".json", doc.dump(2) + "\n");

    std::string tokens = "set,snippet,index,text,loss,pd,line,position,has_content,is_line_first,is_block_initial\n";
    std::string positions = "set,position,average_pd,token_count\n";
    std::string sweep = "set,threshold,challenging,at_first_position,at_block_initial,first_position_share,"
                        "block_initial_share\n";
    for (const auto& s : sets) {
        for (const auto& p : s.profiles) {
            for (std::size_t i = 0; i < p.records.size(); ++i) {
                const auto& r = p.records[i];
                tokens += s.name + "," + p.id + "," + std::to_string(i) + "," + csv_quote(r.text) + "," +
                          num(r.loss) + "," + num(p.pd[i]) + "," + std::to_string(r.line_index) + "," +
                          std::to_string(r.position_in_line) + "," + std::to_string(r.has_content) + "," +
                          std::to_string(r.is_line_first) + "," + std::to_string(r.is_block_initial) + "\n";
            }
        }
        for (const auto& e : s.positions.reported()) {
            positions += s.name + "," + std::to_string(e.position) + "," + num(e.average_pd) + "," +
                         std::to_string(e.token_count) + "\n";
        }
        for (const auto& h : s.positions.threshold_sweep) {
            sweep += s.name + "," + num(h.threshold) + "," + std::to_string(h.challenging) + "," +
                     std::to_string(h.at_first_position) + "," + std::to_string(h.at_block_initial) + "," +
                     num(h.first_position_share) + "," + num(h.block_initial_share) + "\n";
        }
    }
    write_text(c.out + "_tokens.csv", tokens);
    write_text(c.out + "_positions.csv", positions);
    write_text(c.out + "_sweep.csv", sweep);
    out << positions;
    err << "wrote " << c.out << ".json and CSV tables\n";
    return kOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& c, std::ostream& err) {
    require(c.corpus, "--corpus");
    require(c.out, "--out");
    NGramOptions o;
    o.order = c.order;
    o.alpha = c.alpha;
    o.backoff = c.backoff;
    if (c.unit == "char") o.unit = NGramUnit::Char;
    else if (c.unit == "word") o.unit = NGramUnit::Word;
    else usage("unit must be 'char' or 'word'");
    const auto model = NGramModel::train(read_text(c.corpus), o);
    model.save(c.out);
    err << "trained order-" << o.order << " model with " << model.vocabulary().size() << " tokens and "
        << model.context_count() << " contexts; wrote " << c.out << "\n";
    return kOk;
}

int cmd_serve(const RunConfig& c, const Flags& f, std::ostream& err) {
    const auto model = backend_from(c);
    LogitsServer server(*model);
    const int port = server.bind(f.host, f.port);
    err << "serving " << c.backend << " on " << f.host << ":" << port << "\n";
    server.listen();
    return kOk;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParameter: return kUsage;
        default:                          return kEnvironment;
    }
}

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file; flags override its values");
    app->add_option("--backend", f.backend, "scripted:<file> | ngram:<file> | remote:<url>");
}

void add_sampling(CLI::App* app, Flags& f) {
    app->add_option("--strategy", f.strategies, "greedy | beam{B} | sp{T} | adapt{a,b}");
    app->add_option("--a", f.a, "AdapT temperature at block-initial steps");
    app->add_option("--b", f.b, "AdapT temperature elsewhere");
    app->add_option("--temp", f.temp, "constant temperature (sp) when no --strategy is given");
    app->add_option("--top-p", f.top_p, "nucleus threshold p");
    app->add_option("--n", f.n, "samples per task");
    app->add_option("--seed", f.seed, "seed base");
    app->add_option("--max-len", f.max_len, "maximum generated tokens");
    app->add_option("--profile", f.profile, "AdapT defaults: pass@k or pass@1");
    app->add_option("--dataset", f.dataset, "tasks JSONL");
    app->add_option("--workers", f.workers, "worker threads");
}

void add_eval(CLI::App* app, Flags& f) {
    app->add_option("--k", f.ks, "k values for pass@k");
    app->add_option("--time-limit", f.time_limit, "per-sample time limit in seconds");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Flags f;
    CLI::App app{"AdapT decoding toolkit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "sample completions for every task");
    add_common(gen, f);
    add_sampling(gen, f);
    gen->add_option("--out", f.out, "samples JSONL path");

    auto* ana = app.add_subcommand("analyze", "per-token loss analysis of a corpus");
    add_common(ana, f);
    ana->add_option("--corpus", f.corpus, "code corpus (documents split by <|endoftext|> lines)");
    ana->add_option("--nl-corpus", f.nl_corpus, "optional natural-language corpus");
    ana->add_option("--out", f.out, "output prefix");

    auto* ev = app.add_subcommand("evaluate", "execute samples and compute pass@k");
    add_common(ev, f);
    add_eval(ev, f);
    ev->add_option("--dataset", f.dataset, "tasks JSONL");
    ev->add_option("--samples", f.samples, "samples JSONL");
    ev->add_option("--workers", f.workers, "worker threads");
    ev->add_option("--out", f.out, "output prefix");

    auto* cmp = app.add_subcommand("compare", "generate and evaluate several strategies");
    add_common(cmp, f);
    add_sampling(cmp, f);
    add_eval(cmp, f);
    cmp->add_option("--out", f.out, "output prefix");

    auto* tr = app.add_subcommand("train", "train an n-gram backend");
    add_common(tr, f);
    tr->add_option("--corpus", f.corpus, "training corpus");
    tr->add_option("--order", f.order, "n-gram order");
    tr->add_option("--alpha", f.alpha, "additive smoothing");
    tr->add_option("--unit", f.unit, "char or word");
    tr->add_flag("--no-backoff", f.no_backoff, "uniform distribution for unseen contexts");
    tr->add_option("--out", f.out, "model file");

    auto* srv = app.add_subcommand("serve", "serve a backend over the logits protocol");
    add_common(srv, f);
    srv->add_option("--host", f.host, "bind address");
    srv->add_option("--port", f.port, "port (0 picks a free one)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        const auto c = resolve(f);
        if (gen->parsed()) return cmd_generate(c, err);
        if (ana->parsed()) return cmd_analyze(c, out, err);
        if (ev->parsed()) return cmd_evaluate(c, out, err);
        if (cmp->parsed()) return cmd_compare(c, out, err);
        if (tr->parsed()) return cmd_train(c, err);
        if (srv->parsed()) return cmd_serve(c, f, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kEnvironment;
    }
    return kUsage;
}

}  // namespace adapt::cli
