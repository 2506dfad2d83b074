#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <httplib.h>
#include <json.hpp>
#include <thread>

#include "adapt/backends.hpp"
#include "adapt/error.hpp"
#include "adapt/sampling.hpp"
#include "support.hpp"

using namespace adapt;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidInput;
}

// Direct count of (context, next) over the documents, EOS appended as "\x01".
double counted_probability(const std::vector<std::string>& docs, const std::string& ctx, char next,
                           std::size_t vocab_size, double alpha) {
    double joint = 0, total = 0;
    for (auto d : docs) {
        d.push_back('\x01');
        for (std::size_t i = ctx.size(); i < d.size(); ++i) {
            if (d.compare(i - ctx.size(), ctx.size(), ctx) != 0) continue;
            ++total;
            joint += d[i] == next;
        }
    }
    return (joint + alpha) / (total + alpha * static_cast<double>(vocab_size));
}

struct MockServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> failures_left{0};
    std::atomic<int> logits_calls{0};
    std::atomic<bool> wrong_length{false};
    std::atomic<int> delay_ms{0};
    std::string seen_auth;
    std::vector<std::string> tokens{"a", "b", "<|endoftext|>"};

    MockServer() {
        server.Get("/v1/vocab", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"tokens", tokens}}.dump(), "application/json");
        });
        server.Post("/v1/logits", [this](const httplib::Request& req, httplib::Response& res) {
            ++logits_calls;
            seen_auth = req.get_header_value("Authorization");
            if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms.load()));
            if (failures_left > 0) {
                --failures_left;
                res.status = 503;
                res.set_content(json{{"code", "busy"}, {"message", "try later"}}.dump(), "application/json");
                return;
            }
            const auto body = json::parse(req.body);
            const auto ctx = body.at("context_ids").get<std::vector<int>>();
            // echo: logit of token 0 is the context length
            std::vector<double> logits{static_cast<double>(ctx.size()), 0.0, -1.0};
            if (wrong_length) logits.pop_back();
            res.set_content(json{{"logits", logits}, {"vocab_size", logits.size()}}.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~MockServer() {
        server.stop();
        thread.join();
    }
    RemoteOptions options() const {
        RemoteOptions o;
        o.endpoint = "http://127.0.0.1:" + std::to_string(port);
        o.retry_backoff = std::chrono::milliseconds(1);
        o.timeout = std::chrono::milliseconds(2000);
        return o;
    }
};

std::vector<double> vec(const LogitVector& v) {
    const auto s = v.values();
    return {s.begin(), s.end()};
}

const std::string kCorpus = "def f(x):\n    return x\n<|endoftext|>\ndef g(y):\n    return y + 1\n";

}  // namespace

TEST_CASE("documents split on marker lines") {
    const auto docs = split_documents("a\n<|endoftext|>\n<|endoftext|>\nb\nc\n<|endoftext|>");
    REQUIRE(docs.size() == 2);
    CHECK(docs[0] == "a\n");
    CHECK(docs[1] == "b\nc\n");
}

TEST_CASE("char n-gram conditionals match direct counts") {
    const std::vector<std::string> docs{"def f(x):\n    return x\n", "def g(y):\n    return y + 1\n"};
    const NGramOptions opts{.order = 3, .alpha = 0.5};
    const auto model = NGramModel::train(kCorpus, opts);
    const auto& vocab = model.vocabulary();
    for (const std::string ctx : {"re", "de", "  ", "f(", "n "}) {
        CAPTURE(ctx);
        const auto p = model.conditional(model.tokenize(ctx));
        double sum = 0;
        for (TokenId id = 0; id < static_cast<TokenId>(vocab.size()); ++id) {
            const char c = id == vocab.eos_id() ? '\x01' : vocab.text(id)[0];
            CHECK(p[static_cast<std::size_t>(id)] ==
                  doctest::Approx(counted_probability(docs, ctx, c, vocab.size(), 0.5)).epsilon(1e-12));
            sum += p[static_cast<std::size_t>(id)];
        }
        CHECK(sum == doctest::Approx(1.0));
    }
    // logits are log-probabilities
    const auto ctx = model.tokenize("re");
    const auto lp = log_softmax(model.next_logits(ctx));
    CHECK(std::exp(lp[0]) == doctest::Approx(model.conditional(ctx)[0]));
}

TEST_CASE("unseen contexts back off, or go uniform without backoff") {
    const auto with = NGramModel::train(kCorpus, NGramOptions{.order = 3, .alpha = 0.5});
    const auto without = NGramModel::train(kCorpus, NGramOptions{.order = 3, .alpha = 0.5, .backoff = false});
    const auto unseen = with.tokenize("xd");  // "xd" never occurs; "d" does
    CHECK(with.conditional(unseen) == with.conditional(with.tokenize("d")));
    const auto flat = without.conditional(unseen);
    for (double v : flat) CHECK(v == doctest::Approx(1.0 / static_cast<double>(flat.size())));
}

TEST_CASE("training validation") {
    CHECK(kind_of([] { NGramModel::train("", {}); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([] { NGramModel::train("<|endoftext|>\n", {}); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([] { NGramModel::train("ab", NGramOptions{.order = 0}); }) == ErrorKind::InvalidParameter);
    CHECK(kind_of([] { NGramModel::train("ab", NGramOptions{.alpha = 0.0}); }) == ErrorKind::InvalidParameter);
    const auto m = NGramModel::train("ab", {});
    CHECK(kind_of([&] { m.tokenize("abz"); }) == ErrorKind::InvalidInput);
    const std::vector<TokenId> bad{99};
    CHECK(kind_of([&] { m.next_logits(bad); }) == ErrorKind::InvalidInput);
}

TEST_CASE("serialization round trip, byte-identical retrain, corruption") {
    const NGramOptions opts{.order = 4, .alpha = 0.02};
    const auto a = NGramModel::train(kCorpus, opts);
    const auto b = NGramModel::train(kCorpus, opts);
    CHECK(a.serialize() == b.serialize());
    const auto back = NGramModel::deserialize(a.serialize());
    CHECK(back == a);
    CHECK(back.options().order == 4);
    const auto ctx = a.tokenize("def ");
    CHECK(back.conditional(ctx) == a.conditional(ctx));

    auto bytes = a.serialize();
    auto corrupt = bytes;
    corrupt[0] ^= 0x5a;
    CHECK(kind_of([&] { NGramModel::deserialize(corrupt); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([&] { NGramModel::deserialize(bytes.substr(0, bytes.size() / 2)); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([&] { NGramModel::deserialize(bytes + "x"); }) == ErrorKind::InvalidInput);

    const auto dir = std::filesystem::temp_directory_path() / "adapt_test_ngram";
    std::filesystem::create_directories(dir);
    a.save(dir / "m.ngram");
    CHECK(NGramModel::load(dir / "m.ngram") == a);
    CHECK(kind_of([&] { NGramModel::load(dir / "missing.ngram"); }) == ErrorKind::IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("word pieces") {
    CHECK(split_word_pieces("def f(x):\n    return x_1") ==
          std::vector<std::string>{"def", " ", "f", "(", "x", ")", ":", "\n    ", "return", " ", "x_1"});
    const auto m = NGramModel::train(kCorpus, NGramOptions{.order = 3, .unit = NGramUnit::Word});
    CHECK(m.vocabulary().find("return") >= 0);
    const auto ids = m.tokenize("return yx");  // "yx" unseen: falls back to characters
    CHECK(m.detokenize(ids) == "return yx");
    CHECK(ids.size() == 4);
}

TEST_CASE("scripted model from JSON") {
    const auto m = ScriptedModel::from_json(
        R"({"tokens": ["a", "b", "<|endoftext|>"], "eos_id": 2, "steps": [[1, 0, 0]], "fallback": [0, 0, 5], "prompt_length": 1})");
    const std::vector<TokenId> prompt{0};
    CHECK(vec(m.next_logits(prompt)) == std::vector<double>{1, 0, 0});
    const std::vector<TokenId> later{0, 1, 1};
    CHECK(vec(m.next_logits(later)) == std::vector<double>{0, 0, 5});
    CHECK(kind_of([] { ScriptedModel::from_json(R"({"tokens": ["a"], "eos_id": 0, "steps": [[1, 2]], "fallback": [0]})"); }) ==
          ErrorKind::InvalidInput);
    CHECK(kind_of([] { ScriptedModel::from_json("{"); }) == ErrorKind::InvalidInput);
}

TEST_CASE("backend specs") {
    CHECK(kind_of([] { open_backend("bogus:x"); }) == ErrorKind::InvalidParameter);
    CHECK(kind_of([] { open_backend("ngram:/nonexistent/m.ngram"); }) == ErrorKind::IoError);
}

TEST_CASE("remote backend against a mock server") {
    MockServer mock;
    SUBCASE("echo and auth") {
        auto opts = mock.options();
        opts.auth_token = "secret";
        RemoteBackend remote(opts);
        CHECK(remote.vocabulary().size() == 3);
        CHECK(remote.eos_id() == 2);
        const std::vector<TokenId> ctx{0, 1, 1};
        CHECK(vec(remote.next_logits(ctx))[0] == 3.0);
        CHECK(mock.seen_auth == "Bearer secret");
    }
    SUBCASE("wrong length is a protocol error") {
        mock.wrong_length = true;
        RemoteBackend remote(mock.options());
        CHECK(kind_of([&] { remote.next_logits({}); }) == ErrorKind::ProtocolError);
    }
    SUBCASE("5xx is retried") {
        mock.failures_left = 2;
        RemoteBackend remote(mock.options());
        CHECK(vec(remote.next_logits({}))[0] == 0.0);
        CHECK(mock.logits_calls == 3);
    }
    SUBCASE("retries run out") {
        mock.failures_left = 100;
        auto opts = mock.options();
        opts.max_retries = 1;
        RemoteBackend remote(opts);
        CHECK(kind_of([&] { remote.next_logits({}); }) == ErrorKind::BackendError);
        CHECK(mock.logits_calls == 2);
    }
    SUBCASE("timeout") {
        mock.delay_ms = 600;
        auto opts = mock.options();
        opts.timeout = std::chrono::milliseconds(150);
        opts.max_retries = 0;
        RemoteBackend remote(opts);
        (void)remote.vocabulary();
        CHECK(kind_of([&] { remote.next_logits({}); }) == ErrorKind::BackendError);
    }
}

TEST_CASE("logits server paired with the remote client reproduces the local model") {
    const auto model = NGramModel::train(kCorpus, NGramOptions{.order = 4});
    LogitsServer server(model);
    const int port = server.bind("127.0.0.1", 0);
    std::thread t([&] { server.listen(); });
    {
        RemoteOptions opts;
        opts.endpoint = "http://127.0.0.1:" + std::to_string(port);
        RemoteBackend remote(opts);
        CHECK(remote.vocabulary().tokens() == model.vocabulary().tokens());
        const auto ctx = model.tokenize("def g(");
        CHECK(vec(remote.next_logits(ctx)) == vec(model.next_logits(ctx)));

        // identical seeded generations
        GenerateOptions g;
        g.max_len = 30;
        RandomSource r1(4), r2(4);
        const auto local = generate(model, "def f", ConstantTemperature(0.8), g, r1);
        const auto served = generate(remote, "def f", ConstantTemperature(0.8), g, r2);
        CHECK(local.text == served.text);

        const std::vector<TokenId> bad{9999};
        CHECK(kind_of([&] { remote.next_logits(bad); }) == ErrorKind::BackendError);
    }
    server.stop();
    t.join();
}
