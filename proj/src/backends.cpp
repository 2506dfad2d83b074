#include "adapt/backends.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adapt/error.hpp"

namespace adapt {

using json = nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode | std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool is_ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || static_cast<unsigned char>(c) >= 0x80;
}

// Little-endian binary helpers for the model file.
void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::string_view take(std::size_t n) {
        if (bytes_.size() - pos_ < n) fail(ErrorKind::InvalidInput, "truncated n-gram model file");
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(b[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(b[i])) << (8 * i);
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

constexpr std::string_view kModelMagic = "ADPTNGRM";
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------

ScriptedModel::ScriptedModel(Vocabulary vocab, std::vector<LogitVector> steps,
                             LogitVector fallback, std::size_t prompt_length)
    : vocab_(std::move(vocab)),
      steps_(std::move(steps)),
      fallback_(std::move(fallback)),
      prompt_length_(prompt_length) {
    auto check = [&](const LogitVector& v) {
        if (v.size() != vocab_.size()) {
            fail(ErrorKind::InvalidInput, "scripted logits length " + std::to_string(v.size()) +
                                              " != vocabulary size " +
                                              std::to_string(vocab_.size()));
        }
    };
    for (const auto& s : steps_) check(s);
    check(fallback_);
}

LogitVector ScriptedModel::next_logits(std::span<const TokenId> context) const {
    if (context.size() < prompt_length_) return fallback_;
    const std::size_t step = context.size() - prompt_length_;
    return step < steps_.size() ? steps_[step] : fallback_;
}

ScriptedModel ScriptedModel::from_json(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
        auto tokens = doc.at("tokens").get<std::vector<std::string>>();
        const auto eos = doc.at("eos_id").get<TokenId>();
        std::vector<LogitVector> steps;
        for (const auto& s : doc.value("steps", json::array())) {
            steps.emplace_back(s.get<std::vector<double>>());
        }
        LogitVector fallback(doc.at("fallback").get<std::vector<double>>());
        return ScriptedModel(Vocabulary(std::move(tokens), eos), std::move(steps),
                             std::move(fallback), doc.value("prompt_length", std::size_t{0}));
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidInput, std::string("malformed scripted model: ") + e.what());
    }
}

ScriptedModel ScriptedModel::load(const std::filesystem::path& path) {
    return from_json(read_file(path));
}

// ---------------------------------------------------------------------------

std::vector<std::string> split_word_pieces(std::string_view text) {
    std::vector<std::string> pieces;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        std::size_t j = i + 1;
        if (is_ident_char(c)) {
            while (j < text.size() && is_ident_char(text[j])) ++j;
        } else if (c == '\n') {
            while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
        } else if (c == ' ' || c == '\t' || c == '\r') {
            while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
        }
        pieces.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return pieces;
}

std::string NGramModel::key_of(std::span<const TokenId> ids) {
    std::string key;
    key.reserve(ids.size() * 4);
    for (auto id : ids) put_u32(key, static_cast<std::uint32_t>(id));
    return key;
}

NGramModel NGramModel::train(std::string_view corpus, const NGramOptions& options) {
    if (corpus.empty()) fail(ErrorKind::InvalidInput, "empty training corpus");
    if (options.order < 1) fail(ErrorKind::InvalidParameter, "n-gram order must be >= 1");
    if (!(options.alpha > 0.0) || !std::isfinite(options.alpha)) {
        fail(ErrorKind::InvalidParameter, "smoothing constant must be positive");
    }

    const auto docs = split_documents(corpus);
    if (docs.empty()) fail(ErrorKind::InvalidInput, "training corpus holds no documents");

    std::set<std::string> entries;
    std::vector<std::vector<std::string>> doc_pieces;
    for (auto doc : docs) {
        for (char c : doc) entries.emplace(1, c);
        if (options.unit == NGramUnit::Word) {
            doc_pieces.push_back(split_word_pieces(doc));
            entries.insert(doc_pieces.back().begin(), doc_pieces.back().end());
        }
    }
    entries.erase(std::string(kEosText));

    NGramModel model;
    model.options_ = options;
    std::vector<std::string> tokens(entries.begin(), entries.end());
    const auto eos = static_cast<TokenId>(tokens.size());
    tokens.emplace_back(kEosText);
    model.vocab_ = Vocabulary(std::move(tokens), eos);

    std::map<std::vector<TokenId>, std::map<TokenId, std::uint64_t>> counts;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        std::vector<TokenId> ids;
        if (options.unit == NGramUnit::Word) {
            for (const auto& p : doc_pieces[d]) ids.push_back(model.vocab_.find(p));
        } else {
            ids = model.tokenize(docs[d]);
        }
        ids.push_back(eos);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::size_t max_ctx = std::min(options.order - 1, i);
            for (std::size_t len = 0; len <= max_ctx; ++len) {
                std::vector<TokenId> ctx(ids.begin() + static_cast<long>(i - len),
                                         ids.begin() + static_cast<long>(i));
                ++counts[std::move(ctx)][ids[i]];
            }
        }
    }

    model.table_.reserve(counts.size());
    for (auto& [ctx, next] : counts) {
        ContextCounts cc;
        for (auto [id, n] : next) {
            cc.total += n;
            cc.next.emplace_back(id, n);
        }
        model.table_.emplace(key_of(ctx), std::move(cc));
    }
    return model;
}

std::vector<TokenId> NGramModel::tokenize(std::string_view text) const {
    std::vector<TokenId> ids;
    if (options_.unit == NGramUnit::Char) {
        ids.reserve(text.size());
        for (char c : text) {
            const auto id = vocab_.find(std::string_view(&c, 1));
            if (id < 0 || id == vocab_.eos_id()) {
                fail(ErrorKind::InvalidInput, "character outside the model alphabet");
            }
            ids.push_back(id);
        }
        return ids;
    }
    for (const auto& piece : split_word_pieces(text)) {
        const auto id = vocab_.find(piece);
        if (id >= 0 && id != vocab_.eos_id()) {
            ids.push_back(id);
        } else {
            auto sub = vocab_.tokenize_longest_match(piece);
            ids.insert(ids.end(), sub.begin(), sub.end());
        }
    }
    return ids;
}

const NGramModel::ContextCounts* NGramModel::lookup(std::span<const TokenId> context) const {
    for (auto id : context) {
        if (!vocab_.contains(id)) {
            fail(ErrorKind::InvalidInput, "unknown token id " + std::to_string(id));
        }
    }
    std::size_t len = std::min(options_.order - 1, context.size());
    while (true) {
        auto it = table_.find(key_of(context.subspan(context.size() - len)));
        if (it != table_.end()) return &it->second;
        if (!options_.backoff || len == 0) return nullptr;
        --len;
    }
}

std::vector<double> NGramModel::conditional(std::span<const TokenId> context) const {
    const std::size_t v = vocab_.size();
    const auto* counts = lookup(context);
    if (counts == nullptr) return std::vector<double>(v, 1.0 / static_cast<double>(v));
    const double denom = static_cast<double>(counts->total) + options_.alpha * static_cast<double>(v);
    std::vector<double> probs(v, options_.alpha / denom);
    for (auto [id, n] : counts->next) {
        probs[static_cast<std::size_t>(id)] = (static_cast<double>(n) + options_.alpha) / denom;
    }
    return probs;
}

LogitVector NGramModel::next_logits(std::span<const TokenId> context) const {
    auto probs = conditional(context);
    for (auto& p : probs) p = std::log(p);
    return LogitVector(std::move(probs));
}

std::string NGramModel::serialize() const {
    std::string out(kModelMagic);
    put_u32(out, kModelVersion);
    put_u8(out, static_cast<std::uint8_t>(options_.unit));
    put_u8(out, options_.backoff ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(options_.order));
    put_u64(out, std::bit_cast<std::uint64_t>(options_.alpha));

    put_u32(out, static_cast<std::uint32_t>(vocab_.size()));
    put_u32(out, static_cast<std::uint32_t>(vocab_.eos_id()));
    for (const auto& t : vocab_.tokens()) {
        put_u32(out, static_cast<std::uint32_t>(t.size()));
        out += t;
    }

    std::vector<const std::string*> keys;
    keys.reserve(table_.size());
    for (const auto& [k, _] : table_) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });

    put_u64(out, keys.size());
    for (const auto* k : keys) {
        const auto& cc = table_.at(*k);
        put_u32(out, static_cast<std::uint32_t>(k->size() / 4));
        out += *k;
        put_u64(out, cc.total);
        put_u32(out, static_cast<std::uint32_t>(cc.next.size()));
        for (auto [id, n] : cc.next) {
            put_u32(out, static_cast<std::uint32_t>(id));
            put_u64(out, n);
        }
    }
    return out;
}

NGramModel NGramModel::deserialize(std::string_view bytes) {
    Reader in(bytes);
    if (bytes.size() < kModelMagic.size() || in.take(kModelMagic.size()) != kModelMagic) {
        fail(ErrorKind::InvalidInput, "not an n-gram model file (bad magic header)");
    }
    const auto version = in.u32();
    if (version != kModelVersion) {
        fail(ErrorKind::InvalidInput, "unsupported n-gram model version " + std::to_string(version));
    }
    NGramModel model;
    const auto unit = in.u8();
    if (unit > 1) fail(ErrorKind::InvalidInput, "unknown n-gram unit");
    model.options_.unit = static_cast<NGramUnit>(unit);
    model.options_.backoff = in.u8() != 0;
    model.options_.order = in.u32();
    model.options_.alpha = std::bit_cast<double>(in.u64());

    const auto vocab_size = in.u32();
    const auto eos = static_cast<TokenId>(in.u32());
    std::vector<std::string> tokens;
    tokens.reserve(vocab_size);
    for (std::uint32_t i = 0; i < vocab_size; ++i) {
        const auto len = in.u32();
        tokens.emplace_back(in.take(len));
    }
    model.vocab_ = Vocabulary(std::move(tokens), eos);

    const auto n_contexts = in.u64();
    for (std::uint64_t c = 0; c < n_contexts; ++c) {
        const auto len = in.u32();
        std::string key(in.take(std::size_t{len} * 4));
        ContextCounts cc;
        cc.total = in.u64();
        const auto entries = in.u32();
        for (std::uint32_t e = 0; e < entries; ++e) {
            const auto id = static_cast<TokenId>(in.u32());
            if (!model.vocab_.contains(id)) fail(ErrorKind::InvalidInput, "count entry outside vocabulary");
            cc.next.emplace_back(id, in.u64());
        }
        model.table_.emplace(std::move(key), std::move(cc));
    }
    if (!in.done()) fail(ErrorKind::InvalidInput, "trailing bytes after n-gram model");
    return model;
}

void NGramModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    const auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoError, "short write to " + path.string());
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
}

bool operator==(const NGramModel& a, const NGramModel& b) {
    return a.serialize() == b.serialize();
}

// ---------------------------------------------------------------------------

std::unique_ptr<LogitsProvider> open_backend(std::string_view spec,
                                             std::optional<std::string> auth_token) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) {
        fail(ErrorKind::InvalidParameter,
             "backend spec '" + std::string(spec) + "' must look like kind:location");
    }
    const auto kind = spec.substr(0, colon);
    const std::string where(spec.substr(colon + 1));
    if (kind == "scripted") return std::make_unique<ScriptedModel>(ScriptedModel::load(where));
    if (kind == "ngram") return std::make_unique<NGramModel>(NGramModel::load(where));
    if (kind == "remote") {
        RemoteOptions opts;
        opts.endpoint = where;
        opts.auth_token = std::move(auth_token);
        return std::make_unique<RemoteBackend>(std::move(opts));
    }
    fail(ErrorKind::InvalidParameter, "unknown backend kind '" + std::string(kind) + "'");
}

std::vector<std::string_view> split_documents(std::string_view corpus) {
    std::vector<std::string_view> docs;
    std::size_t doc_start = 0;
    std::size_t pos = 0;
    while (pos < corpus.size()) {
        std::size_t eol = corpus.find('\n', pos);
        const std::size_t line_end = eol == std::string_view::npos ? corpus.size() : eol;
        const std::size_t next = eol == std::string_view::npos ? corpus.size() : eol + 1;
        if (corpus.substr(pos, line_end - pos) == kEosText) {
            if (pos > doc_start) docs.push_back(corpus.substr(doc_start, pos - doc_start));
            doc_start = next;
        }
        pos = next;
    }
    if (doc_start < corpus.size()) docs.push_back(corpus.substr(doc_start));
    return docs;
}

}  // namespace adapt
