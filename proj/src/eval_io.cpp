#include <fstream>
#include <sstream>

#include <json.hpp>

#include "adapt/error.hpp"
#include "adapt/eval.hpp"

namespace adapt {
namespace {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Calls fn(json, line_number) for each non-blank line.
template <typename Fn>
void for_each_record(std::string_view jsonl, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        const auto nl = jsonl.find('\n', pos);
        const auto end = nl == std::string_view::npos ? jsonl.size() : nl;
        auto line = jsonl.substr(pos, end - pos);
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                fail(ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": " + e.what());
            }
            if (!j.is_object()) {
                fail(ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": expected a JSON object");
            }
            fn(j, line_no);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
}

std::string id_field(const json& j, std::size_t line) {
    if (!j.contains("task_id")) fail(ErrorKind::InvalidInput, "line " + std::to_string(line) + ": missing task_id");
    const auto& v = j["task_id"];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    fail(ErrorKind::InvalidInput, "line " + std::to_string(line) + ": task_id must be a string or integer");
}

std::string string_field(const json& j, const char* key, std::size_t line, bool required) {
    if (!j.contains(key) || j[key].is_null()) {
        if (required) fail(ErrorKind::InvalidInput, "line " + std::to_string(line) + ": missing " + key);
        return {};
    }
    if (!j[key].is_string()) {
        fail(ErrorKind::InvalidInput, "line " + std::to_string(line) + ": " + key + " must be a string");
    }
    return j[key].get<std::string>();
}

}  // namespace

std::vector<Task> parse_tasks(std::string_view jsonl) {
    std::vector<Task> tasks;
    for_each_record(jsonl, [&](const json& j, std::size_t line) {
        Task t;
        t.task_id = id_field(j, line);
        t.prompt = string_field(j, "prompt", line, true);
        t.test = string_field(j, "test", line, true);
        t.entry_point = string_field(j, "entry_point", line, false);
        if (j.contains("canonical_solution") && j["canonical_solution"].is_string()) {
            t.canonical_solution = j["canonical_solution"].get<std::string>();
        }
        for (const auto& other : tasks) {
            if (other.task_id == t.task_id) fail(ErrorKind::InvalidInput, "duplicate task id '" + t.task_id + "'");
        }
        tasks.push_back(std::move(t));
    });
    return tasks;
}

std::vector<Task> load_tasks(const std::filesystem::path& path) { return parse_tasks(read_file(path)); }

std::vector<Sample> parse_samples(std::string_view jsonl) {
    std::vector<Sample> samples;
    for_each_record(jsonl, [&](const json& j, std::size_t line) {
        Sample s;
        s.task_id = id_field(j, line);
        s.completion = string_field(j, "completion", line, true);
        s.strategy = string_field(j, "strategy", line, false);
        s.stop_reason = string_field(j, "stop_reason", line, false);
        try {
            s.sample_index = j.value("sample_index", static_cast<std::size_t>(0));
            s.seed = j.value("seed", static_cast<std::uint64_t>(0));
            if (j.contains("temperatures")) s.temperatures = j["temperatures"].get<std::vector<double>>();
            if (j.contains("block_initial")) s.block_initial = j["block_initial"].get<std::vector<bool>>();
        } catch (const json::exception& e) {
            fail(ErrorKind::InvalidInput, "line " + std::to_string(line) + ": " + e.what());
        }
        samples.push_back(std::move(s));
    });
    return samples;
}

std::vector<Sample> load_samples(const std::filesystem::path& path) { return parse_samples(read_file(path)); }

std::string samples_to_jsonl(const std::vector<Sample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        json j;
        j["task_id"] = s.task_id;
        j["sample_index"] = s.sample_index;
        j["completion"] = s.completion;
        j["seed"] = s.seed;
        j["strategy"] = s.strategy;
        j["stop_reason"] = s.stop_reason;
        j["temperatures"] = s.temperatures;
        j["block_initial"] = s.block_initial;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace adapt
