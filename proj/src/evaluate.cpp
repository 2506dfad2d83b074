#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "adapt/error.hpp"
#include "adapt/eval.hpp"
#include "adapt/parallel.hpp"

namespace adapt {

using json = nlohmann::json;

std::optional<ExecutionOutcome> ExecutionCache::find(const std::string& task_id,
                                                     const std::string& completion) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find({task_id, completion});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ExecutionCache::store(const std::string& task_id, const std::string& completion,
                           const ExecutionOutcome& outcome) {
    std::lock_guard lock(mutex_);
    entries_.emplace(std::make_pair(task_id, completion), outcome);
}

std::size_t ExecutionCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

double pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
    if (n == 0) fail(ErrorKind::InvalidParameter, "pass@k needs n >= 1");
    if (k == 0 || k > n) {
        fail(ErrorKind::InvalidParameter,
             "pass@k needs 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    if (c > n) fail(ErrorKind::InvalidParameter, "pass@k needs c <= n");
    if (n - c < k) return 1.0;
    double prod = 1.0;
    for (std::size_t i = n - c + 1; i <= n; ++i) {
        prod *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    }
    return 1.0 - prod;
}

PassKReport evaluate(const std::vector<Task>& tasks, const std::vector<Sample>& samples,
                     const std::vector<std::size_t>& ks, const EvalOptions& options) {
    const auto started = std::chrono::steady_clock::now();

    std::map<std::string, const Task*> by_id;
    for (const auto& t : tasks) by_id.emplace(t.task_id, &t);

    // Group samples per task in sample-index order.
    std::map<std::string, std::vector<const Sample*>> grouped;
    for (const auto& s : samples) {
        if (!by_id.count(s.task_id)) {
            fail(ErrorKind::InvalidInput, "sample refers to unknown task '" + s.task_id + "'");
        }
        grouped[s.task_id].push_back(&s);
    }
    for (auto& [_, list] : grouped) {
        std::stable_sort(list.begin(), list.end(), [](const Sample* a, const Sample* b) {
            return a->sample_index < b->sample_index;
        });
    }

    // Unique executions.
    std::map<std::pair<std::string, std::string>, std::size_t> job_index;
    std::vector<std::pair<const Task*, const std::string*>> jobs;
    for (const auto& [task_id, list] : grouped) {
        for (const auto* s : list) {
            auto key = std::make_pair(task_id, s->completion);
            if (job_index.emplace(key, jobs.size()).second) {
                jobs.emplace_back(by_id.at(task_id), &s->completion);
            }
        }
    }
    std::vector<ExecutionOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), options.workers, [&](std::size_t i) {
        const auto& [task, completion] = jobs[i];
        if (options.cache) {
            if (auto hit = options.cache->find(task->task_id, *completion)) {
                outcomes[i] = *hit;
                return;
            }
        }
        outcomes[i] = execute_sample(*task, *completion, options.execution);
        if (options.cache) options.cache->store(task->task_id, *completion, outcomes[i]);
    });

    PassKReport report;
    report.ks = ks;
    std::sort(report.ks.begin(), report.ks.end());
    report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());

    std::set<std::size_t> sizes;
    for (const auto& [task_id, list] : grouped) {
        TaskResult tr;
        tr.task_id = task_id;
        tr.n = list.size();
        for (const auto* s : list) {
            const auto& outcome = outcomes[job_index.at({task_id, s->completion})];
            if (outcome.cls == OutcomeClass::Passed) ++tr.c;
            tr.outcomes.push_back(outcome.label());
            ++report.outcome_histogram[outcome.label()];
        }
        for (auto k : report.ks) {
            tr.pass_at[k] = k <= tr.n ? std::optional<double>(pass_at_k(tr.n, tr.c, k)) : std::nullopt;
        }
        if (tr.c > 0) ++report.solved;
        sizes.insert(tr.n);
        report.tasks.push_back(std::move(tr));
    }
    if (sizes.size() > 1) {
        report.warnings.push_back("tasks have differing sample counts; per-task n is used");
        std::cerr << "warning: " << report.warnings.back() << "\n";
    }

    for (auto k : report.ks) {
        double sum = 0.0;
        std::size_t defined = 0;
        for (const auto& tr : report.tasks) {
            if (auto v = tr.pass_at.at(k)) {
                sum += *v;
                ++defined;
            }
        }
        report.mean_pass_at[k] =
            defined > 0 ? std::optional<double>(sum / static_cast<double>(defined)) : std::nullopt;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

namespace {

std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_payload(const PassKReport& report) {
    json doc;
    doc["ks"] = report.ks;
    json mean = json::object();
    for (const auto& [k, v] : report.mean_pass_at) mean["pass@" + std::to_string(k)] = optional_number(v);
    doc["mean"] = mean;
    doc["solved"] = report.solved;
    doc["outcome_histogram"] = report.outcome_histogram;
    doc["warnings"] = report.warnings;
    json tasks = json::array();
    for (const auto& t : report.tasks) {
        json jt;
        jt["task_id"] = t.task_id;
        jt["n"] = t.n;
        jt["c"] = t.c;
        json pk = json::object();
        for (const auto& [k, v] : t.pass_at) pk["pass@" + std::to_string(k)] = optional_number(v);
        jt["pass_at"] = pk;
        jt["outcomes"] = t.outcomes;
        tasks.push_back(std::move(jt));
    }
    doc["tasks"] = std::move(tasks);
    return doc;
}

}  // namespace

std::string report_json(const PassKReport& report) {
    return report_payload(report).dump(2) + "\n";
}

std::string report_csv(const PassKReport& report) {
    std::string out = "task_id,n,c";
    for (auto k : report.ks) out += ",pass@" + std::to_string(k);
    out += "\n";
    for (const auto& t : report.tasks) {
        out += csv_field(t.task_id) + "," + std::to_string(t.n) + "," + std::to_string(t.c);
        for (auto k : report.ks) {
            const auto& v = t.pass_at.at(k);
            out += "," + (v ? fixed6(*v) : std::string());
        }
        out += "\n";
    }
    out += "mean,,";
    for (auto k : report.ks) {
        const auto& v = report.mean_pass_at.at(k);
        out += "," + (v ? fixed6(*v) : std::string());
    }
    out += "\n";
    return out;
}

std::string comparison_csv(const ComparisonReport& report) {
    std::string out = "strategy,samples_per_task";
    for (auto k : report.ks) out += ",pass@" + std::to_string(k);
    out += ",solved\n";
    for (const auto& r : report.results) {
        std::size_t per_task = r.report.tasks.empty() ? 0 : r.report.tasks.front().n;
        out += csv_field(r.strategy.name()) + "," + std::to_string(per_task);
        for (auto k : report.ks) {
            auto it = r.report.mean_pass_at.find(k);
            const bool has = it != r.report.mean_pass_at.end() && it->second;
            out += "," + (has ? fixed6(*it->second) : std::string());
        }
        out += "," + std::to_string(r.report.solved) + "\n";
    }
    return out;
}

std::string comparison_json(const ComparisonReport& report) {
    json doc;
    doc["ks"] = report.ks;
    json rows = json::array();
    for (const auto& r : report.results) {
        json row;
        row["strategy"] = r.strategy.name();
        row["report"] = report_payload(r.report);
        json failures = json::array();
        for (const auto& f : r.failures) failures.push_back({{"task_id", f.task_id}, {"message", f.message}});
        row["generation_failures"] = std::move(failures);
        rows.push_back(std::move(row));
    }
    doc["strategies"] = std::move(rows);
    return doc.dump(2) + "\n";
}

}  // namespace adapt
