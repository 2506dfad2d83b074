#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>
#include <vector>

#include "adapt/error.hpp"
#include "adapt/eval.hpp"

namespace adapt {
namespace {

constexpr std::size_t kStderrCap = 64 * 1024;
constexpr std::size_t kExcerptLen = 400;

bool executable_exists(const std::string& name) {
    if (name.find('/') != std::string::npos) return ::access(name.c_str(), X_OK) == 0;
    const char* path = std::getenv("PATH");
    if (path == nullptr) return false;
    std::string_view rest(path);
    while (!rest.empty()) {
        const auto colon = rest.find(':');
        const auto dir = rest.substr(0, colon);
        if (!dir.empty()) {
            const std::string candidate = std::string(dir) + "/" + name;
            if (::access(candidate.c_str(), X_OK) == 0) return true;
        }
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    return false;
}

/// Scratch directory removed on scope exit.
class ScratchDir {
public:
    explicit ScratchDir(const std::filesystem::path& root) {
        auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
        std::string templ = (base / "adapt-exec-XXXXXX").string();
        if (::mkdtemp(templ.data()) == nullptr) {
            fail(ErrorKind::EnvironmentError, "cannot create scratch directory under " + base.string());
        }
        path_ = templ;
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

void set_limit(int resource, rlim_t value) {
    struct rlimit lim {value, value};
    ::setrlimit(resource, &lim);
}

// Everything the child needs, built before fork so the child never allocates.
struct ChildPlan {
    std::string python;
    std::string dir;
    std::string home_env;
    std::string tmp_env;
    std::string path_env;
    rlim_t cpu_seconds = 0;
    rlim_t address_space = 0;
    std::vector<const char*> argv;
    std::vector<const char*> envp;

    ChildPlan(const ExecutionOptions& options, const std::filesystem::path& scratch)
        : python(options.python), dir(scratch.string()) {
        home_env = "HOME=" + dir;
        tmp_env = "TMPDIR=" + dir;
        const char* path = std::getenv("PATH");
        path_env = std::string("PATH=") + (path ? path : "/usr/bin:/bin");
        cpu_seconds = static_cast<rlim_t>(std::ceil(options.time_limit_seconds)) + 1;
        address_space = static_cast<rlim_t>(options.memory_limit_mb) * 1024 * 1024;
        argv = {python.c_str(), "-I", "-B", "program.py", nullptr};
        envp = {path_env.c_str(), home_env.c_str(), tmp_env.c_str(), "PYTHONHASHSEED=0",
                "PYTHONDONTWRITEBYTECODE=1", "LC_ALL=C.UTF-8", nullptr};
    }
};

[[noreturn]] void exec_child(const ChildPlan& plan, int stderr_fd) {
    ::setpgid(0, 0);
    if (::chdir(plan.dir.c_str()) != 0) ::_exit(126);

    // Best effort: a private network namespace is only available with privileges.
    ::unshare(CLONE_NEWUSER | CLONE_NEWNET);

    set_limit(RLIMIT_CPU, plan.cpu_seconds);
    set_limit(RLIMIT_AS, plan.address_space);
    set_limit(RLIMIT_FSIZE, 16u * 1024 * 1024);
    set_limit(RLIMIT_CORE, 0);

    const int devnull = ::open("/dev/null", O_RDWR);
    if (devnull >= 0) {
        ::dup2(devnull, STDIN_FILENO);
        ::dup2(devnull, STDOUT_FILENO);
    }
    ::dup2(stderr_fd, STDERR_FILENO);

    ::execvpe(plan.python.c_str(), const_cast<char* const*>(plan.argv.data()),
              const_cast<char* const*>(plan.envp.data()));
    ::_exit(127);
}

std::string last_nonempty_line(std::string_view text) {
    std::size_t end = text.size();
    while (end > 0) {
        while (end > 0 && (text[end - 1] == '\n' || text[end - 1] == '\r' || text[end - 1] == ' ')) --end;
        if (end == 0) break;
        const auto start = text.rfind('\n', end - 1);
        const std::size_t b = start == std::string_view::npos ? 0 : start + 1;
        return std::string(text.substr(b, end - b));
    }
    return {};
}

bool is_exception_name(std::string_view name) {
    if (name.empty()) return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '_' || c == '.';
        if (!ok) return false;
    }
    return !(name.front() >= '0' && name.front() <= '9');
}

}  // namespace

std::string_view to_string(OutcomeClass cls) {
    switch (cls) {
        case OutcomeClass::Passed:      return "Passed";
        case OutcomeClass::WrongAnswer: return "WrongAnswer";
        case OutcomeClass::SyntaxError: return "SyntaxError";
        case OutcomeClass::TypeError:   return "TypeError";
        case OutcomeClass::NameError:   return "NameError";
        case OutcomeClass::Timeout:     return "Timeout";
        case OutcomeClass::Other:       return "Other";
    }
    return "Other";
}

std::string ExecutionOutcome::label() const {
    if (cls == OutcomeClass::Other && !other_label.empty()) return other_label;
    return std::string(to_string(cls));
}

std::string assemble_program(const Task& task, std::string_view completion) {
    std::string program = task.prompt;
    program += completion;
    program += "\n\n";
    program += task.test;
    program += "\n\n";
    if (task.test.find("def check(") != std::string::npos) {
        program += "check(" + task.entry_point + ")\n";
    }
    return program;
}

ExecutionOutcome classify_exit(int exit_code, int term_signal, std::string_view stderr_text) {
    ExecutionOutcome out;
    const auto last = last_nonempty_line(stderr_text);
    out.stderr_excerpt = last.size() > kExcerptLen ? last.substr(0, kExcerptLen) : last;

    if (term_signal != 0) {
        if (term_signal == SIGXCPU) {
            out.cls = OutcomeClass::Timeout;
        } else {
            out.cls = OutcomeClass::Other;
            out.other_label = "Signal" + std::to_string(term_signal);
        }
        return out;
    }
    if (exit_code == 0) {
        out.cls = OutcomeClass::Passed;
        return out;
    }

    const auto colon = last.find(':');
    const std::string name = last.substr(0, colon);
    if (!is_exception_name(name)) {
        out.cls = OutcomeClass::Other;
        out.other_label = "ExitCode" + std::to_string(exit_code);
        return out;
    }
    if (name == "AssertionError") {
        out.cls = OutcomeClass::WrongAnswer;
    } else if (name == "SyntaxError") {
        out.cls = OutcomeClass::SyntaxError;
    } else if (name == "TypeError") {
        out.cls = OutcomeClass::TypeError;
    } else if (name == "NameError") {
        out.cls = OutcomeClass::NameError;
    } else {
        out.cls = OutcomeClass::Other;
        out.other_label = name;
    }
    return out;
}

ExecutionOutcome execute_sample(const Task& task, std::string_view completion,
                                const ExecutionOptions& options) {
    if (!(options.time_limit_seconds > 0.0)) {
        fail(ErrorKind::InvalidParameter, "time limit must be positive");
    }
    if (!executable_exists(options.python)) {
        fail(ErrorKind::EnvironmentError, "interpreter '" + options.python + "' not found");
    }

    ScratchDir scratch(options.scratch_root);
    {
        std::ofstream out(scratch.path() / "program.py", std::ios::binary);
        out << assemble_program(task, completion);
        if (!out) fail(ErrorKind::EnvironmentError, "cannot write program into scratch directory");
    }

    int pipe_fds[2];
    if (::pipe2(pipe_fds, O_CLOEXEC) != 0) {
        fail(ErrorKind::EnvironmentError, std::string("pipe: ") + std::strerror(errno));
    }

    const auto start = std::chrono::steady_clock::now();
    const auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(options.time_limit_seconds));

    const ChildPlan plan(options, scratch.path());
    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(pipe_fds[0]);
        ::close(pipe_fds[1]);
        fail(ErrorKind::EnvironmentError, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::close(pipe_fds[0]);
        exec_child(plan, pipe_fds[1]);
    }
    ::close(pipe_fds[1]);
    ::setpgid(pid, pid);

    std::string err;
    bool timed_out = false;
    bool pipe_open = true;
    int status = 0;
    bool reaped = false;
    char buf[4096];

    while (!reaped) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            reaped = true;
            break;
        }
        const auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        if (pipe_open) {
            pollfd pfd{pipe_fds[0], POLLIN, 0};
            const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining + 1, 50)));
            if (ready > 0) {
                const auto got = ::read(pipe_fds[0], buf, sizeof buf);
                if (got > 0) {
                    if (err.size() < kStderrCap) err.append(buf, static_cast<std::size_t>(got));
                } else if (got == 0 || errno != EINTR) {
                    pipe_open = false;
                }
            }
        } else {
            std::this_thread::sleep_for(std::chrono::milliseconds(std::min<long long>(remaining + 1, 5)));
        }
        const pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) reaped = true;
    }
    // Clean up stragglers in the process group, then drain what is left without blocking.
    ::kill(-pid, SIGKILL);
    if (pipe_open && !timed_out) {
        ::fcntl(pipe_fds[0], F_SETFL, O_NONBLOCK);
        ssize_t got;
        while ((got = ::read(pipe_fds[0], buf, sizeof buf)) > 0) {
            if (err.size() < kStderrCap) err.append(buf, static_cast<std::size_t>(got));
        }
    }
    ::close(pipe_fds[0]);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    ExecutionOutcome out;
    if (timed_out) {
        out.cls = OutcomeClass::Timeout;
        out.stderr_excerpt = last_nonempty_line(err);
    } else {
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        const int sig = WIFSIGNALED(status) ? WTERMSIG(status) : 0;
        out = classify_exit(code, sig, err);
        if (out.cls == OutcomeClass::Timeout) {
            // CPU limit fired; report at least the configured limit.
            out.wall_seconds = std::max(wall, options.time_limit_seconds);
            return out;
        }
    }
    out.wall_seconds = wall;
    return out;
}

}  // namespace adapt
