#pragma once

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "halucheck/core_types.hpp"
#include "halucheck/tool_result.hpp"

namespace halucheck {

struct ExecutionProfile {
    /// argv; "{file}" is replaced by the path of the written source file.
    std::vector<std::string> command;
    std::string extension = ".txt";
    std::chrono::milliseconds time_limit{5000};
    std::size_t memory_limit_mb = 256;
    bool isolate_network = true;
};

/// Language tag -> execution profile.
class ProfileSet {
public:
    ProfileSet() = default;

    static ProfileSet defaults() {
        ProfileSet set;
        set.profiles_["python"] = ExecutionProfile{{"python3", "{file}"}, ".py"};
        set.profiles_["sh"] = ExecutionProfile{{"sh", "{file}"}, ".sh"};
        set.default_language_ = "python";
        return set;
    }

    /// {"default": "python", "profiles": {"python": {"command": [...], "extension": ".py",
    ///  "time_limit_s": 5, "memory_limit_mb": 256, "isolate_network": true}}}
    static ProfileSet from_json(const json& j) {
        ProfileSet set;
        try {
            for (const auto& [lang, p] : j.at("profiles").items()) {
                ExecutionProfile prof;
                prof.command = p.at("command").get<std::vector<std::string>>();
                if (prof.command.empty()) throw ConfigError("profile '" + lang + "' has an empty command");
                prof.extension = p.value("extension", std::string(".txt"));
                prof.time_limit = std::chrono::milliseconds(
                    static_cast<long long>(p.value("time_limit_s", 5.0) * 1000.0));
                prof.memory_limit_mb = p.value("memory_limit_mb", std::size_t{256});
                prof.isolate_network = p.value("isolate_network", true);
                if (prof.time_limit.count() <= 0) throw ConfigError("profile '" + lang + "': time limit must be positive");
                set.profiles_[lang] = std::move(prof);
            }
            set.default_language_ = j.value("default", set.profiles_.empty() ? std::string() : set.profiles_.begin()->first);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("execution profiles: ") + e.what());
        }
        return set;
    }

    static ProfileSet load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open execution profiles " + path.string());
        try {
            return from_json(json::parse(in));
        } catch (const json::parse_error& e) {
            throw ConfigError("execution profiles " + path.string() + ": " + e.what());
        }
    }

    const ExecutionProfile* find(std::string_view language) const {
        auto it = profiles_.find(std::string(language.empty() ? default_language_ : language));
        return it == profiles_.end() ? nullptr : &it->second;
    }
    void set(std::string language, ExecutionProfile p) { profiles_[std::move(language)] = std::move(p); }
    const std::string& default_language() const noexcept { return default_language_; }

private:
    std::map<std::string, ExecutionProfile> profiles_;
    std::string default_language_ = "python";
};

struct ExecutionResult {
    bool pass = false;
    bool timed_out = false;
    int exit_code = -1;
    int term_signal = 0;
    std::string stdout_text;
    std::string stderr_text;
    std::string reason;
    bool network_isolated = false;
    std::chrono::milliseconds elapsed{0};
};

/// Strips an optional ``` fence and returns (language tag, code body).
inline std::pair<std::string, std::string> unfence_code(std::string_view code) {
    std::string_view t = unicode::trim(code);
    if (t.substr(0, 3) != "```") return {"", std::string(code)};
    std::size_t eol = t.find('\n');
    if (eol == std::string_view::npos) return {"", std::string(code)};
    std::string lang(unicode::trim(t.substr(3, eol - 3)));
    for (char& c : lang) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lang == "py" || lang == "python3") lang = "python";
    if (lang == "bash" || lang == "shell") lang = "sh";
    std::string_view body = t.substr(eol + 1);
    if (auto close = body.rfind("```"); close != std::string_view::npos) body = body.substr(0, close);
    return {lang, std::string(body)};
}

/// Runs code in a child process with wall-clock, memory and (best-effort) network isolation.
/// Executions are bounded by the number of worker slots.
class CodeSandbox {
public:
    static constexpr std::chrono::milliseconds kill_grace{1000};
    static constexpr std::size_t max_capture = 64 * 1024;

    explicit CodeSandbox(ProfileSet profiles = ProfileSet::defaults(), std::ptrdiff_t slots = 1)
        : profiles_(std::move(profiles)), slots_(slots) {}

    const ProfileSet& profiles() const noexcept { return profiles_; }

    /// Throws ToolError(sandbox_unavailable) when no profile matches or the interpreter is missing.
    ExecutionResult run(std::string_view code, std::string_view language = {}) {
        const ExecutionProfile* profile = profiles_.find(language);
        if (!profile)
            throw ToolError(payload::FailureCode::sandbox_unavailable,
                            "no execution profile for language '" + std::string(language) + "'");
        slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots_};
        return execute(code, *profile);
    }

private:
    struct ChildReport {
        int stage;  // 1: network isolation unavailable, 2: exec failed
        int err;
    };

    static ExecutionResult execute(std::string_view code, const ExecutionProfile& profile) {
        namespace fs = std::filesystem;
        char dir_template[] = "/tmp/halucheck-sandbox-XXXXXX";
        if (!::mkdtemp(dir_template))
            throw ToolError(payload::FailureCode::sandbox_unavailable, "cannot create sandbox directory");
        const fs::path dir(dir_template);
        struct Cleanup {
            fs::path p;
            ~Cleanup() {
                std::error_code ec;
                fs::remove_all(p, ec);
            }
        } cleanup{dir};

        const fs::path file = dir / ("main" + profile.extension);
        {
            std::ofstream out(file, std::ios::binary);
            out << code;
        }
        std::vector<std::string> args;
        for (const auto& a : profile.command) {
            std::string s = a;
            if (auto p = s.find("{file}"); p != std::string::npos) s.replace(p, 6, file.filename().string());
            args.push_back(std::move(s));
        }
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        const std::string dir_str = dir.string();
        const rlim_t mem = static_cast<rlim_t>(profile.memory_limit_mb) * 1024 * 1024;
        const rlim_t cpu = static_cast<rlim_t>(profile.time_limit.count() / 1000 + 2);

        int out_pipe[2], err_pipe[2], report_pipe[2];
        if (::pipe2(out_pipe, O_CLOEXEC) || ::pipe2(err_pipe, O_CLOEXEC) || ::pipe2(report_pipe, O_CLOEXEC))
            throw ToolError(payload::FailureCode::sandbox_unavailable, "pipe() failed");

        const auto start = std::chrono::steady_clock::now();
        const pid_t pid = ::fork();
        if (pid < 0) throw ToolError(payload::FailureCode::sandbox_unavailable, "fork() failed");
        if (pid == 0) {
            // child: async-signal-safe calls only
            ::setpgid(0, 0);
            int devnull = ::open("/dev/null", O_RDONLY);
            if (devnull >= 0) ::dup2(devnull, 0);
            ::dup2(out_pipe[1], 1);
            ::dup2(err_pipe[1], 2);
            if (::chdir(dir_str.c_str()) != 0) ::_exit(126);
            rlimit as{mem, mem};
            ::setrlimit(RLIMIT_AS, &as);
            rlimit cpu_lim{cpu, cpu};
            ::setrlimit(RLIMIT_CPU, &cpu_lim);
            rlimit core{0, 0};
            ::setrlimit(RLIMIT_CORE, &core);
            if (profile.isolate_network && ::unshare(CLONE_NEWUSER | CLONE_NEWNET) != 0) {
                ChildReport r{1, errno};
                [[maybe_unused]] auto n = ::write(report_pipe[1], &r, sizeof r);
            }
            ::execvp(argv[0], argv.data());
            ChildReport r{2, errno};
            [[maybe_unused]] auto n = ::write(report_pipe[1], &r, sizeof r);
            ::_exit(127);
        }
        ::setpgid(pid, pid);
        ::close(out_pipe[1]);
        ::close(err_pipe[1]);
        ::close(report_pipe[1]);

        ExecutionResult result;
        const auto deadline = start + profile.time_limit;
        std::array<pollfd, 2> fds{pollfd{out_pipe[0], POLLIN, 0}, pollfd{err_pipe[0], POLLIN, 0}};
        std::array<std::string*, 2> sinks{&result.stdout_text, &result.stderr_text};
        int open_fds = 2;
        while (open_fds > 0) {
            const auto now = std::chrono::steady_clock::now();
            if (now >= deadline) {
                result.timed_out = true;
                break;
            }
            const int wait_ms = static_cast<int>(
                std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
            int rc = ::poll(fds.data(), fds.size(), wait_ms);
            if (rc < 0 && errno == EINTR) continue;
            if (rc <= 0) continue;
            for (std::size_t i = 0; i < fds.size(); ++i) {
                if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
                char buf[4096];
                ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
                if (n > 0) {
                    if (sinks[i]->size() < max_capture)
                        sinks[i]->append(buf, std::min<std::size_t>(static_cast<std::size_t>(n), max_capture - sinks[i]->size()));
                } else if (n == 0 || (n < 0 && errno != EINTR && errno != EAGAIN)) {
                    ::close(fds[i].fd);
                    fds[i].fd = -1;
                    --open_fds;
                }
            }
        }

        int status = 0;
        if (result.timed_out) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
        } else {
            // Pipes closed; the process may still be running (e.g. it closed stdout early).
            for (;;) {
                pid_t w = ::waitpid(pid, &status, WNOHANG);
                if (w == pid) break;
                if (std::chrono::steady_clock::now() >= deadline) {
                    result.timed_out = true;
                    ::kill(-pid, SIGKILL);
                    ::waitpid(pid, &status, 0);
                    break;
                }
                ::usleep(2000);
            }
        }
        ::kill(-pid, SIGKILL);  // reap any stragglers left in the group
        for (auto& f : fds)
            if (f.fd >= 0) ::close(f.fd);
        result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);

        ChildReport report{};
        bool exec_failed = false;
        int exec_errno = 0;
        result.network_isolated = profile.isolate_network;
        while (::read(report_pipe[0], &report, sizeof report) == static_cast<ssize_t>(sizeof report)) {
            if (report.stage == 1) result.network_isolated = false;
            if (report.stage == 2) {
                exec_failed = true;
                exec_errno = report.err;
            }
        }
        ::close(report_pipe[0]);
        if (exec_failed)
            throw ToolError(payload::FailureCode::sandbox_unavailable,
                            "cannot start '" + profile.command.front() + "': " + std::strerror(exec_errno));

        if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
        if (WIFSIGNALED(status)) result.term_signal = WTERMSIG(status);
        if (result.timed_out) {
            result.reason = "timeout after " + std::to_string(profile.time_limit.count()) + " ms";
        } else if (result.term_signal != 0) {
            result.reason = "killed by signal " + std::to_string(result.term_signal);
        } else if (result.exit_code != 0) {
            result.reason = "exit status " + std::to_string(result.exit_code);
        }
        result.pass = !result.timed_out && result.term_signal == 0 && result.exit_code == 0;
        for (std::string* text : {&result.stdout_text, &result.stderr_text}) {
            const std::string prefix = dir_str + "/";
            for (auto p = text->find(prefix); p != std::string::npos; p = text->find(prefix, p)) text->erase(p, prefix.size());
        }
        return result;
    }

    ProfileSet profiles_;
    std::counting_semaphore<> slots_;
};

/// Tool entry point: pass iff the code runs to exit status 0 within limits.
inline payload::Verdict code_interpreter(std::string_view code, CodeSandbox& sandbox) {
    if (unicode::trim(code).empty()) throw ToolError(payload::FailureCode::invalid_arguments, "code is empty");
    auto [language, body] = unfence_code(code);
    ExecutionResult r = sandbox.run(body, language);
    std::string detail;
    if (!r.pass) detail = r.reason;
    const auto tail = [](const std::string& s) {
        constexpr std::size_t keep = 1000;
        return s.size() <= keep ? s : "..." + s.substr(s.size() - keep);
    };
    if (!r.stderr_text.empty()) detail += std::string(detail.empty() ? "" : "; ") + "stderr: " + tail(r.stderr_text);
    if (!r.stdout_text.empty()) detail += std::string(detail.empty() ? "" : "; ") + "stdout: " + tail(r.stdout_text);
    return payload::Verdict{r.pass, detail};
}

}  // namespace halucheck
