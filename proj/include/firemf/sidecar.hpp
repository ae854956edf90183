#pragma once

// Client for surrogates hosted in a separate process. Requests and
// responses are single-line JSON objects exchanged over the child's
// stdin/stdout:
//
//   request   {"id": n, "op": "fit" | "predict" | "shutdown", "x": [[...]], "y": [...], "quantiles": [...]}
//   response  {"id": n, "ok": bool, "mean": [...], "variance": [...], "quantiles": [[...]], "error": "..."}
//
// Each ExternalSurrogate owns one child process for its whole lifetime.

#include "firemf/core.hpp"
#include "firemf/log.hpp"
#include "firemf/surrogate.hpp"

#include <nlohmann/json.hpp>

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace firemf {

/// Base for every failure of the external-surrogate channel.
class SidecarError : public SurrogateError {
 public:
  using SurrogateError::SurrogateError;
};

/// The sidecar answered with something that violates the wire contract, or
/// rejected a request.
class ProtocolError : public SidecarError {
 public:
  using SidecarError::SidecarError;
};

/// No complete response line arrived within the per-call timeout.
class SidecarTimeout : public SidecarError {
 public:
  using SidecarError::SidecarError;
};

/// The sidecar process ended (or could not be started).
class SidecarExited : public SidecarError {
 public:
  SidecarExited(std::string message, int exit_code) : SidecarError(std::move(message)), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

struct SidecarOptions {
  /// Executable; empty means the FIRE_MF_SIDECAR environment variable.
  std::string path;
  std::vector<std::string> args;
  double timeout_seconds = 300.0;
};

inline std::string resolve_sidecar_path(const SidecarOptions& opts) {
  if (!opts.path.empty()) return opts.path;
  if (const char* env = std::getenv("FIRE_MF_SIDECAR"); env && *env) return env;
  throw InvalidArgument("no sidecar executable configured and FIRE_MF_SIDECAR is unset");
}

namespace detail {

inline std::string excerpt(const std::string& line, std::size_t max_len = 120) {
  if (line.size() <= max_len) return line;
  return line.substr(0, max_len) + "...";
}

/// A child process with line-oriented pipes to its stdin and stdout.
class ChildProcess {
 public:
  ChildProcess(const std::string& path, const std::vector<std::string>& args) {
    // A sidecar that dies mid-write must surface as an error, not kill us.
    std::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0) throw SidecarExited("pipe: " + std::string(std::strerror(errno)), -1);
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw SidecarExited("pipe: " + std::string(std::strerror(errno)), -1);
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::vector<std::string> argv_store{path};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    argv.push_back(nullptr);

    const int rc = posix_spawn(&pid_, path.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      throw SidecarExited("cannot start sidecar '" + path + "': " + std::strerror(rc), -1);
    }
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() { terminate(); }

  bool running() const { return pid_ > 0; }

  void write_line(const std::string& line) {
    std::string buf = line + "\n";
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t n = ::write(to_child_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw exited_error("write failed: " + std::string(std::strerror(errno)));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  /// Next '\n'-terminated line, waiting at most `timeout_seconds` overall.
  std::string read_line(double timeout_seconds) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
    for (;;) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        terminate();
        throw SidecarTimeout("sidecar did not respond within " + std::to_string(timeout_seconds) + " s");
      }
      pollfd pfd{from_child_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count() + 1, 1 << 30)));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw exited_error("poll failed: " + std::string(std::strerror(errno)));
      }
      if (r == 0) continue;
      char chunk[65536];
      const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw exited_error("read failed: " + std::string(std::strerror(errno)));
      }
      if (n == 0) throw exited_error("sidecar closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Waits up to `grace_seconds` for a voluntary exit, then kills.
  void terminate(double grace_seconds = 0.0) {
    if (pid_ <= 0) return;
    close_fds();
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(grace_seconds);
    int status = 0;
    for (;;) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_ || r < 0) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      ::usleep(2000);
    }
    pid_ = -1;
  }

 private:
  void close_fds() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
  }

  // Reaps the child and builds the error describing how it ended.
  SidecarExited exited_error(const std::string& what) {
    int code = -1;
    if (pid_ > 0) {
      close_fds();
      int status = 0;
      const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
      pid_t r = 0;
      while ((r = ::waitpid(pid_, &status, WNOHANG)) == 0 && std::chrono::steady_clock::now() < deadline) ::usleep(2000);
      if (r == 0) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
      }
      if (r == pid_ && WIFEXITED(status)) code = WEXITSTATUS(status);
      else if (r == pid_ && WIFSIGNALED(status)) code = 128 + WTERMSIG(status);
      pid_ = -1;
    }
    return SidecarExited(what + " (exit code " + std::to_string(code) + ")", code);
  }

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

}  // namespace detail

/// Surrogate whose fit/predict run in a sidecar process.
class ExternalSurrogate : public Surrogate {
 public:
  explicit ExternalSurrogate(SidecarOptions opts = {})
      : opts_(std::move(opts)), child_(std::make_unique<detail::ChildProcess>(resolve_sidecar_path(opts_), opts_.args)) {}

  ~ExternalSurrogate() override {
    if (!child_ || !child_->running()) return;
    try {
      call({{"op", "shutdown"}}, "shutdown", std::min(opts_.timeout_seconds, 5.0));
      child_->terminate(5.0);
    } catch (const std::exception&) {
      child_->terminate();
    }
  }

  void fit(const Matrix& X, const Vector& y) override {
    if (X.rows() != y.size()) throw InvalidArgument("sidecar fit: rows(X) != len(y)");
    if (!all_finite(X) || !all_finite(y)) throw InvalidArgument("sidecar fit: non-finite training data");
    call({{"op", "fit"}, {"x", rows_of(X)}, {"y", std::vector<double>(y.data(), y.data() + y.size())}}, "fit",
         opts_.timeout_seconds);
  }

  PredictiveSummary predict(const Matrix& Xq, const QuantileLevels& levels) const override {
    if (!all_finite(Xq)) throw InvalidArgument("sidecar predict: non-finite query");
    const nlohmann::json resp =
        call({{"op", "predict"}, {"x", rows_of(Xq)}, {"quantiles", levels.values()}}, "predict", opts_.timeout_seconds);
    const Index n = Xq.rows();
    const auto k = static_cast<Index>(levels.size());
    PredictiveSummary out;
    out.mean = vector_field(resp, "mean", n);
    out.variance = vector_field(resp, "variance", n);
    if (!resp.contains("quantiles") || !resp["quantiles"].is_array() || static_cast<Index>(resp["quantiles"].size()) != n)
      throw ProtocolError("sidecar predict: 'quantiles' must hold one row per query (" + std::to_string(n) + ")");
    out.quantiles.resize(n, k);
    for (Index i = 0; i < n; ++i) {
      const auto& row = resp["quantiles"][static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Index>(row.size()) != k)
        throw ProtocolError("sidecar predict: quantile row " + std::to_string(i) + " must hold " + std::to_string(k) +
                            " values");
      for (Index j = 0; j < k; ++j) out.quantiles(i, j) = number(row[static_cast<std::size_t>(j)], "quantiles");
    }
    if (!all_finite(out.mean) || !all_finite(out.quantiles)) throw ProtocolError("sidecar predict: non-finite values");
    if (!out.quantiles_monotone()) warn("sidecar predict: repairing non-monotone quantiles");
    const std::size_t clamped = out.enforce_invariants();
    if (clamped > 0) warn("sidecar predict: clamped " + std::to_string(clamped) + " negative variances to zero");
    return out;
  }

  std::string name() const override { return "external"; }

  const SidecarOptions& options() const { return opts_; }

 private:
  static std::vector<std::vector<double>> rows_of(const Matrix& X) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(X.rows()));
    for (Index i = 0; i < X.rows(); ++i)
      for (Index j = 0; j < X.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(X(i, j));
    return rows;
  }

  static double number(const nlohmann::json& v, const char* field) {
    if (v.is_number()) return v.get<double>();
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    throw ProtocolError(std::string("sidecar predict: non-numeric entry in '") + field + "'");
  }

  static Vector vector_field(const nlohmann::json& resp, const char* field, Index n) {
    if (!resp.contains(field) || !resp[field].is_array())
      throw ProtocolError(std::string("sidecar predict: missing array '") + field + "'");
    const auto& a = resp[field];
    if (static_cast<Index>(a.size()) != n)
      throw ProtocolError(std::string("sidecar predict: '") + field + "' has length " + std::to_string(a.size()) +
                          ", expected " + std::to_string(n));
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = number(a[static_cast<std::size_t>(i)], field);
    return v;
  }

  nlohmann::json call(nlohmann::json request, const std::string& op, double timeout) const {
    if (!child_->running()) throw SidecarExited("sidecar '" + op + "': process is not running", -1);
    const long long id = next_id_++;
    request["id"] = id;
    child_->write_line(request.dump());
    const std::string line = child_->read_line(timeout);
    // After a framing violation the stream cannot be trusted to stay in
    // step, so the child is stopped before reporting.
    auto broken = [&](const std::string& msg) {
      child_->terminate();
      return ProtocolError("sidecar '" + op + "': " + msg);
    };
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw broken("malformed response line: " + detail::excerpt(line));
    }
    if (!resp.is_object()) throw broken("response is not an object: " + detail::excerpt(line));
    if (!resp.contains("id") || resp["id"] != id)
      throw broken("response id does not match request id " + std::to_string(id));
    if (!resp.contains("ok") || !resp["ok"].is_boolean()) throw broken("response lacks boolean 'ok'");
    if (!resp["ok"].get<bool>()) {
      const std::string msg = resp.contains("error") && resp["error"].is_string() ? resp["error"].get<std::string>()
                                                                                  : std::string("no message");
      throw ProtocolError("sidecar rejected '" + op + "': " + msg);
    }
    return resp;
  }

  SidecarOptions opts_;
  std::unique_ptr<detail::ChildProcess> child_;
  mutable long long next_id_ = 1;
};

inline SurrogateFactory external_factory(SidecarOptions opts = {}) {
  return [opts](std::uint64_t) { return std::make_unique<ExternalSurrogate>(opts); };
}

}  // namespace firemf
