#pragma once

// Classifier reached over a line-oriented text protocol, either a child
// process on stdin/stdout or a TCP endpoint.
//
//   engine -> HELLO 1                 oracle -> OK <class_count>
//   engine -> CLASSIFY <w> <h> <ch>   engine -> <w*h*ch floats>
//   oracle -> PROBS                   oracle -> <class_count floats>
//
// Any other token aborts the session. POSIX only.

#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/image.hpp"
#include "fgs/oracle.hpp"

namespace fgs {

struct ExternalSpec {
  enum class Kind { Command, Tcp };
  Kind kind = Kind::Command;
  std::string target;  // shell command, or host:port
  std::chrono::milliseconds timeout{30'000};
};

namespace detail {

class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd, bool is_socket, std::chrono::milliseconds timeout)
      : read_fd_(read_fd), write_fd_(write_fd), socket_(is_socket), timeout_(timeout) {}

  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  ~LineChannel() { close_all(); }

  void close_write() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (write_fd_ != read_fd_) write_fd_ = -1;
  }

  void close_all() {
    if (socket_ && read_fd_ >= 0) {
      ::close(read_fd_);
    } else {
      if (read_fd_ >= 0) ::close(read_fd_);
      if (write_fd_ >= 0) ::close(write_fd_);
    }
    read_fd_ = write_fd_ = -1;
  }

  void write_all(const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
      ssize_t n = socket_ ? ::send(write_fd_, s.data() + off, s.size() - off, MSG_NOSIGNAL)
                          : ::write(write_fd_, s.data() + off, s.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("write to oracle failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ProtocolError("timed out waiting for oracle reply");
      pollfd pfd{read_fd_, POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) throw ProtocolError("timed out waiting for oracle reply");
      char buf[4096];
      ssize_t n = ::read(read_fd_, buf, sizeof buf);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("read from oracle failed: ") + std::strerror(errno));
      }
      if (n == 0) throw ProtocolError("oracle closed the connection");
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

 private:
  int read_fd_;
  int write_fd_;
  bool socket_;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
};

}  // namespace detail

class ExternalOracle final : public Oracle {
 public:
  explicit ExternalOracle(const ExternalSpec& spec) {
    ::signal(SIGPIPE, SIG_IGN);
    if (spec.kind == ExternalSpec::Kind::Command) {
      spawn(spec);
    } else {
      connect_tcp(spec);
    }
    try {
      handshake();
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ExternalOracle(const ExternalOracle&) = delete;
  ExternalOracle& operator=(const ExternalOracle&) = delete;

  ~ExternalOracle() override { shutdown(); }

  std::size_t class_count() const override { return class_count_; }

  ClassProbs classify(const Image& image) const override {
    std::lock_guard lock(mutex_);
    std::string msg = "CLASSIFY " + std::to_string(image.width()) + " " +
                      std::to_string(image.height()) + " " + std::to_string(image.channels()) +
                      "\n";
    bool first = true;
    for (double v : image.values()) {
      if (!first) msg += ' ';
      msg += detail::format_double(v);
      first = false;
    }
    msg += '\n';
    channel_->write_all(msg);

    const std::string tag = channel_->read_line();
    if (tag != "PROBS") throw ProtocolError("unexpected token '" + tag + "', expected PROBS");
    const auto toks = detail::split_ws(channel_->read_line());
    ClassProbs probs;
    for (const auto& t : toks) {
      double v = 0.0;
      if (!detail::parse_double(t, v)) throw ProtocolError("unexpected token '" + t + "' in PROBS line");
      probs.probs.push_back(v);
    }
    validate_probs(probs, class_count_);
    return probs;
  }

 private:
  void shutdown() {
    if (channel_) {
      channel_->close_write();
      channel_.reset();
    }
    if (child_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(child_, &status, WNOHANG) != 0) {
          child_ = -1;
          return;
        }
        ::usleep(10'000);
      }
      ::kill(child_, SIGKILL);
      ::waitpid(child_, &status, 0);
      child_ = -1;
    }
  }

  void spawn(const ExternalSpec& spec) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
      throw ProtocolError(std::string("pipe failed: ") + std::strerror(errno));
    }
    pid_t pid = ::fork();
    if (pid < 0) throw ProtocolError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", spec.target.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    child_ = pid;
    channel_ = std::make_unique<detail::LineChannel>(from_child[0], to_child[1], false, spec.timeout);
  }

  void connect_tcp(const ExternalSpec& spec) {
    const auto colon = spec.target.rfind(':');
    if (colon == std::string::npos) {
      throw InvalidArgument("oracle endpoint '" + spec.target + "' is not host:port");
    }
    const std::string host = spec.target.substr(0, colon);
    const std::string port = spec.target.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw ProtocolError("cannot resolve '" + spec.target + "': " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
      fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw ProtocolError("cannot connect to oracle at '" + spec.target + "'");
    channel_ = std::make_unique<detail::LineChannel>(fd, fd, true, spec.timeout);
  }

  void handshake() {
    channel_->write_all("HELLO 1\n");
    const auto toks = detail::split_ws(channel_->read_line());
    if (toks.size() != 2 || toks[0] != "OK") {
      std::string got;
      for (const auto& t : toks) got += (got.empty() ? "" : " ") + t;
      throw ProtocolError("handshake failed: unexpected reply '" + got + "'");
    }
    std::size_t n = 0;
    auto r = std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), n);
    if (r.ec != std::errc() || r.ptr != toks[1].data() + toks[1].size() || n == 0) {
      throw ProtocolError("handshake failed: bad class count '" + toks[1] + "'");
    }
    class_count_ = n;
  }

  std::unique_ptr<detail::LineChannel> channel_;
  mutable std::mutex mutex_;
  pid_t child_ = -1;
  std::size_t class_count_ = 0;
};

inline std::unique_ptr<ExternalOracle> connect_external(const ExternalSpec& spec) {
  return std::make_unique<ExternalOracle>(spec);
}

}  // namespace fgs
