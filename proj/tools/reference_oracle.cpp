// Reference implementation of the oracle side of the wire protocol. Serves
// uniform probabilities, or a built-in model's output, over stdin/stdout or
// TCP. --fault injects one of the protocol violations the checker must catch.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fgs/image.hpp"
#include "fgs/oracle.hpp"

namespace {

enum class Fault { None, BadSum, WrongCount, BadToken };

struct Server {
  std::size_t classes = 2;
  Fault fault = Fault::None;
  std::optional<fgs::BuiltInModel> model;

  std::vector<double> answer(const fgs::Image& img) const {
    if (model) return model->classify(img).probs;
    return std::vector<double>(classes, 1.0 / static_cast<double>(classes));
  }

  // Returns false when the peer misbehaved or closed the stream.
  bool serve(std::FILE* in, std::FILE* out) const {
    auto read_line = [&](std::string& line) {
      line.clear();
      int c;
      while ((c = std::fgetc(in)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return !(c == EOF && line.empty());
    };
    auto reply = [&](const std::string& s) {
      std::fputs(s.c_str(), out);
      std::fflush(out);
    };
    std::string line;
    if (!read_line(line)) return false;
    if (fgs::detail::split_ws(line) != std::vector<std::string>{"HELLO", "1"}) {
      reply("ERR expected HELLO 1\n");
      return false;
    }
    reply("OK " + std::to_string(classes) + "\n");
    while (read_line(line)) {
      auto head = fgs::detail::split_ws(line);
      if (head.empty()) continue;
      std::size_t w = 0, h = 0, ch = 0;
      if (head.size() != 4 || head[0] != "CLASSIFY" ||
          std::sscanf(line.c_str(), "CLASSIFY %zu %zu %zu", &w, &h, &ch) != 3) {
        reply("ERR expected CLASSIFY <w> <h> <ch>\n");
        return false;
      }
      if (!read_line(line)) return false;
      std::vector<double> values;
      for (const auto& t : fgs::detail::split_ws(line)) {
        double v = 0.0;
        if (!fgs::detail::parse_double(t, v)) {
          reply("ERR bad value '" + t + "'\n");
          return false;
        }
        values.push_back(v);
      }
      std::vector<double> p;
      try {
        p = answer(fgs::Image(w, h, ch, std::move(values)));
      } catch (const fgs::Error& e) {
        reply(std::string("ERR ") + e.what() + "\n");
        return false;
      }
      switch (fault) {
        case Fault::None: break;
        case Fault::BadSum:
          for (double& v : p) v *= 1.1;
          break;
        case Fault::WrongCount: p.push_back(0.0); break;
        case Fault::BadToken: break;
      }
      std::string msg = fault == Fault::BadToken ? "RESULT\n" : "PROBS\n";
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) msg += ' ';
        msg += fgs::detail::format_double(p[i]);
      }
      reply(msg + "\n");
    }
    return true;
  }
};

int listen_tcp(const Server& server, int port, bool once) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) {
    std::perror("socket");
    return 1;
  }
  int yes = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 4) != 0) {
    std::perror("bind/listen");
    return 1;
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  std::printf("LISTENING %d\n", ntohs(addr.sin_port));
  std::fflush(stdout);
  for (;;) {
    int conn = ::accept(fd, nullptr, nullptr);
    if (conn < 0) continue;
    std::FILE* in = ::fdopen(conn, "r");
    std::FILE* out = ::fdopen(::dup(conn), "w");
    server.serve(in, out);
    std::fclose(in);
    std::fclose(out);
    if (once) break;
  }
  ::close(fd);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Reference classifier oracle speaking the line protocol"};
  Server server;
  std::string fault = "none";
  std::string model_path;
  int port = -1;
  bool once = false;
  app.add_option("--classes", server.classes, "Class count when no model is given")
      ->check(CLI::PositiveNumber);
  app.add_option("--fault", fault, "Protocol violation to inject")
      ->check(CLI::IsMember({"none", "bad-sum", "wrong-count", "bad-token"}));
  app.add_option("--model", model_path, "Weight file to classify with");
  app.add_option("--listen", port, "Serve over TCP on 127.0.0.1:PORT (0 picks a free port)");
  app.add_flag("--once", once, "With --listen, exit after the first connection");
  CLI11_PARSE(app, argc, argv);

  if (fault == "bad-sum") server.fault = Fault::BadSum;
  if (fault == "wrong-count") server.fault = Fault::WrongCount;
  if (fault == "bad-token") server.fault = Fault::BadToken;
  if (!model_path.empty()) {
    try {
      server.model = fgs::load_model(model_path);
    } catch (const fgs::Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
    server.classes = server.model->class_count();
  }
  if (port >= 0) return listen_tcp(server, port, once);
  return server.serve(stdin, stdout) ? 0 : 1;
}
