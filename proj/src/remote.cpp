#include "mdlab/remote.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <charconv>
#include <cstring>
#include <unordered_set>

#include "httplib.h"

#include "mdlab/core/error.hpp"
#include "mdlab/core/rng.hpp"

namespace mdlab {

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint e;
  std::string_view rest;
  if (text.rfind("tcp://", 0) == 0) {
    e.scheme = Scheme::tcp;
    rest = text.substr(6);
  } else if (text.rfind("http://", 0) == 0) {
    e.scheme = Scheme::http;
    rest = text.substr(7);
  } else {
    throw ConfigError("endpoint must start with tcp:// or http://: '" + std::string(text) + "'");
  }
  const auto slash = rest.find('/');
  if (slash != std::string_view::npos) {
    if (e.scheme == Scheme::tcp) throw ConfigError("tcp endpoints take no path");
    e.path = std::string(rest.substr(slash));
    rest = rest.substr(0, slash);
  }
  const auto colon = rest.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw ConfigError("endpoint needs host:port");
  e.host = std::string(rest.substr(0, colon));
  const auto port = rest.substr(colon + 1);
  const auto res = std::from_chars(port.data(), port.data() + port.size(), e.port);
  if (res.ec != std::errc() || res.ptr != port.data() + port.size() || e.port <= 0 || e.port > 65535) {
    throw ConfigError("endpoint port is invalid: '" + std::string(text) + "'");
  }
  return e;
}

std::string Endpoint::str() const {
  std::string s = (scheme == Scheme::tcp ? "tcp://" : "http://") + host + ":" + std::to_string(port);
  if (scheme == Scheme::http) s += path;
  return s;
}

nlohmann::json make_wire_request(std::string_view session_id, std::span<const TokenId> prompt,
                                 const MaskedSequence& seq, const Vocabulary& vocab, std::size_t top_k) {
  nlohmann::json prompt_j = nlohmann::json::array();
  for (const TokenId id : prompt) prompt_j.push_back(vocab.token(id));
  nlohmann::json canvas = nlohmann::json::array();
  for (std::size_t p = seq.prompt_len(); p < seq.size(); ++p) {
    canvas.push_back(seq.is_masked(p) ? std::string(kWireMaskSentinel) : vocab.token(seq.at(p)));
  }
  return {{"schema_version", kWireSchemaVersion},
          {"op", "predict"},
          {"session_id", session_id},
          {"prompt_token_strings", prompt_j},
          {"canvas", canvas},
          {"top_k", top_k}};
}

nlohmann::json make_open_request(std::string_view session_id, std::span<const TokenId> prompt,
                                 std::size_t gen_length, const Vocabulary& vocab, std::size_t top_k) {
  nlohmann::json prompt_j = nlohmann::json::array();
  for (const TokenId id : prompt) prompt_j.push_back(vocab.token(id));
  return {{"schema_version", kWireSchemaVersion},
          {"op", "open"},
          {"session_id", session_id},
          {"prompt_token_strings", prompt_j},
          {"canvas_length", gen_length},
          {"top_k", top_k}};
}

nlohmann::json make_close_request(std::string_view session_id) {
  return {{"schema_version", kWireSchemaVersion}, {"op", "close"}, {"session_id", session_id}};
}

namespace {

void throw_if_error(const nlohmann::json& response) {
  if (!response.is_object()) throw ProtocolError("response is not a JSON object");
  if (auto it = response.find("error"); it != response.end()) {
    const std::string code = it->is_object() ? it->value("code", "unknown") : "unknown";
    const std::string msg = it->is_object() ? it->value("message", "") : it->dump();
    throw ProtocolError("predictor error " + code + ": " + msg);
  }
  const auto v = response.find("schema_version");
  if (v == response.end() || !v->is_number_integer() || v->get<int>() != kWireSchemaVersion) {
    throw ProtocolError("unsupported response schema_version " + (v == response.end() ? "(missing)" : v->dump()));
  }
}

}  // namespace

void check_wire_ack(const nlohmann::json& response) {
  throw_if_error(response);
  if (response.value("ok", false) != true) throw ProtocolError("predictor did not acknowledge: " + response.dump());
}

StepPrediction parse_wire_response(const nlohmann::json& response, const MaskedSequence& seq,
                                   const Vocabulary& vocab, std::size_t step) {
  throw_if_error(response);
  StepPrediction pred;
  pred.step = step;
  try {
    for (const auto& entry : response.at("entries")) {
      const auto index = entry.at("index").get<std::size_t>();
      if (index >= seq.gen_length()) throw ProtocolError("response index beyond the canvas");
      PositionDistribution dist;
      dist.position = seq.prompt_len() + index;
      dist.remainder_mass = entry.at("remainder_mass").get<double>();
      std::unordered_set<TokenId> seen;
      for (const auto& tp : entry.at("tokens")) {
        const auto tok = tp.at(0).get<std::string>();
        const double prob = tp.at(1).get<double>();
        const auto id = vocab.find(tok);
        if (!id || *id == vocab.mask_id() || !seen.insert(*id).second) {
          dist.remainder_mass += prob;
          continue;
        }
        dist.entries.push_back({*id, prob});
      }
      pred.positions.push_back(std::move(dist));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what());
  }
  return pred;
}

namespace {

class TcpTransport : public WireTransport {
 public:
  TcpTransport(const Endpoint& e, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(e.host.c_str(), std::to_string(e.port).c_str(), &hints, &res) != 0 || !res) {
      throw ProtocolError("cannot resolve " + e.str());
    }
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd_ < 0) continue;
      timeval tv{};
      tv.tv_sec = static_cast<long>(timeout.count() / 1000);
      tv.tv_usec = static_cast<long>((timeout.count() % 1000) * 1000);
      ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    freeaddrinfo(res);
    if (fd_ < 0) throw ProtocolError("predictor unreachable at " + e.str());
  }
  ~TcpTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }

  nlohmann::json exchange(const nlohmann::json& request) override {
    const std::string line = request.dump() + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) throw ProtocolError("send to predictor failed: " + std::string(std::strerror(errno)));
      sent += static_cast<std::size_t>(n);
    }
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string reply = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        try {
          return nlohmann::json::parse(reply);
        } catch (const nlohmann::json::exception& e) {
          throw ProtocolError(std::string("unparseable predictor reply: ") + e.what());
        }
      }
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n == 0) throw ProtocolError("predictor closed the connection");
      if (n < 0) throw ProtocolError("receive from predictor failed: " + std::string(std::strerror(errno)));
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
  std::string buffer_;
};

class HttpTransport : public WireTransport {
 public:
  HttpTransport(const Endpoint& e, std::chrono::milliseconds timeout) : client_(e.host, e.port), path_(e.path) {
    const auto secs = static_cast<time_t>(timeout.count() / 1000);
    const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
    client_.set_connection_timeout(secs, usecs);
    client_.set_read_timeout(secs, usecs);
    client_.set_write_timeout(secs, usecs);
    client_.set_keep_alive(true);
  }

  nlohmann::json exchange(const nlohmann::json& request) override {
    auto res = client_.Post(path_, request.dump(), "application/json");
    if (!res) throw ProtocolError("predictor unreachable: " + httplib::to_string(res.error()));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError("unparseable predictor reply (HTTP " + std::to_string(res->status) + "): " + e.what());
    }
  }

 private:
  httplib::Client client_;
  std::string path_;
};

}  // namespace

std::unique_ptr<WireTransport> connect(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
  if (endpoint.scheme == Endpoint::Scheme::tcp) return std::make_unique<TcpTransport>(endpoint, timeout);
  return std::make_unique<HttpTransport>(endpoint, timeout);
}

RemoteSession::RemoteSession(std::unique_ptr<WireTransport> transport, std::string session_id,
                             std::vector<TokenId> prompt, const Vocabulary& vocab, std::size_t top_k)
    : transport_(std::move(transport)),
      session_id_(std::move(session_id)),
      prompt_(std::move(prompt)),
      vocab_(vocab),
      top_k_(top_k) {}

RemoteSession::~RemoteSession() {
  try {
    transport_->exchange(make_close_request(session_id_));
  } catch (const std::exception&) {
    // The server drops idle sessions on disconnect; nothing to recover.
  }
}

StepPrediction RemoteSession::predict(const MaskedSequence& seq, std::size_t step) {
  const auto request = make_wire_request(session_id_, prompt_, seq, vocab_, top_k_);
  return parse_wire_response(transport_->exchange(request), seq, vocab_, step);
}

RemotePredictor::RemotePredictor(Endpoint endpoint, const Vocabulary& vocab, std::size_t top_k,
                                 std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), vocab_(vocab), top_k_(top_k), timeout_(timeout) {
  if (top_k_ < 2) throw ConfigError("top_k must be at least 2");
}

std::unique_ptr<PredictorSession> RemotePredictor::open_session(std::span<const TokenId> prompt,
                                                                std::size_t canvas_length) {
  if (canvas_length < prompt.size()) throw ConfigError("canvas shorter than the prompt");
  std::uint64_t h = hash_label("session");
  for (const TokenId t : prompt) h = mix_seed(h, static_cast<std::uint64_t>(t));
  // Ids must be unique per server across every predictor in this process.
  static std::atomic<std::uint64_t> counter{0};
  const std::uint64_t n = counter.fetch_add(1);
  char id[64];
  std::snprintf(id, sizeof id, "s%ld-%llu-%016llx", static_cast<long>(::getpid()), static_cast<unsigned long long>(n),
                static_cast<unsigned long long>(h));
  auto transport = connect(endpoint_, timeout_);
  check_wire_ack(transport->exchange(make_open_request(id, prompt, canvas_length - prompt.size(), vocab_, top_k_)));
  return std::make_unique<RemoteSession>(std::move(transport), id,
                                         std::vector<TokenId>(prompt.begin(), prompt.end()), vocab_, top_k_);
}

}  // namespace mdlab
