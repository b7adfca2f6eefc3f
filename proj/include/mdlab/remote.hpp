#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "mdlab/core/vocabulary.hpp"
#include "mdlab/engine.hpp"

namespace mdlab {

inline constexpr int kWireSchemaVersion = 1;
inline constexpr std::string_view kWireMaskSentinel = "<|mask|>";

struct Endpoint {
  enum class Scheme { tcp, http } scheme = Scheme::tcp;
  std::string host;
  int port = 0;
  std::string path = "/v1/predict";  // http only

  // Accepts "tcp://host:port" and "http://host:port[/path]". Throws ConfigError.
  static Endpoint parse(std::string_view text);
  std::string str() const;
};

// Request body for one predict call. The canvas lists the generation region
// only; committed positions carry their token string, masked ones the sentinel.
nlohmann::json make_wire_request(std::string_view session_id, std::span<const TokenId> prompt,
                                 const MaskedSequence& seq, const Vocabulary& vocab, std::size_t top_k);

// Opens a session: the prompt and the generation-region length are fixed for
// its lifetime.
nlohmann::json make_open_request(std::string_view session_id, std::span<const TokenId> prompt,
                                 std::size_t gen_length, const Vocabulary& vocab, std::size_t top_k);
nlohmann::json make_close_request(std::string_view session_id);

// Throws ProtocolError unless the response is a versioned {"ok": true}.
void check_wire_ack(const nlohmann::json& response);

// Converts a response into a prediction over canvas positions. Token strings
// outside the vocabulary are folded into remainder_mass. Throws ProtocolError
// on error responses, unsupported versions and malformed bodies.
StepPrediction parse_wire_response(const nlohmann::json& response, const MaskedSequence& seq,
                                   const Vocabulary& vocab, std::size_t step);

// Sends one message and returns the parsed reply. Implementations own their
// connection; one exchange at a time.
class WireTransport {
 public:
  virtual ~WireTransport() = default;
  virtual nlohmann::json exchange(const nlohmann::json& request) = 0;
};

// Newline-delimited JSON over a TCP connection, or POST over HTTP.
std::unique_ptr<WireTransport> connect(const Endpoint& endpoint, std::chrono::milliseconds timeout);

class RemoteSession : public PredictorSession {
 public:
  RemoteSession(std::unique_ptr<WireTransport> transport, std::string session_id, std::vector<TokenId> prompt,
                const Vocabulary& vocab, std::size_t top_k);
  // Sends a best-effort close.
  ~RemoteSession() override;
  StepPrediction predict(const MaskedSequence& seq, std::size_t step) override;

 private:
  std::unique_ptr<WireTransport> transport_;
  std::string session_id_;
  std::vector<TokenId> prompt_;
  const Vocabulary& vocab_;
  std::size_t top_k_;
};

class RemotePredictor : public Predictor {
 public:
  RemotePredictor(Endpoint endpoint, const Vocabulary& vocab, std::size_t top_k = 16,
                  std::chrono::milliseconds timeout = std::chrono::seconds(30));
  // Connects and sends the open message. Throws ProtocolError when the
  // predictor is unreachable or refuses the session.
  std::unique_ptr<PredictorSession> open_session(std::span<const TokenId> prompt,
                                                 std::size_t canvas_length) override;

 private:
  Endpoint endpoint_;
  const Vocabulary& vocab_;
  std::size_t top_k_;
  std::chrono::milliseconds timeout_;
};

}  // namespace mdlab
