#pragma once

// Model gateway: rate- and concurrency-limited delivery of prompts plus frame
// URLs to a backend, with retries on transient failures.

#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/io.hpp"
#include "vrmod/media.hpp"
#include "vrmod/prompts.hpp"

namespace vrmod {

// Seconds-based clock so tests can run limiter logic on compressed time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;
  virtual void sleep_for(double seconds) = 0;
};

class SteadyClock : public Clock {
 public:
  double now() override;
  void sleep_for(double seconds) override;
};

// Virtual time running `factor` times faster than the steady clock.
class ScaledClock : public Clock {
 public:
  explicit ScaledClock(double factor);
  double now() override;
  void sleep_for(double seconds) override;

 private:
  double factor_;
  double origin_;
};

Clock& default_clock();

// Token bucket: refills `per_minute / 60` tokens per second up to `burst`.
// Over any 60 s interval at most per_minute + burst acquisitions succeed.
class TokenBucket {
 public:
  TokenBucket(double per_minute, double burst, Clock& clock);
  void acquire();

 private:
  double rate_;  // tokens per second
  double burst_;
  double tokens_;
  double last_;
  Clock& clock_;
  std::mutex mu_;
};

class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}
  void acquire();
  void release();

 private:
  int count_;
  std::mutex mu_;
  std::condition_variable cv_;
};

enum class BackendKind { RemoteChat, MockOracle };
std::string_view wire(BackendKind k) noexcept;  // "remote" / "mock"
std::optional<BackendKind> parse_backend_kind(std::string_view text) noexcept;

struct BackendConfig {
  BackendKind kind = BackendKind::MockOracle;
  std::string endpoint_url;  // RemoteChat: full chat-completions URL
  std::string model_name = "gpt-4o-2024-08-06";
  std::string api_key_ref = "OPENAI_API_KEY";  // environment variable name
  int max_inflight = 4;
  int requests_per_minute = 60;
  double temperature = 0.0;
  double timeout = 60.0;  // seconds
  int max_retries = 3;
  double backoff_base = 1.0;  // seconds; waits are base, 2*base, 4*base...
  std::filesystem::path sidecar_dir;  // MockOracle trajectory sidecars
  double mock_latency = 0.0;          // MockOracle simulated seconds per call

  void validate() const;  // throws InvalidArgument
};

nlohmann::json to_json(const BackendConfig& cfg);
BackendConfig backend_config_from_json(const nlohmann::json& j);

// Which segment a request is about; the mock backend resolves trajectories
// through it and remote backends ignore it.
struct SegmentRef {
  std::string segment_id;
  std::string clip_hash;
  double start = 0.0;
  double length = kSegmentSeconds;
};

struct InferenceRequest {
  std::string request_id;
  PromptBundle bundle;
  std::vector<std::string> frame_urls;
  std::vector<std::vector<std::string>> exemplar_urls;
  SegmentRef segment;
  double created_at = 0.0;
};

struct RawResponse {
  std::string request_id;
  std::string body;
  double latency = 0.0;
  int attempt = 1;
  BackendKind backend = BackendKind::MockOracle;
};

// Frames are served at <base_url>/frames/<hash>.jpg. Throws InvalidBaseUrl
// and MissingFrame.
std::vector<std::string> host_frames(const FrameStore& store, const FrameSet& frames,
                                     const std::string& base_url);

enum class TransportOutcome { Ok, Timeout, RateLimited, ServerError, AuthError, ClientError, Unreachable };

struct BackendReply {
  TransportOutcome outcome = TransportOutcome::Ok;
  int http_status = 0;
  std::string body;    // model text on success
  std::string detail;  // error description
  nlohmann::json wire_request;
  std::string wire_response;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendReply call(const InferenceRequest& request) = 0;
};

// OpenAI-compatible chat completions over HTTP(S) with image_url parts.
class RemoteChatBackend : public Backend {
 public:
  explicit RemoteChatBackend(BackendConfig cfg);
  BackendReply call(const InferenceRequest& request) override;

  static nlohmann::json request_body(const InferenceRequest& request, const BackendConfig& cfg);

 private:
  BackendConfig cfg_;
  std::string scheme_host_port_;
  std::string path_;
};

// Replays the synthetic rule oracle on the segment's trajectory sidecar.
class MockOracleBackend : public Backend {
 public:
  MockOracleBackend(std::filesystem::path sidecar_dir, double latency, Clock& clock);
  BackendReply call(const InferenceRequest& request) override;

  // The exact reply body the mock produces for a classification.
  static std::string reply_for(Stage stage, Stage2Label label);

 private:
  std::filesystem::path sidecar_dir_;
  double latency_;
  Clock& clock_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, Clock& clock);

// Shared, internally synchronized. Callers may invoke infer() concurrently.
class Gateway {
 public:
  Gateway(BackendConfig cfg, std::unique_ptr<Backend> backend, Clock& clock = default_clock(),
          std::shared_ptr<AppendLog> wire_log = nullptr);

  // Throws BackendError {Timeout, RateLimited, AuthFailure, BackendUnavailable}.
  RawResponse infer(const InferenceRequest& request);

  const BackendConfig& config() const noexcept { return cfg_; }
  Clock& clock() noexcept { return clock_; }
  void set_wire_log(std::shared_ptr<AppendLog> log);

 private:
  void log_attempt(const InferenceRequest& request, int attempt, const BackendReply& reply,
                   double latency);

  BackendConfig cfg_;
  std::unique_ptr<Backend> backend_;
  Clock& clock_;
  TokenBucket bucket_;
  Semaphore inflight_;
  std::shared_ptr<AppendLog> wire_log_;
  std::mutex log_mu_;
};

}  // namespace vrmod
