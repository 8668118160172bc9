#include "vrmod/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <regex>
#include <thread>

#include "httplib.h"

#include "vrmod/error.hpp"
#include "vrmod/synth.hpp"

namespace vrmod {

namespace fs = std::filesystem;
using nlohmann::json;

double SteadyClock::now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void SteadyClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

ScaledClock::ScaledClock(double factor) : factor_(factor), origin_(SteadyClock{}.now()) {
  if (!(factor > 0)) throw Error(ErrorCode::InvalidArgument, "clock scale must be positive");
}

double ScaledClock::now() { return (SteadyClock{}.now() - origin_) * factor_; }

void ScaledClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds / factor_));
}

Clock& default_clock() {
  static SteadyClock clock;
  return clock;
}

TokenBucket::TokenBucket(double per_minute, double burst, Clock& clock)
    : rate_(per_minute / 60.0), burst_(burst), tokens_(burst), last_(clock.now()), clock_(clock) {}

void TokenBucket::acquire() {
  for (;;) {
    double wait = 0;
    {
      std::lock_guard lock(mu_);
      const double now = clock_.now();
      tokens_ = std::min(burst_, tokens_ + (now - last_) * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = (1.0 - tokens_) / rate_;
    }
    clock_.sleep_for(wait);
  }
}

void Semaphore::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return count_ > 0; });
  --count_;
}

void Semaphore::release() {
  {
    std::lock_guard lock(mu_);
    ++count_;
  }
  cv_.notify_one();
}

std::string_view wire(BackendKind k) noexcept {
  return k == BackendKind::RemoteChat ? "remote" : "mock";
}

std::optional<BackendKind> parse_backend_kind(std::string_view text) noexcept {
  if (text == "remote") return BackendKind::RemoteChat;
  if (text == "mock") return BackendKind::MockOracle;
  return std::nullopt;
}

void BackendConfig::validate() const {
  if (max_inflight < 1) throw Error(ErrorCode::InvalidArgument, "max_inflight must be >= 1");
  if (requests_per_minute < 1) throw Error(ErrorCode::InvalidArgument, "requests_per_minute must be >= 1");
  if (!(temperature >= 0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (!(timeout > 0)) throw Error(ErrorCode::InvalidArgument, "timeout must be positive");
  if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "max_retries must be >= 0");
  if (kind == BackendKind::RemoteChat && endpoint_url.empty()) {
    throw Error(ErrorCode::InvalidArgument, "remote backend needs an endpoint URL");
  }
}

json to_json(const BackendConfig& cfg) {
  return {{"kind", wire(cfg.kind)},
          {"endpoint_url", cfg.endpoint_url},
          {"model_name", cfg.model_name},
          {"api_key_ref", cfg.api_key_ref},
          {"max_inflight", cfg.max_inflight},
          {"requests_per_minute", cfg.requests_per_minute},
          {"temperature", cfg.temperature},
          {"timeout", cfg.timeout},
          {"max_retries", cfg.max_retries},
          {"backoff_base", cfg.backoff_base},
          {"sidecar_dir", cfg.sidecar_dir.string()},
          {"mock_latency", cfg.mock_latency}};
}

BackendConfig backend_config_from_json(const json& j) {
  BackendConfig cfg;
  cfg.kind = parse_backend_kind(j.value("kind", std::string("mock"))).value_or(BackendKind::MockOracle);
  cfg.endpoint_url = j.value("endpoint_url", cfg.endpoint_url);
  cfg.model_name = j.value("model_name", cfg.model_name);
  cfg.api_key_ref = j.value("api_key_ref", cfg.api_key_ref);
  cfg.max_inflight = j.value("max_inflight", cfg.max_inflight);
  cfg.requests_per_minute = j.value("requests_per_minute", cfg.requests_per_minute);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.timeout = j.value("timeout", cfg.timeout);
  cfg.max_retries = j.value("max_retries", cfg.max_retries);
  cfg.backoff_base = j.value("backoff_base", cfg.backoff_base);
  cfg.sidecar_dir = j.value("sidecar_dir", std::string());
  cfg.mock_latency = j.value("mock_latency", cfg.mock_latency);
  return cfg;
}

std::vector<std::string> host_frames(const FrameStore& store, const FrameSet& frames,
                                     const std::string& base_url) {
  std::string base = base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  if (base.empty() || !(base.rfind("http://", 0) == 0 || base.rfind("https://", 0) == 0)) {
    throw Error(ErrorCode::InvalidBaseUrl, "frame base URL must be an absolute http(s) URL");
  }
  std::vector<std::string> urls;
  urls.reserve(frames.frames.size());
  for (const auto& f : frames.frames) {
    if (!store.contains(f.content_hash)) {
      throw Error(ErrorCode::MissingFrame, "frame " + f.content_hash + " is not in the store");
    }
    urls.push_back(base + "/frames/" + f.content_hash + ".jpg");
  }
  return urls;
}

// ---------------------------------------------------------------------------

RemoteChatBackend::RemoteChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.endpoint_url, m, kUrl)) {
    throw Error(ErrorCode::InvalidArgument, "bad endpoint URL: " + cfg_.endpoint_url);
  }
  scheme_host_port_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
}

json RemoteChatBackend::request_body(const InferenceRequest& request, const BackendConfig& cfg) {
  return {{"model", cfg.model_name},
          {"temperature", cfg.temperature},
          {"messages", render_messages(request.bundle, request.frame_urls, request.exemplar_urls)}};
}

namespace {

std::string extract_content(const std::string& http_body) {
  json j = json::parse(http_body, nullptr, false);
  if (j.is_discarded()) return http_body;
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
      std::string text;
      for (const auto& part : content) {
        if (part.value("type", std::string()) == "text") text += part.value("text", std::string());
      }
      return text;
    }
  } catch (const json::exception&) {
  }
  return http_body;
}

}  // namespace

BackendReply RemoteChatBackend::call(const InferenceRequest& request) {
  BackendReply reply;
  reply.wire_request = request_body(request, cfg_);
  const char* key = std::getenv(cfg_.api_key_ref.c_str());
  if (!key || !*key) {
    reply.outcome = TransportOutcome::AuthError;
    reply.detail = "environment variable " + cfg_.api_key_ref + " is not set";
    return reply;
  }
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(cfg_.timeout);
  const auto usecs = static_cast<time_t>((cfg_.timeout - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_bearer_token_auth(key);
  auto res = client.Post(path_, reply.wire_request.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    reply.detail = httplib::to_string(err);
    reply.outcome = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                     err == httplib::Error::Write)
                        ? TransportOutcome::Timeout
                        : TransportOutcome::Unreachable;
    return reply;
  }
  reply.http_status = res->status;
  reply.wire_response = res->body;
  const int s = res->status;
  if (s >= 200 && s < 300) {
    reply.outcome = TransportOutcome::Ok;
    reply.body = extract_content(res->body);
  } else if (s == 401 || s == 403) {
    reply.outcome = TransportOutcome::AuthError;
  } else if (s == 429) {
    reply.outcome = TransportOutcome::RateLimited;
  } else if (s == 408) {
    reply.outcome = TransportOutcome::Timeout;
  } else if (s >= 500) {
    reply.outcome = TransportOutcome::ServerError;
  } else {
    reply.outcome = TransportOutcome::ClientError;
  }
  if (reply.outcome != TransportOutcome::Ok) reply.detail = "HTTP " + std::to_string(s);
  return reply;
}

MockOracleBackend::MockOracleBackend(fs::path sidecar_dir, double latency, Clock& clock)
    : sidecar_dir_(std::move(sidecar_dir)), latency_(latency), clock_(clock) {}

std::string MockOracleBackend::reply_for(Stage stage, Stage2Label label) {
  return format_answer(project(label, stage), reason_phrase(label));
}

BackendReply MockOracleBackend::call(const InferenceRequest& request) {
  BackendReply reply;
  reply.wire_request = {{"stage", wire(request.bundle.stage)},
                        {"variant", wire(request.bundle.variant)},
                        {"segment_id", request.segment.segment_id},
                        {"clip_hash", request.segment.clip_hash},
                        {"start", request.segment.start},
                        {"frame_urls", request.frame_urls}};
  if (latency_ > 0) clock_.sleep_for(latency_);
  try {
    const auto traj = synth::load_sidecar(sidecar_dir_, request.segment.clip_hash);
    const auto result = synth::oracle_classify(traj, request.segment.start);
    reply.outcome = TransportOutcome::Ok;
    reply.http_status = 200;
    reply.body = reply_for(request.bundle.stage, result.label);
    reply.wire_response = reply.body;
  } catch (const std::exception& e) {
    reply.outcome = TransportOutcome::ClientError;
    reply.detail = std::string("mock oracle cannot resolve segment: ") + e.what();
  }
  return reply;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, Clock& clock) {
  cfg.validate();
  if (cfg.kind == BackendKind::RemoteChat) return std::make_unique<RemoteChatBackend>(cfg);
  return std::make_unique<MockOracleBackend>(cfg.sidecar_dir, cfg.mock_latency, clock);
}

// ---------------------------------------------------------------------------

Gateway::Gateway(BackendConfig cfg, std::unique_ptr<Backend> backend, Clock& clock,
                 std::shared_ptr<AppendLog> wire_log)
    : cfg_(std::move(cfg)),
      backend_(std::move(backend)),
      clock_(clock),
      bucket_(cfg_.requests_per_minute, cfg_.max_inflight, clock),
      inflight_(cfg_.max_inflight),
      wire_log_(std::move(wire_log)) {
  cfg_.validate();
  if (!backend_) throw Error(ErrorCode::InvalidArgument, "gateway needs a backend");
}

void Gateway::set_wire_log(std::shared_ptr<AppendLog> log) {
  std::lock_guard lock(log_mu_);
  wire_log_ = std::move(log);
}

namespace {

std::string_view wire(TransportOutcome o) {
  switch (o) {
    case TransportOutcome::Ok: return "ok";
    case TransportOutcome::Timeout: return "timeout";
    case TransportOutcome::RateLimited: return "rate-limited";
    case TransportOutcome::ServerError: return "server-error";
    case TransportOutcome::AuthError: return "auth-error";
    case TransportOutcome::ClientError: return "client-error";
    case TransportOutcome::Unreachable: return "unreachable";
  }
  return "";
}

bool retryable(TransportOutcome o) {
  return o == TransportOutcome::Timeout || o == TransportOutcome::RateLimited ||
         o == TransportOutcome::ServerError;
}

}  // namespace

void Gateway::log_attempt(const InferenceRequest& request, int attempt, const BackendReply& reply,
                          double latency) {
  std::shared_ptr<AppendLog> log;
  {
    std::lock_guard lock(log_mu_);
    log = wire_log_;
  }
  if (!log) return;
  json line = {{"request_id", request.request_id},
               {"attempt", attempt},
               {"backend", wire(cfg_.kind)},
               {"outcome", wire(reply.outcome)},
               {"http_status", reply.http_status},
               {"latency", latency},
               {"request", reply.wire_request},
               {"response", reply.wire_response}};
  if (!reply.detail.empty()) line["detail"] = reply.detail;
  log->append(line.dump(-1, ' ', false, json::error_handler_t::replace));
}

RawResponse Gateway::infer(const InferenceRequest& request) {
  const int max_attempts = cfg_.max_retries + 1;
  for (int attempt = 1;; ++attempt) {
    inflight_.acquire();
    bucket_.acquire();
    const double t0 = clock_.now();
    BackendReply reply;
    try {
      reply = backend_->call(request);
    } catch (const std::exception& e) {
      reply.outcome = TransportOutcome::Unreachable;
      reply.detail = e.what();
    }
    const double latency = std::max(0.0, clock_.now() - t0);
    inflight_.release();
    log_attempt(request, attempt, reply, latency);

    if (reply.outcome == TransportOutcome::Ok) {
      return RawResponse{request.request_id, std::move(reply.body), latency, attempt, cfg_.kind};
    }
    const std::string what = request.request_id + ": " + reply.detail;
    if (reply.outcome == TransportOutcome::AuthError) {
      throw BackendError(ErrorCode::AuthFailure, "authentication failed for " + what, attempt);
    }
    if (!retryable(reply.outcome)) {
      throw BackendError(ErrorCode::BackendUnavailable, "backend rejected " + what, attempt);
    }
    if (attempt >= max_attempts) {
      const ErrorCode code = reply.outcome == TransportOutcome::Timeout       ? ErrorCode::Timeout
                             : reply.outcome == TransportOutcome::RateLimited ? ErrorCode::RateLimited
                                                                              : ErrorCode::BackendUnavailable;
      throw BackendError(code, "retries exhausted for " + what, attempt);
    }
    clock_.sleep_for(cfg_.backoff_base * std::pow(2.0, attempt - 1));
  }
}

}  // namespace vrmod
