#pragma once

#include <algorithm>
#include <atomic>
#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vrmod/gateway.hpp"

namespace vrmod::testing {

// Virtual time that only moves when someone sleeps.
class ManualClock : public Clock {
 public:
  double now() override {
    std::lock_guard lock(mu_);
    return t_;
  }
  void sleep_for(double seconds) override {
    std::lock_guard lock(mu_);
    sleeps_.push_back(seconds);
    if (seconds > 0) t_ += seconds;
  }
  std::vector<double> sleeps() {
    std::lock_guard lock(mu_);
    return sleeps_;
  }

 private:
  std::mutex mu_;
  double t_ = 0.0;
  std::vector<double> sleeps_;
};

// Replays a queue of replies, then repeats the last one.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<BackendReply> script) : script_(script.begin(), script.end()) {}

  BackendReply call(const InferenceRequest& request) override {
    std::lock_guard lock(mu_);
    requests_.push_back(request.request_id);
    BackendReply r = script_.front();
    if (script_.size() > 1) script_.pop_front();
    return r;
  }
  std::size_t calls() {
    std::lock_guard lock(mu_);
    return requests_.size();
  }
  std::vector<std::string> requests() {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  std::mutex mu_;
  std::deque<BackendReply> script_;
  std::vector<std::string> requests_;
};

inline BackendReply ok_reply(std::string body) {
  BackendReply r;
  r.outcome = TransportOutcome::Ok;
  r.http_status = 200;
  r.body = std::move(body);
  return r;
}

inline BackendReply failure(TransportOutcome o, int status) {
  BackendReply r;
  r.outcome = o;
  r.http_status = status;
  r.detail = "HTTP " + std::to_string(status);
  return r;
}

// Records issue times and concurrency; each call takes `hold` clock seconds.
class ProbeBackend : public Backend {
 public:
  ProbeBackend(Clock& clock, double hold) : clock_(clock), hold_(hold) {}

  BackendReply call(const InferenceRequest&) override {
    const int now_inflight = ++inflight_;
    int prev = peak_.load();
    while (now_inflight > prev && !peak_.compare_exchange_weak(prev, now_inflight)) {
    }
    {
      std::lock_guard lock(mu_);
      issued_.push_back(clock_.now());
    }
    clock_.sleep_for(hold_);
    --inflight_;
    return ok_reply(R"({"label": "Benign", "reason": "idle"})");
  }

  int peak() const { return peak_.load(); }
  std::vector<double> issued() {
    std::lock_guard lock(mu_);
    auto v = issued_;
    std::sort(v.begin(), v.end());
    return v;
  }

 private:
  Clock& clock_;
  double hold_;
  std::atomic<int> inflight_{0};
  std::atomic<int> peak_{0};
  std::mutex mu_;
  std::vector<double> issued_;
};

// Largest number of sorted timestamps inside any half-open window of `width`.
inline std::size_t max_in_window(const std::vector<double>& sorted, double width) {
  std::size_t best = 0, lo = 0;
  for (std::size_t hi = 0; hi < sorted.size(); ++hi) {
    while (sorted[hi] - sorted[lo] >= width) ++lo;
    best = std::max(best, hi - lo + 1);
  }
  return best;
}

}  // namespace vrmod::testing
