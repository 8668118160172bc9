#pragma once

// Moderation service: clip submission, frame hosting, verdicts, the review
// queue and an append-only audit log from which all state is rebuilt.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/evalkit.hpp"
#include "vrmod/finetune.hpp"
#include "vrmod/gateway.hpp"
#include "vrmod/io.hpp"
#include "vrmod/media.hpp"
#include "vrmod/pipeline.hpp"

namespace vrmod {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path store_path = "modstore";
  BackendConfig backend;
  PromptVariant variant = PromptVariant::Baseline;
  int workers = 2;
  int frames_per_segment = kDefaultFramesPerSegment;
  std::string public_base_url;  // defaults to http://<bind_address>:<port>
  std::string auth_token;       // empty disables bearer checks
  std::uint64_t max_store_bytes = 0;  // uploads budget; 0 = unlimited
  std::uint64_t max_upload_bytes = 512ull << 20;

  // Plain `key = value` lines; '#' starts a comment. Throws InvalidArgument
  // on unknown keys or malformed values.
  static ServiceConfig parse(std::string_view text);
  static ServiceConfig load(const std::filesystem::path& path);
};

enum class ClipStatus { Queued, Processing, Classified, DiscardedShort, Failed };
std::string_view wire(ClipStatus s) noexcept;  // queued, processing, classified, discarded-short, failed

enum class ReviewStatus { Pending, Confirmed, Overridden };
std::string_view wire(ReviewStatus s) noexcept;  // Pending, Confirmed, Overridden
std::optional<ReviewStatus> parse_review_status(std::string_view text) noexcept;  // case-insensitive

struct AuditEvent {
  std::uint64_t seq = 0;
  double timestamp = 0.0;  // unix seconds
  std::string actor;
  std::string action;
  nlohmann::json payload;
};

nlohmann::json to_json(const AuditEvent& e);

struct ClipState {
  std::string clip_id;
  std::string sha256;
  ClipStatus status = ClipStatus::Queued;
  std::uint64_t bytes = 0;
  double duration = 0.0;
  std::vector<std::string> segment_ids;
  std::string error;
  std::uint64_t submitted_seq = 0;
};

struct SegmentState {
  IngestedSegment segment;
  std::optional<Verdict> stage1;
  std::optional<Verdict> stage2;
  std::string item_id;  // empty unless queued for review
};

struct ReviewItem {
  std::string item_id;
  std::string segment_id;
  std::string clip_id;
  ReviewStatus status = ReviewStatus::Pending;
  std::optional<Stage2Label> moderator_label;
  std::string moderator_note;
  std::string reviewed_by;
  double created_at = 0.0;
  double reviewed_at = 0.0;
  std::uint64_t created_seq = 0;
};

struct ReviewDecision {
  bool override_label = false;
  std::optional<Stage2Label> label;  // required for overrides
  std::string note;
};

struct SubmitResult {
  std::string clip_id;
  bool created = false;
};

struct QueuePage {
  std::vector<ReviewItem> items;
  std::size_t total = 0;
  std::size_t page = 1;
  std::size_t page_size = 50;
};

// Durable state. Every mutation is appended to audit.log and synced before it
// becomes visible; opening a store replays the log. Thread-safe: mutations
// are serialized, queries take a shared lock.
class ModStore {
 public:
  explicit ModStore(std::filesystem::path root, std::uint64_t max_store_bytes = 0);
  ~ModStore();
  ModStore(const ModStore&) = delete;
  ModStore& operator=(const ModStore&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }
  const FrameStore& frames() const noexcept { return frames_; }
  FrameStore& frames() noexcept { return frames_; }
  std::filesystem::path upload_path(const std::string& clip_id) const;

  // Throws UnsupportedMedia and StoreFull.
  SubmitResult submit(std::span<const std::uint8_t> bytes, const std::string& actor);
  void record_ingest(const std::string& clip_id, double duration, std::span<const IngestedSegment> segments);
  void record_discard(const std::string& clip_id, const std::string& reason);
  void record_failure(const std::string& clip_id, const std::string& message);
  // Queues the segment for review when Stage 1 says Anomaly.
  void record_verdict(const SegmentResult& result);
  void mark_classified(const std::string& clip_id);
  // Throws UnknownItem, AlreadyReviewed and InvalidArgument.
  ReviewItem review(const std::string& item_id, const ReviewDecision& decision, const std::string& actor);

  std::optional<ClipState> clip(const std::string& clip_id) const;
  std::optional<SegmentState> segment(const std::string& segment_id) const;
  std::optional<ReviewItem> item(const std::string& item_id) const;
  // Ordered by creation; `page` is 1-based.
  QueuePage queue(std::optional<ReviewStatus> status, std::size_t page, std::size_t page_size) const;
  std::vector<ReviewItem> items() const;
  std::vector<AuditEvent> audit(std::uint64_t since, std::size_t limit) const;
  std::uint64_t last_seq() const;
  // Clips submitted but not yet in a terminal state, by submission order.
  std::vector<std::string> unfinished_clips() const;
  std::vector<SegmentState> clip_segments(const std::string& clip_id) const;

  // Model Stage 2 verdicts scored against moderator decisions. Empty when
  // nothing has been reviewed.
  std::optional<RunEvaluation> moderator_report(PromptVariant variant, const std::string& backend) const;
  // Overridden items as fine-tuning examples carrying the moderator label.
  std::vector<SftItem> override_items() const;

 private:
  struct State;

  AuditEvent append(const std::string& actor, const std::string& action, nlohmann::json payload);
  static void apply(State& state, const AuditEvent& e);

  std::filesystem::path root_;
  std::uint64_t max_store_bytes_;
  FrameStore frames_;
  std::unique_ptr<State> state_;
  std::unique_ptr<AppendLog> log_;
  mutable std::shared_mutex mu_;
  std::mutex write_mu_;
};

// HTTP front end plus background ingest/classify workers.
class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts serving on a background thread; returns the port.
  int start();
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();
  // Blocks until every submitted clip reached a terminal state.
  void wait_idle();

  ModStore& store();
  const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vrmod
