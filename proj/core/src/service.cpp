#include "vrmod/service.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "vrmod/clip_format.hpp"
#include "vrmod/error.hpp"
#include "vrmod/hash.hpp"

namespace vrmod {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double unix_now() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw Error(ErrorCode::InvalidArgument, "bad value for " + key + ": " + value);
  return out;
}

}  // namespace

ServiceConfig ServiceConfig::parse(std::string_view text) {
  ServiceConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + " has no '='");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "bind_address") cfg.bind_address = value;
    else if (key == "port") cfg.port = parse_number<int>(key, value);
    else if (key == "store_path") cfg.store_path = value;
    else if (key == "backend") {
      auto kind = parse_backend_kind(value);
      if (!kind) throw Error(ErrorCode::InvalidArgument, "backend must be remote or mock");
      cfg.backend.kind = *kind;
    } else if (key == "model") cfg.backend.model_name = value;
    else if (key == "endpoint_url") cfg.backend.endpoint_url = value;
    else if (key == "api_key_env") cfg.backend.api_key_ref = value;
    else if (key == "rpm") cfg.backend.requests_per_minute = parse_number<int>(key, value);
    else if (key == "max_inflight") cfg.backend.max_inflight = parse_number<int>(key, value);
    else if (key == "timeout") cfg.backend.timeout = parse_number<double>(key, value);
    else if (key == "max_retries") cfg.backend.max_retries = parse_number<int>(key, value);
    else if (key == "backoff_base") cfg.backend.backoff_base = parse_number<double>(key, value);
    else if (key == "sidecar_dir") cfg.backend.sidecar_dir = value;
    else if (key == "mock_latency") cfg.backend.mock_latency = parse_number<double>(key, value);
    else if (key == "variant") {
      auto v = parse_variant(value);
      if (!v) throw Error(ErrorCode::InvalidArgument, "unknown variant: " + value);
      cfg.variant = *v;
    } else if (key == "workers") cfg.workers = parse_number<int>(key, value);
    else if (key == "frames_per_segment") cfg.frames_per_segment = parse_number<int>(key, value);
    else if (key == "public_base_url") cfg.public_base_url = value;
    else if (key == "auth_token") cfg.auth_token = value;
    else if (key == "max_store_bytes") cfg.max_store_bytes = parse_number<std::uint64_t>(key, value);
    else if (key == "max_upload_bytes") cfg.max_upload_bytes = parse_number<std::uint64_t>(key, value);
    else throw Error(ErrorCode::InvalidArgument, "unknown config key: " + key);
  }
  if (cfg.workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  if (cfg.frames_per_segment < 2) throw Error(ErrorCode::InvalidFrameCount, "frames_per_segment must be >= 2");
  if (cfg.variant == PromptVariant::FewShot) {
    throw Error(ErrorCode::InvalidArgument, "the service has no labeled exemplars for few-shot prompting");
  }
  cfg.backend.validate();
  return cfg;
}

ServiceConfig ServiceConfig::load(const fs::path& path) { return parse(read_text(path)); }

std::string_view wire(ClipStatus s) noexcept {
  switch (s) {
    case ClipStatus::Queued: return "queued";
    case ClipStatus::Processing: return "processing";
    case ClipStatus::Classified: return "classified";
    case ClipStatus::DiscardedShort: return "discarded-short";
    case ClipStatus::Failed: return "failed";
  }
  return "";
}

std::string_view wire(ReviewStatus s) noexcept {
  switch (s) {
    case ReviewStatus::Pending: return "Pending";
    case ReviewStatus::Confirmed: return "Confirmed";
    case ReviewStatus::Overridden: return "Overridden";
  }
  return "";
}

std::optional<ReviewStatus> parse_review_status(std::string_view text) noexcept {
  const std::string t = lower(std::string(text));
  for (auto s : {ReviewStatus::Pending, ReviewStatus::Confirmed, ReviewStatus::Overridden}) {
    if (lower(std::string(wire(s))) == t) return s;
  }
  return std::nullopt;
}

json to_json(const AuditEvent& e) {
  return {{"seq", e.seq}, {"ts", e.timestamp}, {"actor", e.actor}, {"action", e.action}, {"payload", e.payload}};
}

// ---------------------------------------------------------------------------

struct ModStore::State {
  std::map<std::string, ClipState> clips;
  std::vector<std::string> clip_order;
  std::map<std::string, SegmentState> segments;
  std::map<std::string, ReviewItem> items;
  std::vector<std::string> item_order;
  std::vector<AuditEvent> events;
  std::uint64_t upload_bytes = 0;
};

namespace {

bool terminal(ClipStatus s) {
  return s == ClipStatus::Classified || s == ClipStatus::DiscardedShort || s == ClipStatus::Failed;
}

AuditEvent event_from_json(const json& j) {
  AuditEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.timestamp = j.at("ts").get<double>();
  e.actor = j.at("actor").get<std::string>();
  e.action = j.at("action").get<std::string>();
  e.payload = j.at("payload");
  return e;
}

}  // namespace

void ModStore::apply(State& st, const AuditEvent& e) {
  const json& p = e.payload;
  const auto& a = e.action;
  if (a == "clip.submitted") {
    ClipState c;
    c.clip_id = p.at("clip_id").get<std::string>();
    c.sha256 = p.at("sha256").get<std::string>();
    c.bytes = p.at("bytes").get<std::uint64_t>();
    c.submitted_seq = e.seq;
    st.upload_bytes += c.bytes;
    st.clip_order.push_back(c.clip_id);
    st.clips.emplace(c.clip_id, std::move(c));
  } else if (a == "clip.ingested") {
    auto& c = st.clips.at(p.at("clip_id").get<std::string>());
    c.status = ClipStatus::Processing;
    c.duration = p.at("duration").get<double>();
    for (const auto& sj : p.at("segments")) {
      SegmentState s;
      s.segment = sj.get<IngestedSegment>();
      c.segment_ids.push_back(s.segment.segment.segment_id);
      st.segments.insert_or_assign(s.segment.segment.segment_id, std::move(s));
    }
  } else if (a == "clip.discarded") {
    auto& c = st.clips.at(p.at("clip_id").get<std::string>());
    const auto reason = p.at("reason").get<std::string>();
    c.status = reason == "discarded-short" ? ClipStatus::DiscardedShort : ClipStatus::Failed;
    c.error = reason;
  } else if (a == "clip.failed") {
    auto& c = st.clips.at(p.at("clip_id").get<std::string>());
    c.status = ClipStatus::Failed;
    c.error = p.at("error").get<std::string>();
  } else if (a == "clip.classified") {
    st.clips.at(p.at("clip_id").get<std::string>()).status = ClipStatus::Classified;
  } else if (a == "verdict.recorded") {
    auto& s = st.segments.at(p.at("segment_id").get<std::string>());
    if (!p.at("stage1").is_null()) s.stage1 = verdict_from_json(p.at("stage1"), Stage::One);
    if (!p.at("stage2").is_null()) s.stage2 = verdict_from_json(p.at("stage2"), Stage::Two);
    for (auto* v : {&s.stage1, &s.stage2}) {
      if (*v) (*v)->segment_id = s.segment.segment.segment_id;
    }
    if (p.contains("item_id")) {
      ReviewItem item;
      item.item_id = p.at("item_id").get<std::string>();
      item.segment_id = s.segment.segment.segment_id;
      item.clip_id = s.segment.segment.clip_id;
      item.created_at = e.timestamp;
      item.created_seq = e.seq;
      s.item_id = item.item_id;
      st.item_order.push_back(item.item_id);
      st.items.emplace(item.item_id, std::move(item));
    }
  } else if (a == "review.confirmed" || a == "review.overridden") {
    auto& item = st.items.at(p.at("item_id").get<std::string>());
    item.status = a == "review.confirmed" ? ReviewStatus::Confirmed : ReviewStatus::Overridden;
    if (p.contains("label") && !p.at("label").is_null()) {
      item.moderator_label = parse_stage2(p.at("label").get<std::string>());
    }
    item.moderator_note = p.value("note", std::string());
    item.reviewed_by = e.actor;
    item.reviewed_at = e.timestamp;
  } else {
    throw Error(ErrorCode::Io, "audit log has unknown action " + a);
  }
  st.events.push_back(e);
}

ModStore::ModStore(fs::path root, std::uint64_t max_store_bytes)
    : root_(std::move(root)), max_store_bytes_(max_store_bytes), frames_(root_), state_(std::make_unique<State>()) {
  fs::create_directories(root_ / "uploads");
  const fs::path log_path = root_ / "audit.log";
  if (fs::exists(log_path)) {
    std::string torn;
    std::string intact;
    for_each_line(
        log_path,
        [&](std::string_view line, std::size_t lineno) {
          AuditEvent e;
          try {
            e = event_from_json(json::parse(line));
          } catch (const json::exception& ex) {
            throw Error(ErrorCode::Io, "audit.log line " + std::to_string(lineno) + ": " + ex.what());
          }
          const std::uint64_t expected = state_->events.empty() ? 1 : state_->events.back().seq + 1;
          if (e.seq != expected) {
            throw Error(ErrorCode::Io, "audit.log sequence gap at line " + std::to_string(lineno));
          }
          apply(*state_, e);
          intact.append(line).push_back('\n');
        },
        &torn);
    // A torn final record was never acknowledged; drop it before appending.
    if (!torn.empty()) write_atomic(log_path, intact);
  }
  log_ = std::make_unique<AppendLog>(log_path, true);
}

ModStore::~ModStore() = default;

fs::path ModStore::upload_path(const std::string& clip_id) const {
  return root_ / "uploads" / (clip_id + ".vrclip");
}

AuditEvent ModStore::append(const std::string& actor, const std::string& action, json payload) {
  AuditEvent e;
  e.seq = last_seq() + 1;
  e.timestamp = unix_now();
  e.actor = actor;
  e.action = action;
  e.payload = std::move(payload);
  log_->append(to_json(e).dump(-1, ' ', false, json::error_handler_t::replace));
  std::unique_lock lock(mu_);
  apply(*state_, e);
  return e;
}

SubmitResult ModStore::submit(std::span<const std::uint8_t> bytes, const std::string& actor) {
  if (bytes.empty() || !is_native_clip(bytes)) {
    throw Error(ErrorCode::UnsupportedMedia, "upload is not a supported clip container");
  }
  NativeClip parsed(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
  const std::string sha = sha256_hex(bytes);
  const std::string clip_id = "clip-" + sha.substr(0, 12);
  std::lock_guard writer(write_mu_);
  {
    std::shared_lock lock(mu_);
    if (state_->clips.count(clip_id)) return {clip_id, false};
    if (max_store_bytes_ > 0 && state_->upload_bytes + bytes.size() > max_store_bytes_) {
      throw Error(ErrorCode::StoreFull, "store budget of " + std::to_string(max_store_bytes_) + " bytes exhausted");
    }
  }
  write_atomic(upload_path(clip_id), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  append(actor, "clip.submitted", {{"clip_id", clip_id}, {"sha256", sha}, {"bytes", bytes.size()}});
  return {clip_id, true};
}

void ModStore::record_ingest(const std::string& clip_id, double duration, std::span<const IngestedSegment> segments) {
  std::lock_guard writer(write_mu_);
  append("system", "clip.ingested",
         {{"clip_id", clip_id}, {"duration", duration}, {"segments", json(std::vector(segments.begin(), segments.end()))}});
}

void ModStore::record_discard(const std::string& clip_id, const std::string& reason) {
  std::lock_guard writer(write_mu_);
  append("system", "clip.discarded", {{"clip_id", clip_id}, {"reason", reason}});
}

void ModStore::record_failure(const std::string& clip_id, const std::string& message) {
  std::lock_guard writer(write_mu_);
  append("system", "clip.failed", {{"clip_id", clip_id}, {"error", message}});
}

void ModStore::record_verdict(const SegmentResult& result) {
  std::lock_guard writer(write_mu_);
  json payload = to_json(result);
  if (result.stage1 && result.stage1->label == Label(Stage1Label::Anomaly)) {
    std::size_t n;
    {
      std::shared_lock lock(mu_);
      n = state_->item_order.size();
    }
    char id[32];
    std::snprintf(id, sizeof id, "item-%06zu", n + 1);
    payload["item_id"] = id;
  }
  append("system", "verdict.recorded", std::move(payload));
}

void ModStore::mark_classified(const std::string& clip_id) {
  std::lock_guard writer(write_mu_);
  append("system", "clip.classified", {{"clip_id", clip_id}});
}

ReviewItem ModStore::review(const std::string& item_id, const ReviewDecision& decision, const std::string& actor) {
  if (decision.override_label && !decision.label) {
    throw Error(ErrorCode::InvalidArgument, "an override needs a Stage 2 label");
  }
  std::lock_guard writer(write_mu_);
  {
    std::shared_lock lock(mu_);
    auto it = state_->items.find(item_id);
    if (it == state_->items.end()) throw Error(ErrorCode::UnknownItem, "no review item " + item_id);
    if (it->second.status != ReviewStatus::Pending) {
      throw Error(ErrorCode::AlreadyReviewed, item_id + " is already " + std::string(wire(it->second.status)));
    }
  }
  json payload = {{"item_id", item_id}, {"note", decision.note}};
  payload["label"] = decision.override_label ? json(std::string(wire(*decision.label))) : json(nullptr);
  append(actor.empty() ? "moderator" : actor, decision.override_label ? "review.overridden" : "review.confirmed",
         std::move(payload));
  std::shared_lock lock(mu_);
  return state_->items.at(item_id);
}

std::optional<ClipState> ModStore::clip(const std::string& clip_id) const {
  std::shared_lock lock(mu_);
  auto it = state_->clips.find(clip_id);
  if (it == state_->clips.end()) return std::nullopt;
  return it->second;
}

std::optional<SegmentState> ModStore::segment(const std::string& segment_id) const {
  std::shared_lock lock(mu_);
  auto it = state_->segments.find(segment_id);
  if (it == state_->segments.end()) return std::nullopt;
  return it->second;
}

std::optional<ReviewItem> ModStore::item(const std::string& item_id) const {
  std::shared_lock lock(mu_);
  auto it = state_->items.find(item_id);
  if (it == state_->items.end()) return std::nullopt;
  return it->second;
}

QueuePage ModStore::queue(std::optional<ReviewStatus> status, std::size_t page, std::size_t page_size) const {
  if (page < 1) page = 1;
  if (page_size < 1) page_size = 1;
  QueuePage out;
  out.page = page;
  out.page_size = page_size;
  const std::size_t first = (page - 1) * page_size;
  std::shared_lock lock(mu_);
  for (const auto& id : state_->item_order) {
    const auto& item = state_->items.at(id);
    if (status && item.status != *status) continue;
    if (out.total >= first && out.items.size() < page_size) out.items.push_back(item);
    ++out.total;
  }
  return out;
}

std::vector<ReviewItem> ModStore::items() const {
  std::shared_lock lock(mu_);
  std::vector<ReviewItem> out;
  for (const auto& id : state_->item_order) out.push_back(state_->items.at(id));
  return out;
}

std::vector<AuditEvent> ModStore::audit(std::uint64_t since, std::size_t limit) const {
  std::shared_lock lock(mu_);
  std::vector<AuditEvent> out;
  // seq n lives at index n - 1.
  for (std::size_t i = since; i < state_->events.size() && out.size() < limit; ++i) {
    out.push_back(state_->events[i]);
  }
  return out;
}

std::uint64_t ModStore::last_seq() const {
  std::shared_lock lock(mu_);
  return state_->events.empty() ? 0 : state_->events.back().seq;
}

std::vector<std::string> ModStore::unfinished_clips() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& id : state_->clip_order) {
    if (!terminal(state_->clips.at(id).status)) out.push_back(id);
  }
  return out;
}

std::vector<SegmentState> ModStore::clip_segments(const std::string& clip_id) const {
  std::shared_lock lock(mu_);
  std::vector<SegmentState> out;
  auto it = state_->clips.find(clip_id);
  if (it == state_->clips.end()) return out;
  for (const auto& id : it->second.segment_ids) out.push_back(state_->segments.at(id));
  return out;
}

std::optional<RunEvaluation> ModStore::moderator_report(PromptVariant variant, const std::string& backend) const {
  std::vector<SegmentResult> scored;
  {
    std::shared_lock lock(mu_);
    for (const auto& id : state_->item_order) {
      const auto& item = state_->items.at(id);
      if (item.status == ReviewStatus::Pending) continue;
      const auto& seg = state_->segments.at(item.segment_id);
      if (!seg.stage2 || !seg.stage2->label) continue;
      SegmentResult r;
      r.segment = seg.segment;
      r.stage2 = seg.stage2;
      ClipTruth truth;
      truth.label = item.status == ReviewStatus::Overridden ? *item.moderator_label : *seg.stage2->label->stage2();
      r.segment.segment.truth = truth;
      scored.push_back(std::move(r));
    }
  }
  if (scored.empty()) return std::nullopt;
  return evaluate_run(scored, Stage::Two, variant, backend);
}

std::vector<SftItem> ModStore::override_items() const {
  std::shared_lock lock(mu_);
  std::vector<SftItem> out;
  for (const auto& id : state_->item_order) {
    const auto& item = state_->items.at(id);
    if (item.status != ReviewStatus::Overridden) continue;
    const auto label = *item.moderator_label;
    out.push_back({state_->segments.at(item.segment_id).segment, label,
                   item.moderator_note.empty() ? std::string(reason_phrase(label)) : item.moderator_note});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidFrameCount: return 400;
    case ErrorCode::UnknownItem: return 404;
    case ErrorCode::AlreadyReviewed: return 409;
    case ErrorCode::UnsupportedMedia: return 415;
    case ErrorCode::StoreFull: return 507;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

}  // namespace

struct Service::Impl {
  ServiceConfig cfg;
  ModStore store;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<SegmentClassifier> classifier;
  RoutingDecoder decoder;
  httplib::Server server;
  std::thread server_thread;
  std::vector<std::thread> workers;

  std::mutex mu;
  std::condition_variable cv;       // work available or stopping
  std::condition_variable idle_cv;  // a clip finished
  std::deque<std::string> pending;
  std::size_t busy = 0;
  bool stopping = false;
  bool started = false;
  std::string base_url;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)), store(cfg.store_path, cfg.max_store_bytes) {}

  void enqueue(const std::string& clip_id) {
    {
      std::lock_guard lock(mu);
      pending.push_back(clip_id);
    }
    cv.notify_one();
  }

  void worker_loop() {
    for (;;) {
      std::string clip_id;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stopping || !pending.empty(); });
        if (stopping) return;
        clip_id = pending.front();
        pending.pop_front();
        ++busy;
      }
      process(clip_id);
      {
        std::lock_guard lock(mu);
        --busy;
      }
      idle_cv.notify_all();
    }
  }

  void process(const std::string& clip_id) {
    try {
      auto state = store.clip(clip_id);
      if (!state || terminal(state->status)) return;
      if (state->status == ClipStatus::Queued) {
        const auto info = NativeClip::open(store.upload_path(clip_id)).info();
        ClipRecord rec;
        rec.clip_id = clip_id;
        rec.path = store.upload_path(clip_id);
        rec.duration = info.duration();
        rec.fps = info.fps;
        IngestOptions opts;
        opts.sampling.frames = cfg.frames_per_segment;
        const auto result = ingest(std::span(&rec, 1), decoder, store.frames(), opts);
        if (!result.discarded.empty()) {
          store.record_discard(clip_id, result.discarded.front().reason);
          return;
        }
        store.record_ingest(clip_id, rec.duration, result.segments);
      }
      for (const auto& seg : store.clip_segments(clip_id)) {
        if (seg.stage1 || seg.stage2) continue;
        {
          std::lock_guard lock(mu);
          if (stopping) return;
        }
        store.record_verdict(classifier->classify(seg.segment, StageMode::Cascade));
      }
      store.mark_classified(clip_id);
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(mu);
        if (stopping) return;  // unfinished clips are retried on restart
      }
      try {
        store.record_failure(clip_id, e.what());
      } catch (...) {
      }
    }
  }

  bool authorized(const httplib::Request& req) const {
    if (cfg.auth_token.empty()) return true;
    return req.get_header_value("Authorization") == "Bearer " + cfg.auth_token;
  }

  json frame_urls(const IngestedSegment& s) const {
    json out = json::array();
    for (const auto& f : s.frames.frames) {
      out.push_back({{"timestamp", f.timestamp}, {"hash", f.content_hash},
                     {"url", base_url + "/frames/" + f.content_hash + ".jpg"}});
    }
    return out;
  }

  json item_json(const ReviewItem& item) const {
    json j = {{"item_id", item.item_id},
              {"segment_id", item.segment_id},
              {"clip_id", item.clip_id},
              {"status", wire(item.status)},
              {"moderator_label", item.moderator_label ? json(std::string(wire(*item.moderator_label))) : json(nullptr)},
              {"moderator_note", item.moderator_note},
              {"reviewed_by", item.reviewed_by},
              {"created_at", item.created_at},
              {"reviewed_at", item.reviewed_at}};
    if (auto seg = store.segment(item.segment_id)) {
      j["stage1"] = seg->stage1 ? to_json(*seg->stage1) : json(nullptr);
      j["stage2"] = seg->stage2 ? to_json(*seg->stage2) : json(nullptr);
      j["start"] = seg->segment.segment.start;
      j["room"] = wire(seg->segment.room);
      j["frames"] = frame_urls(seg->segment);
    }
    return j;
  }

  void routes() {
    server.set_payload_max_length(cfg.max_upload_bytes);
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      const bool open = req.path.rfind("/frames/", 0) == 0 || req.path == "/healthz";
      if (open || authorized(req)) return httplib::Server::HandlerResponse::Unhandled;
      send_error(res, 401, "Unauthorized", "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "InvalidArgument", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"ok", true}});
    });

    server.Post("/clips", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
      const auto actor = req.has_header("X-Actor") ? req.get_header_value("X-Actor") : std::string("uploader");
      const auto result = store.submit(std::span(data, req.body.size()), actor);
      if (result.created) enqueue(result.clip_id);
      const auto state = store.clip(result.clip_id);
      send_json(res, result.created ? 202 : 200,
                {{"clip_id", result.clip_id}, {"status", wire(state->status)}, {"created", result.created}});
    });

    server.Get(R"(/clips/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto c = store.clip(req.matches[1]);
      if (!c) return send_error(res, 404, "UnknownClip", "no clip " + std::string(req.matches[1]));
      send_json(res, 200,
                {{"clip_id", c->clip_id},
                 {"status", wire(c->status)},
                 {"sha256", c->sha256},
                 {"bytes", c->bytes},
                 {"duration", c->duration},
                 {"segments", c->segment_ids},
                 {"error", c->error}});
    });

    server.Get(R"(/segments/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = store.segment(req.matches[1]);
      if (!s) return send_error(res, 404, "UnknownSegment", "no segment " + std::string(req.matches[1]));
      const auto& seg = s->segment.segment;
      send_json(res, 200,
                {{"segment_id", seg.segment_id},
                 {"clip_id", seg.clip_id},
                 {"index", seg.index},
                 {"start", seg.start},
                 {"length", seg.length},
                 {"room", wire(s->segment.room)},
                 {"frames", frame_urls(s->segment)},
                 {"stage1", s->stage1 ? to_json(*s->stage1) : json(nullptr)},
                 {"stage2", s->stage2 ? to_json(*s->stage2) : json(nullptr)},
                 {"item_id", s->item_id.empty() ? json(nullptr) : json(s->item_id)}});
    });

    server.Get(R"(/frames/([0-9a-f]{64})\.jpg)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string hash = req.matches[1];
      if (!store.frames().contains(hash)) return send_error(res, 404, "MissingFrame", "no frame " + hash);
      const auto bytes = store.frames().get(hash);
      res.set_header("Cache-Control", "public, max-age=31536000, immutable");
      res.set_header("ETag", "\"" + hash + "\"");
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/jpeg");
    });

    server.Get("/queue", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<ReviewStatus> status;
      if (req.has_param("status") && lower(req.get_param_value("status")) != "all") {
        status = parse_review_status(req.get_param_value("status"));
        if (!status) return send_error(res, 400, "InvalidArgument", "unknown status filter");
      }
      const auto page = req.has_param("page") ? parse_number<std::size_t>("page", req.get_param_value("page")) : 1;
      const auto size = req.has_param("page_size")
                            ? parse_number<std::size_t>("page_size", req.get_param_value("page_size"))
                            : 50;
      const auto q = store.queue(status, page, std::min<std::size_t>(size, 500));
      json items = json::array();
      for (const auto& item : q.items) items.push_back(item_json(item));
      send_json(res, 200, {{"items", items}, {"total", q.total}, {"page", q.page}, {"page_size", q.page_size}});
    });

    server.Post(R"(/review/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      const auto decision_text = lower(body.at("decision").get<std::string>());
      ReviewDecision d;
      if (decision_text == "override") {
        d.override_label = true;
        const auto label = body.value("label", std::string());
        d.label = parse_stage2(label);
        if (!d.label) return send_error(res, 400, "InvalidArgument", "override label must be a Stage 2 label");
      } else if (decision_text != "confirm") {
        return send_error(res, 400, "InvalidArgument", "decision must be confirm or override");
      }
      d.note = body.value("note", std::string());
      const auto item = store.review(req.matches[1], d, body.value("actor", std::string("moderator")));
      send_json(res, 200, item_json(item));
    });

    server.Get("/audit", [this](const httplib::Request& req, httplib::Response& res) {
      const auto since = req.has_param("since") ? parse_number<std::uint64_t>("since", req.get_param_value("since")) : 0;
      const auto limit = req.has_param("limit") ? parse_number<std::size_t>("limit", req.get_param_value("limit")) : 1000;
      json events = json::array();
      for (const auto& e : store.audit(since, limit)) events.push_back(to_json(e));
      send_json(res, 200, {{"events", events}, {"last_seq", store.last_seq()}});
    });

    server.Get("/reports/latest", [this](const httplib::Request&, httplib::Response& res) {
      const auto report = store.moderator_report(cfg.variant, cfg.backend.model_name);
      if (!report) return send_json(res, 200, {{"reviewed", 0}, {"report", nullptr}});
      const std::vector<EvalReport> rows{report->report};
      send_json(res, 200,
                {{"reviewed", report->report.total},
                 {"report", to_json(report->report)},
                 {"confusion", to_json(report->matrix)},
                 {"table", render_table(rows)}});
    });
  }
};

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

Service::~Service() { stop(); }

int Service::start() {
  auto& d = *impl_;
  if (d.started) throw Error(ErrorCode::InvalidArgument, "service already started");
  d.routes();
  int port = d.cfg.port;
  if (port == 0) {
    port = d.server.bind_to_any_port(d.cfg.bind_address);
  } else if (!d.server.bind_to_port(d.cfg.bind_address, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error(ErrorCode::Io, "cannot bind " + d.cfg.bind_address + ":" + std::to_string(d.cfg.port));
  }
  d.base_url = d.cfg.public_base_url.empty() ? "http://" + d.cfg.bind_address + ":" + std::to_string(port)
                                             : d.cfg.public_base_url;
  while (!d.base_url.empty() && d.base_url.back() == '/') d.base_url.pop_back();

  auto wire_log = std::make_shared<AppendLog>(d.cfg.store_path / "wire.log", false);
  d.gateway = std::make_unique<Gateway>(d.cfg.backend, make_backend(d.cfg.backend, default_clock()),
                                        default_clock(), wire_log);
  ClassifyOptions opts;
  opts.run_id = "service";
  opts.variant = d.cfg.variant;
  opts.n_frames = d.cfg.frames_per_segment;
  opts.frame_base_url = d.base_url;
  d.classifier = std::make_unique<SegmentClassifier>(*d.gateway, d.store.frames(), std::move(opts));

  for (const auto& id : d.store.unfinished_clips()) d.enqueue(id);
  for (int i = 0; i < d.cfg.workers; ++i) d.workers.emplace_back([&d] { d.worker_loop(); });
  d.server_thread = std::thread([&d] { d.server.listen_after_bind(); });
  d.started = true;
  return port;
}

void Service::stop() {
  auto& d = *impl_;
  {
    std::lock_guard lock(d.mu);
    if (d.stopping) return;
    d.stopping = true;
  }
  d.cv.notify_all();
  d.idle_cv.notify_all();
  d.server.stop();
  if (d.server_thread.joinable()) d.server_thread.join();
  for (auto& w : d.workers) {
    if (w.joinable()) w.join();
  }
}

void Service::wait() {
  auto& d = *impl_;
  std::unique_lock lock(d.mu);
  d.idle_cv.wait(lock, [&] { return d.stopping; });
}

void Service::wait_idle() {
  auto& d = *impl_;
  std::unique_lock lock(d.mu);
  d.idle_cv.wait(lock, [&] { return d.stopping || (d.pending.empty() && d.busy == 0); });
}

ModStore& Service::store() { return impl_->store; }
const ServiceConfig& Service::config() const { return impl_->cfg; }

}  // namespace vrmod
