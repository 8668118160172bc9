#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>

#include "support.hpp"
#include "vrmod/clip_format.hpp"
#include "vrmod/error.hpp"
#include "vrmod/image.hpp"
#include "vrmod/io.hpp"
#include "vrmod/service.hpp"
#include "vrmod/synth.hpp"

namespace vrmod {
namespace {

using nlohmann::json;
using testing::TempDir;

std::vector<std::uint8_t> short_clip(double seconds) {
  std::vector<std::vector<std::uint8_t>> frames;
  const int n = static_cast<int>(seconds * 10);
  for (int i = 0; i < n; ++i) frames.push_back(encode_jpeg(Image(16, 16, Rgb{static_cast<std::uint8_t>(i), 0, 0}), 70));
  return encode_clip({16, 16, static_cast<std::uint32_t>(n), 10.0}, frames);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no vrmod::Error thrown";
  return ErrorCode::InvalidArgument;
}

TEST(ServiceConfigTest, ParsesKeyValueLines) {
  const auto cfg = ServiceConfig::parse(R"(
# moderation service
bind_address = 0.0.0.0
port = 9000
store_path = /var/lib/vrmod
backend = remote
endpoint_url = https://api.example/v1/chat/completions   # trailing comment
model = ft:gpt-4o:tuned
rpm = 120
max_inflight = 8
variant = cot
auth_token = s3cret
)");
  EXPECT_EQ(cfg.bind_address, "0.0.0.0");
  EXPECT_EQ(cfg.port, 9000);
  EXPECT_EQ(cfg.backend.kind, BackendKind::RemoteChat);
  EXPECT_EQ(cfg.backend.endpoint_url, "https://api.example/v1/chat/completions");
  EXPECT_EQ(cfg.backend.requests_per_minute, 120);
  EXPECT_EQ(cfg.variant, PromptVariant::CoT);
  EXPECT_EQ(cfg.auth_token, "s3cret");
}

TEST(ServiceConfigTest, RejectsBadInput) {
  EXPECT_EQ(code_of([] { ServiceConfig::parse("colour = blue"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { ServiceConfig::parse("port = eighty"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { ServiceConfig::parse("just words"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { ServiceConfig::parse("variant = fewshot"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { ServiceConfig::parse("backend = remote"); }), ErrorCode::InvalidArgument);
}

// A store with one ingested clip whose two segments were classified Anomaly.
struct Seeded {
  std::string clip_id;
  std::vector<std::string> items;
};

Seeded seed_store(ModStore& store) {
  Seeded s;
  s.clip_id = store.submit(short_clip(20), "tester").clip_id;
  std::vector<IngestedSegment> segs(2);
  for (int i = 0; i < 2; ++i) {
    segs[i].segment.clip_id = s.clip_id;
    segs[i].segment.index = i;
    segs[i].segment.start = 10.0 * i;
    segs[i].segment.segment_id = make_segment_id(s.clip_id, i);
  }
  store.record_ingest(s.clip_id, 20.0, segs);
  for (const auto& seg : segs) {
    SegmentResult r;
    r.segment = seg;
    Verdict v1, v2;
    v1.label = Label(Stage1Label::Anomaly);
    v1.parse_status = ParseStatus::Clean;
    v2.label = Label(Stage2Label::AggressiveBehavior);
    v2.parse_status = ParseStatus::Clean;
    r.stage1 = v1;
    r.stage2 = v2;
    store.record_verdict(r);
    s.items.push_back(store.segment(seg.segment.segment_id)->item_id);
  }
  store.mark_classified(s.clip_id);
  return s;
}

TEST(ModStoreTest, SubmitIsContentAddressedAndIdempotent) {
  TempDir dir;
  ModStore store(dir.path());
  const auto bytes = short_clip(12);
  const auto a = store.submit(bytes, "u");
  const auto b = store.submit(bytes, "u");
  EXPECT_TRUE(a.created);
  EXPECT_FALSE(b.created);
  EXPECT_EQ(a.clip_id, b.clip_id);
  EXPECT_EQ(a.clip_id.rfind("clip-", 0), 0u);
  EXPECT_EQ(a.clip_id.size(), 17u);
  EXPECT_TRUE(std::filesystem::exists(store.upload_path(a.clip_id)));
  EXPECT_EQ(code_of([&] { store.submit(std::vector<std::uint8_t>{1, 2, 3}, "u"); }), ErrorCode::UnsupportedMedia);
}

TEST(ModStoreTest, StoreBudget) {
  TempDir dir;
  const auto bytes = short_clip(12);
  ModStore store(dir.path(), bytes.size() + 10);
  store.submit(bytes, "u");
  EXPECT_EQ(code_of([&] { store.submit(short_clip(13), "u"); }), ErrorCode::StoreFull);
}

TEST(ModStoreTest, ReviewTransitions) {
  TempDir dir;
  ModStore store(dir.path());
  const auto seeded = seed_store(store);
  ASSERT_EQ(seeded.items.size(), 2u);
  EXPECT_EQ(seeded.items[0], "item-000001");

  const auto confirmed = store.review(seeded.items[0], {}, "mod-a");
  EXPECT_EQ(confirmed.status, ReviewStatus::Confirmed);
  EXPECT_EQ(confirmed.reviewed_by, "mod-a");
  EXPECT_EQ(code_of([&] { store.review(seeded.items[0], {}, "mod-b"); }), ErrorCode::AlreadyReviewed);
  EXPECT_EQ(code_of([&] { store.review("item-999999", {}, "mod-b"); }), ErrorCode::UnknownItem);
  EXPECT_EQ(code_of([&] { store.review(seeded.items[1], {true, std::nullopt, ""}, "mod-b"); }),
            ErrorCode::InvalidArgument);

  const auto over = store.review(seeded.items[1], {true, Stage2Label::BenignBehavior, "play fight"}, "mod-b");
  EXPECT_EQ(over.status, ReviewStatus::Overridden);
  EXPECT_EQ(over.moderator_label, Stage2Label::BenignBehavior);

  EXPECT_EQ(store.queue(ReviewStatus::Pending, 1, 50).total, 0u);
  EXPECT_EQ(store.queue(std::nullopt, 1, 50).total, 2u);
  EXPECT_EQ(store.queue(ReviewStatus::Overridden, 1, 50).items.at(0).item_id, seeded.items[1]);

  const auto report = store.moderator_report(PromptVariant::Baseline, "mock");
  ASSERT_TRUE(report);
  EXPECT_EQ(report->report.total, 2u);
  EXPECT_DOUBLE_EQ(report->report.accuracy, 0.5);
  ASSERT_EQ(store.override_items().size(), 1u);
  EXPECT_EQ(store.override_items()[0].gold, Stage2Label::BenignBehavior);
}

TEST(ModStoreTest, ReplayRebuildsStateAndDropsTornTail) {
  TempDir dir;
  std::uint64_t last = 0;
  Seeded seeded;
  {
    ModStore store(dir.path());
    seeded = seed_store(store);
    store.review(seeded.items[0], {}, "mod");
    last = store.last_seq();
  }
  std::ofstream(dir / "audit.log", std::ios::app) << R"({"seq":)" << last + 1 << R"(,"ts":1,"act)";
  {
    ModStore store(dir.path());
    EXPECT_EQ(store.last_seq(), last);
    EXPECT_EQ(store.clip(seeded.clip_id)->status, ClipStatus::Classified);
    EXPECT_EQ(store.item(seeded.items[0])->status, ReviewStatus::Confirmed);
    EXPECT_EQ(store.item(seeded.items[1])->status, ReviewStatus::Pending);
    store.review(seeded.items[1], {}, "mod");
    const auto events = store.audit(0, 1000);
    ASSERT_EQ(events.size(), last + 1);
    for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].seq, i + 1);
    EXPECT_EQ(store.audit(last, 10).size(), 1u);
  }
}

TEST(ModStoreTest, SequenceGapIsRejected) {
  TempDir dir;
  {
    ModStore store(dir.path());
    store.submit(short_clip(11), "u");
    store.submit(short_clip(12), "u");
  }
  std::string log = read_text(dir / "audit.log");
  log.erase(0, log.find('\n') + 1);
  write_atomic(dir / "audit.log", log);
  EXPECT_EQ(code_of([&] { ModStore store(dir.path()); }), ErrorCode::Io);
}

class ServiceHttp : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.store_path = dir_ / "store";
    cfg.backend.kind = BackendKind::MockOracle;
    cfg.backend.requests_per_minute = 600000;
    cfg.backend.sidecar_dir = dir_ / "sidecars";
    cfg.auth_token = "tok";
    cfg.workers = 1;
    service_ = std::make_unique<Service>(cfg);
    port_ = service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_bearer_token_auth("tok");
  }

  std::string add_clip(Subcategory sub, double seconds, std::uint64_t seed) {
    const auto g = synth::generate({sub, seconds, 0, seed});
    write_atomic(synth::sidecar_path(dir_ / "sidecars", g.clip_hash), g.sidecar.dump());
    auto res = client_->Post("/clips", std::string(g.clip_bytes.begin(), g.clip_bytes.end()),
                             "application/octet-stream");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 202);
    return json::parse(res->body).at("clip_id").get<std::string>();
  }

  json get(const std::string& path, int expect = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return json::parse(res->body, nullptr, false);
  }

  TempDir dir_;
  std::unique_ptr<Service> service_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(ServiceHttp, HealthAndAuth) {
  httplib::Client anon("127.0.0.1", port_);
  EXPECT_EQ(anon.Get("/healthz")->status, 200);
  EXPECT_EQ(anon.Get("/queue")->status, 401);
  httplib::Client wrong("127.0.0.1", port_);
  wrong.set_bearer_token_auth("nope");
  EXPECT_EQ(wrong.Get("/audit")->status, 401);
  get("/queue");
}

TEST_F(ServiceHttp, SubmitClassifyAndReview) {
  const auto strike = add_clip(Subcategory::Punching, 42.0, 5);
  const auto idle = add_clip(Subcategory::BenignOther, 10.0, 6);
  const auto tiny = short_clip(5);
  auto res = client_->Post("/clips", std::string(tiny.begin(), tiny.end()), "application/octet-stream");
  ASSERT_TRUE(res);
  const auto tiny_id = json::parse(res->body).at("clip_id").get<std::string>();
  service_->wait_idle();

  const auto c = get("/clips/" + strike);
  EXPECT_EQ(c["status"], "classified");
  ASSERT_EQ(c["segments"].size(), 4u);
  EXPECT_EQ(get("/clips/" + tiny_id)["status"], "discarded-short");
  EXPECT_EQ(get("/clips/" + idle)["status"], "classified");
  get("/clips/clip-000000000000", 404);

  const auto seg = get("/segments/" + c["segments"][0].get<std::string>());
  EXPECT_EQ(seg["stage1"]["label"], "Anomaly");
  EXPECT_EQ(seg["stage2"]["label"], "Aggressive Behavior");
  ASSERT_EQ(seg["frames"].size(), 6u);
  const std::string frame_url = seg["frames"][0]["url"];
  const auto path = frame_url.substr(frame_url.find("/frames/"));
  httplib::Client anon("127.0.0.1", port_);
  auto frame = anon.Get(path);
  ASSERT_TRUE(frame);
  EXPECT_EQ(frame->status, 200);
  EXPECT_EQ(frame->get_header_value("Content-Type"), "image/jpeg");
  EXPECT_NE(frame->get_header_value("Cache-Control").find("immutable"), std::string::npos);

  const auto idle_seg = get("/segments/" + make_segment_id(idle, 0));
  EXPECT_EQ(idle_seg["stage2"]["origin"], "cascade-default");
  EXPECT_TRUE(idle_seg["item_id"].is_null());

  auto queue = get("/queue?status=pending&page_size=3");
  EXPECT_EQ(queue["total"], 4);
  EXPECT_EQ(queue["items"].size(), 3u);
  EXPECT_EQ(get("/queue?status=pending&page=2&page_size=3")["items"].size(), 1u);
  get("/queue?status=bogus", 400);

  const std::string item = queue["items"][0]["item_id"];
  auto post = [&](const std::string& id, const json& body) {
    return client_->Post("/review/" + id, body.dump(), "application/json");
  };
  auto r = post(item, {{"decision", "confirm"}, {"actor", "alice"}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["status"], "Confirmed");
  EXPECT_EQ(post(item, {{"decision", "confirm"}})->status, 409);
  const std::string second = queue["items"][1]["item_id"];
  EXPECT_EQ(post(second, {{"decision", "override"}, {"label", "Anomaly"}})->status, 400);
  EXPECT_EQ(post(second, {{"decision", "shrug"}})->status, 400);
  EXPECT_EQ(post("item-424242", {{"decision", "confirm"}})->status, 404);
  EXPECT_EQ(post(second, {{"decision", "override"}, {"label", "Disruptive Behavior"}, {"note", "n"}})->status, 200);
  EXPECT_EQ(get("/queue?status=Pending")["total"], 2);
  EXPECT_EQ(get("/queue")["total"], 4);

  const auto audit = get("/audit?since=0&limit=1000");
  const auto& events = audit["events"];
  ASSERT_FALSE(events.empty());
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i]["seq"], i + 1);
  EXPECT_EQ(events.back()["action"], "review.overridden");
  EXPECT_EQ(events[events.size() - 2]["actor"], "alice");
  EXPECT_EQ(get("/audit?since=" + std::to_string(events.size() - 1))["events"].size(), 1u);

  const auto report = get("/reports/latest");
  EXPECT_EQ(report["reviewed"], 2);
  EXPECT_DOUBLE_EQ(report["report"]["accuracy"].get<double>(), 0.5);
}

TEST_F(ServiceHttp, RejectsUnsupportedMediaAndDuplicates) {
  auto res = client_->Post("/clips", "GIF89a....", "application/octet-stream");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 415);
  const auto clip = add_clip(Subcategory::Looming, 10.0, 1);
  const auto g = synth::generate({Subcategory::Looming, 10.0, 0, 1});
  res = client_->Post("/clips", std::string(g.clip_bytes.begin(), g.clip_bytes.end()), "application/octet-stream");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["clip_id"], clip);
}

TEST(ServiceRestart, RequeuesUnfinishedClips) {
  TempDir dir;
  const auto g = synth::generate({Subcategory::Slapping, 10.0, 0, 8});
  write_atomic(synth::sidecar_path(dir / "sidecars", g.clip_hash), g.sidecar.dump());
  std::string clip_id;
  {
    ModStore store(dir / "store");
    clip_id = store.submit(g.clip_bytes, "u").clip_id;
  }
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.store_path = dir / "store";
  cfg.backend.sidecar_dir = dir / "sidecars";
  cfg.backend.requests_per_minute = 600000;
  Service svc(cfg);
  svc.start();
  svc.wait_idle();
  EXPECT_EQ(svc.store().clip(clip_id)->status, ClipStatus::Classified);
  EXPECT_EQ(svc.store().queue(ReviewStatus::Pending, 1, 10).total, 1u);
  svc.stop();
}

}  // namespace
}  // namespace vrmod
