#include "vrmod/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <mutex>
#include <regex>
#include <set>

#include "vrmod/error.hpp"
#include "vrmod/io.hpp"
#include "vrmod/parallel.hpp"

namespace vrmod {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view wire(StageMode m) noexcept {
  switch (m) {
    case StageMode::Stage1Only: return "stage1-only";
    case StageMode::Stage2Only: return "stage2-only";
    case StageMode::Independent: return "independent";
    case StageMode::Cascade: return "cascade";
  }
  return "";
}

std::optional<StageMode> parse_stage_mode(std::string_view text) noexcept {
  for (auto m : {StageMode::Stage1Only, StageMode::Stage2Only, StageMode::Independent, StageMode::Cascade}) {
    if (wire(m) == text) return m;
  }
  return std::nullopt;
}

bool runs_stage(StageMode mode, Stage stage) noexcept {
  if (mode == StageMode::Stage1Only) return stage == Stage::One;
  if (mode == StageMode::Stage2Only) return stage == Stage::Two;
  return true;
}

void RunConfig::validate() const {
  static const std::regex kRunId(R"([A-Za-z0-9][A-Za-z0-9._-]*)");
  if (!std::regex_match(run_id, kRunId)) {
    throw Error(ErrorCode::InvalidArgument, "run id must match [A-Za-z0-9][A-Za-z0-9._-]*: '" + run_id + "'");
  }
  if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  if (n_frames < 2) throw Error(ErrorCode::InvalidFrameCount, "n_frames must be >= 2");
  if (stage1_shots_per_class < 1 || stage2_shots_per_class < 1) {
    throw Error(ErrorCode::InvalidArgument, "shots per class must be >= 1");
  }
  backend.validate();
}

json to_json(const RunConfig& cfg) {
  return {{"run_id", cfg.run_id},
          {"stage_mode", wire(cfg.stage_mode)},
          {"variant", wire(cfg.variant)},
          {"backend", to_json(cfg.backend)},
          {"n_frames", cfg.n_frames},
          {"fallback_stage1", wire(cfg.fallback_stage1)},
          {"fallback_stage2", wire(cfg.fallback_stage2)},
          {"workers", cfg.workers},
          {"frame_base_url", cfg.frame_base_url},
          {"stage1_shots_per_class", cfg.stage1_shots_per_class},
          {"stage2_shots_per_class", cfg.stage2_shots_per_class}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  cfg.run_id = j.at("run_id").get<std::string>();
  cfg.stage_mode = parse_stage_mode(j.value("stage_mode", std::string("independent"))).value_or(StageMode::Independent);
  cfg.variant = parse_variant(j.value("variant", std::string("baseline"))).value_or(PromptVariant::Baseline);
  if (j.contains("backend")) cfg.backend = backend_config_from_json(j.at("backend"));
  cfg.n_frames = j.value("n_frames", cfg.n_frames);
  cfg.fallback_stage1 = parse_stage1(j.value("fallback_stage1", std::string("Benign"))).value_or(Stage1Label::Benign);
  cfg.fallback_stage2 = parse_stage2(j.value("fallback_stage2", std::string("Benign"))).value_or(Stage2Label::BenignBehavior);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.frame_base_url = j.value("frame_base_url", cfg.frame_base_url);
  cfg.stage1_shots_per_class = j.value("stage1_shots_per_class", cfg.stage1_shots_per_class);
  cfg.stage2_shots_per_class = j.value("stage2_shots_per_class", cfg.stage2_shots_per_class);
  return cfg;
}

// ---------------------------------------------------------------------------

std::vector<ExemplarChoice> select_exemplars(std::span<const IngestedSegment> pool, Stage stage,
                                             int per_class) {
  std::vector<Label> classes;
  if (stage == Stage::One) {
    for (auto l : kStage1Labels) classes.emplace_back(l);
  } else {
    for (auto l : kStage2Labels) classes.emplace_back(l);
  }
  std::vector<const IngestedSegment*> labeled;
  for (const auto& s : pool) {
    if (s.segment.truth) labeled.push_back(&s);
  }
  std::sort(labeled.begin(), labeled.end(), [](const IngestedSegment* a, const IngestedSegment* b) {
    return std::tie(a->segment.clip_id, a->segment.index) < std::tie(b->segment.clip_id, b->segment.index);
  });

  std::vector<ExemplarChoice> out;
  std::set<std::string> used_clips;
  for (const auto& cls : classes) {
    std::set<Subcategory> used_subs;
    int taken = 0;
    for (bool distinct : {true, false}) {
      for (const auto* s : labeled) {
        if (taken == per_class) break;
        const auto& truth = *s->segment.truth;
        if (!(project(truth.label, stage) == cls)) continue;
        if (used_clips.count(s->segment.clip_id)) continue;
        if (distinct && used_subs.count(truth.subcategory)) continue;
        used_clips.insert(s->segment.clip_id);
        used_subs.insert(truth.subcategory);
        out.push_back({*s, cls, std::string(reason_phrase(truth.subcategory))});
        ++taken;
      }
    }
    if (taken < per_class) {
      throw Error(ErrorCode::MissingExemplars, "not enough labeled clips for few-shot class " +
                                                   std::string(cls.wire()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SegmentClassifier::SegmentClassifier(Gateway& gateway, const FrameStore& store, ClassifyOptions options)
    : gateway_(gateway), store_(store), options_(std::move(options)) {
  for (Stage stage : {Stage::One, Stage::Two}) {
    const auto& chosen = stage == Stage::One ? options_.stage1_exemplars : options_.stage2_exemplars;
    std::vector<Exemplar> exemplars;
    StagePlan plan;
    if (options_.variant == PromptVariant::FewShot) {
      for (const auto& c : chosen) {
        exemplars.push_back({c.segment.frames, c.gold, c.reason});
        plan.exemplar_urls.push_back(host_frames(store_, c.segment.frames, options_.frame_base_url));
      }
      // A single-stage run only carries exemplars for the stage it executes.
      if (exemplars.empty()) continue;
    }
    plan.bundle = build_prompt(stage, options_.variant, options_.n_frames, exemplars);
    plan.schema = expected_schema(stage);
    plans_[stage == Stage::One ? 0 : 1] = std::move(plan);
  }
}

StageResult SegmentClassifier::classify(const IngestedSegment& segment, Stage stage) {
  const StagePlan& plan = plans_[stage == Stage::One ? 0 : 1];
  if (plan.bundle.frame_slots == 0) {
    throw Error(ErrorCode::MissingExemplars, "few-shot " + std::string(wire(stage)) + " has no exemplars");
  }
  if (static_cast<int>(segment.frames.frames.size()) != options_.n_frames) {
    throw Error(ErrorCode::InvalidFrameCount, segment.segment.segment_id + " has " +
                                                  std::to_string(segment.frames.frames.size()) +
                                                  " frames, expected " + std::to_string(options_.n_frames));
  }
  InferenceRequest req;
  req.request_id = options_.run_id + "/" + segment.segment.segment_id + "/" + std::string(wire(stage));
  req.bundle = plan.bundle;
  req.frame_urls = host_frames(store_, segment.frames, options_.frame_base_url);
  req.exemplar_urls = plan.exemplar_urls;
  req.segment = {segment.segment.segment_id, segment.clip_hash, segment.segment.start, segment.segment.length};
  req.created_at = gateway_.clock().now();

  StageResult result;
  RawResponse raw = gateway_.infer(req);
  result.model_calls = 1;
  result.latency = raw.latency;
  Verdict v = parse(raw.body, plan.schema);
  if (v.parse_status == ParseStatus::Failed) {
    req.request_id += "/repair";
    req.bundle.user_text += "\n\n" + format_reminder(stage);
    raw = gateway_.infer(req);
    ++result.model_calls;
    result.latency += raw.latency;
    v = parse(raw.body, plan.schema);
    if (v.parse_status == ParseStatus::Failed) {
      v.origin = VerdictOrigin::Fallback;
      v.label = stage == Stage::One ? Label(options_.fallback_stage1) : Label(options_.fallback_stage2);
      v.reason.clear();
    }
  }
  v.segment_id = segment.segment.segment_id;
  v.stage = stage;
  v.raw = RawRef{raw.request_id, raw.attempt, raw.latency};
  result.verdict = std::move(v);
  return result;
}

SegmentResult SegmentClassifier::classify(const IngestedSegment& segment, StageMode mode) {
  SegmentResult out;
  out.segment = segment;
  auto absorb = [&](StageResult r) {
    out.model_calls += r.model_calls;
    out.latency += r.latency;
    return std::move(r.verdict);
  };
  if (runs_stage(mode, Stage::One)) out.stage1 = absorb(classify(segment, Stage::One));
  if (mode == StageMode::Cascade && out.stage1->label == Label(Stage1Label::Benign)) {
    Verdict v;
    v.segment_id = segment.segment.segment_id;
    v.stage = Stage::Two;
    v.label = Label(Stage2Label::BenignBehavior);
    v.parse_status = ParseStatus::Clean;
    v.origin = VerdictOrigin::CascadeDefault;
    out.stage2 = std::move(v);
  } else if (runs_stage(mode, Stage::Two)) {
    out.stage2 = absorb(classify(segment, Stage::Two));
  }
  return out;
}

// ---------------------------------------------------------------------------

json to_json(const SegmentResult& r) {
  json j = {{"segment_id", r.segment.segment.segment_id},
            {"clip_id", r.segment.segment.clip_id},
            {"index", r.segment.segment.index}};
  j["stage1"] = r.stage1 ? to_json(*r.stage1) : json(nullptr);
  j["stage2"] = r.stage2 ? to_json(*r.stage2) : json(nullptr);
  return j;
}

namespace {

json counts_json(const ParseCounts& c) {
  return {{"clean", c.clean}, {"salvaged", c.salvaged}, {"failed", c.failed}};
}

void tally(ParseCounts& c, const std::optional<Verdict>& v) {
  if (!v || v->origin == VerdictOrigin::CascadeDefault) return;
  switch (v->parse_status) {
    case ParseStatus::Clean: ++c.clean; break;
    case ParseStatus::Salvaged: ++c.salvaged; break;
    case ParseStatus::Failed: ++c.failed; break;
  }
}

bool segment_order(const IngestedSegment& a, const IngestedSegment& b) {
  return std::tie(a.segment.clip_id, a.segment.index) < std::tie(b.segment.clip_id, b.segment.index);
}

SegmentResult result_from_json(const json& j, const std::map<std::string, IngestedSegment>& by_id) {
  SegmentResult r;
  const auto id = j.at("segment_id").get<std::string>();
  auto it = by_id.find(id);
  if (it == by_id.end()) throw Error(ErrorCode::InvalidArgument, "journal names unknown segment " + id);
  r.segment = it->second;
  if (!j.at("stage1").is_null()) r.stage1 = verdict_from_json(j.at("stage1"), Stage::One);
  if (!j.at("stage2").is_null()) r.stage2 = verdict_from_json(j.at("stage2"), Stage::Two);
  for (auto* v : {&r.stage1, &r.stage2}) {
    if (*v) (*v)->segment_id = id;
  }
  r.model_calls = j.value("model_calls", 0);
  r.latency = j.value("latency", 0.0);
  return r;
}

std::vector<std::string> segment_ids(const std::vector<ExemplarChoice>& ex) {
  std::vector<std::string> ids;
  for (const auto& e : ex) ids.push_back(e.segment.segment.segment_id);
  return ids;
}

}  // namespace

json summary_json(const RunResult& result) {
  json j = {{"run_id", result.run_id},
            {"stage_mode", wire(result.config.stage_mode)},
            {"variant", wire(result.config.variant)},
            {"backend", wire(result.config.backend.kind)},
            {"model", result.config.backend.model_name},
            {"segments", result.segments.size()},
            {"exemplar_clips", result.exemplar_clips},
            {"stage1_parse", counts_json(result.stage1_counts)},
            {"stage2_parse", counts_json(result.stage2_counts)},
            {"model_calls", result.model_calls},
            {"mean_segment_latency", result.mean_segment_latency},
            {"max_segment_latency", result.max_segment_latency},
            {"wall_seconds", result.wall_seconds}};
  return j;
}

std::vector<IngestedSegment> load_run_segments(const fs::path& run_dir) {
  const json j = json::parse(read_text(run_dir / "run.json"));
  return j.at("segments").get<std::vector<IngestedSegment>>();
}

RunConfig load_run_config(const fs::path& run_dir) {
  const json j = json::parse(read_text(run_dir / "run.json"));
  return run_config_from_json(j.at("config"));
}

std::vector<SegmentResult> load_verdicts(const fs::path& run_dir) {
  std::map<std::string, IngestedSegment> by_id;
  for (auto& s : load_run_segments(run_dir)) by_id.emplace(s.segment.segment_id, std::move(s));
  std::vector<SegmentResult> out;
  for_each_line(run_dir / "verdicts.jsonl", [&](std::string_view line, std::size_t) {
    out.push_back(result_from_json(json::parse(line), by_id));
  });
  return out;
}

// ---------------------------------------------------------------------------

Classifier::Classifier(fs::path runs_root, const FrameStore& store, Clock& clock)
    : runs_root_(std::move(runs_root)), store_(store), clock_(clock), factory_(make_backend) {}

void Classifier::set_backend_factory(BackendFactory factory) { factory_ = std::move(factory); }

fs::path Classifier::run_dir(const std::string& run_id) const { return runs_root_ / run_id; }

RunResult Classifier::run(std::span<const IngestedSegment> segments, const RunConfig& cfg) {
  cfg.validate();
  const fs::path dir = run_dir(cfg.run_id);
  if (fs::exists(dir / "run.json")) throw Error(ErrorCode::RunExists, "run already exists: " + cfg.run_id);

  std::vector<IngestedSegment> all(segments.begin(), segments.end());
  std::sort(all.begin(), all.end(), segment_order);

  std::vector<ExemplarChoice> ex1, ex2;
  std::set<std::string> withheld;
  if (cfg.variant == PromptVariant::FewShot) {
    if (runs_stage(cfg.stage_mode, Stage::One)) ex1 = select_exemplars(all, Stage::One, cfg.stage1_shots_per_class);
    if (runs_stage(cfg.stage_mode, Stage::Two)) ex2 = select_exemplars(all, Stage::Two, cfg.stage2_shots_per_class);
    for (const auto* ex : {&ex1, &ex2}) {
      for (const auto& e : *ex) withheld.insert(e.segment.segment.clip_id);
    }
  }
  std::vector<IngestedSegment> evaluated;
  for (auto& s : all) {
    if (!withheld.count(s.segment.clip_id)) evaluated.push_back(s);
  }
  std::vector<std::string> exemplar_clips(withheld.begin(), withheld.end());

  fs::create_directories(dir);
  json exemplars_json = json::array();
  for (const auto* ex : {&ex1, &ex2}) {
    for (const auto& e : *ex) exemplars_json.push_back(e.segment);
  }
  const json run_json = {{"config", to_json(cfg)},
                         {"exemplars", {{"stage1", segment_ids(ex1)}, {"stage2", segment_ids(ex2)}}},
                         {"exemplar_segments", exemplars_json},
                         {"exemplar_clips", exemplar_clips},
                         {"segments", evaluated}};
  write_atomic(dir / "run.json", run_json.dump(1));
  return execute(dir, cfg, evaluated, ex1, ex2, exemplar_clips);
}

RunResult Classifier::resume(const std::string& run_id) {
  const fs::path dir = run_dir(run_id);
  if (run_id.empty() || !fs::exists(dir / "run.json")) {
    throw Error(ErrorCode::UnknownRun, "no such run: " + run_id);
  }
  const json run_json = json::parse(read_text(dir / "run.json"));
  const RunConfig cfg = run_config_from_json(run_json.at("config"));
  const auto evaluated = run_json.at("segments").get<std::vector<IngestedSegment>>();
  std::map<std::string, IngestedSegment> exemplar_pool;
  for (const auto& s : run_json.at("exemplar_segments")) {
    auto seg = s.get<IngestedSegment>();
    exemplar_pool.emplace(seg.segment.segment_id, std::move(seg));
  }
  auto rebuild = [&](const json& ids, Stage stage) {
    std::vector<ExemplarChoice> out;
    for (const auto& id : ids) {
      const auto& seg = exemplar_pool.at(id.get<std::string>());
      const auto& truth = *seg.segment.truth;
      out.push_back({seg, project(truth.label, stage), std::string(reason_phrase(truth.subcategory))});
    }
    return out;
  };
  const auto ex1 = rebuild(run_json.at("exemplars").at("stage1"), Stage::One);
  const auto ex2 = rebuild(run_json.at("exemplars").at("stage2"), Stage::Two);
  return execute(dir, cfg, evaluated, ex1, ex2, run_json.at("exemplar_clips").get<std::vector<std::string>>());
}

RunResult Classifier::execute(const fs::path& dir, const RunConfig& cfg,
                              const std::vector<IngestedSegment>& evaluated,
                              const std::vector<ExemplarChoice>& ex1, const std::vector<ExemplarChoice>& ex2,
                              const std::vector<std::string>& exemplar_clips) {
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, IngestedSegment> by_id;
  for (const auto& s : evaluated) by_id.emplace(s.segment.segment_id, s);

  // Recover finished segments. A torn final line is dropped from the file so
  // later appends start on a fresh line.
  const fs::path journal_path = dir / "progress.jsonl";
  std::map<std::string, SegmentResult> done;
  if (fs::exists(journal_path)) {
    std::string torn;
    std::string intact;
    for_each_line(
        journal_path,
        [&](std::string_view line, std::size_t) {
          auto r = result_from_json(json::parse(line), by_id);
          done.insert_or_assign(r.segment.segment.segment_id, std::move(r));
          intact.append(line).push_back('\n');
        },
        &torn);
    if (!torn.empty()) write_atomic(journal_path, intact);
  }

  std::vector<const IngestedSegment*> todo;
  for (const auto& s : evaluated) {
    if (!done.count(s.segment.segment_id)) todo.push_back(&s);
  }

  std::vector<SegmentResult> fresh(todo.size());
  std::size_t calls = 0;
  std::exception_ptr failure;
  if (!todo.empty()) {
    auto wire_log = std::make_shared<AppendLog>(dir / "wire.log", false);
    Gateway gateway(cfg.backend, factory_(cfg.backend, clock_), clock_, wire_log);
    ClassifyOptions opts;
    opts.run_id = cfg.run_id;
    opts.variant = cfg.variant;
    opts.n_frames = cfg.n_frames;
    opts.fallback_stage1 = cfg.fallback_stage1;
    opts.fallback_stage2 = cfg.fallback_stage2;
    opts.frame_base_url = cfg.frame_base_url;
    opts.stage1_exemplars = ex1;
    opts.stage2_exemplars = ex2;
    SegmentClassifier classifier(gateway, store_, std::move(opts));
    AppendLog journal(journal_path, true);
    std::mutex calls_mu;
    try {
      parallel_for(todo.size(), cfg.workers, [&](std::size_t i) {
        SegmentResult r = classifier.classify(*todo[i], cfg.stage_mode);
        json line = to_json(r);
        line["model_calls"] = r.model_calls;
        line["latency"] = r.latency;
        journal.append(line.dump());
        std::lock_guard lock(calls_mu);
        calls += r.model_calls;
        fresh[i] = std::move(r);
      });
    } catch (...) {
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  RunResult result;
  result.run_id = cfg.run_id;
  result.config = cfg;
  result.exemplar_clips = exemplar_clips;
  result.model_calls = calls;
  for (auto& [id, r] : done) result.segments.push_back(std::move(r));
  for (auto& r : fresh) result.segments.push_back(std::move(r));
  std::sort(result.segments.begin(), result.segments.end(),
            [](const SegmentResult& a, const SegmentResult& b) { return segment_order(a.segment, b.segment); });

  std::string verdict_lines;
  double latency_sum = 0.0;
  std::size_t latency_n = 0;
  for (const auto& r : result.segments) {
    tally(result.stage1_counts, r.stage1);
    tally(result.stage2_counts, r.stage2);
    if (r.model_calls > 0) {
      latency_sum += r.latency;
      ++latency_n;
      result.max_segment_latency = std::max(result.max_segment_latency, r.latency);
    }
    verdict_lines += to_json(r).dump();
    verdict_lines += '\n';
  }
  result.mean_segment_latency = latency_n ? latency_sum / static_cast<double>(latency_n) : 0.0;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_atomic(dir / "verdicts.jsonl", verdict_lines);
  write_atomic(dir / "summary.json", summary_json(result).dump(2) + "\n");
  return result;
}

}  // namespace vrmod
