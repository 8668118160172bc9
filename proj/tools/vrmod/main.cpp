// vrmod: command line front end for corpus generation, ingestion,
// classification runs, evaluation, fine-tune export and the service.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"

#include "vrmod/error.hpp"
#include "vrmod/evalkit.hpp"
#include "vrmod/finetune.hpp"
#include "vrmod/io.hpp"
#include "vrmod/media.hpp"
#include "vrmod/pipeline.hpp"
#include "vrmod/service.hpp"
#include "vrmod/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vrmod;

namespace {

// The mock answers locally, so only an explicit --rpm throttles it.
constexpr int kMockRequestsPerMinute = 60000;

struct BackendFlags {
  std::string backend = "mock";
  std::string model = BackendConfig{}.model_name;
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  int rpm = 60;
  CLI::Option* rpm_option = nullptr;
  int max_inflight = 4;
  double timeout = 60.0;
  int max_retries = 3;
  std::string sidecars;

  void attach(CLI::App* cmd) {
    cmd->add_option("--backend", backend, "remote or mock")->check(CLI::IsMember({"remote", "mock"}));
    cmd->add_option("--model", model, "Model name sent to the remote backend");
    cmd->add_option("--endpoint", endpoint, "Chat completions URL");
    cmd->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
    rpm_option = cmd->add_option("--rpm", rpm, "Requests per minute (mock default: 60000)");
    cmd->add_option("--max-inflight", max_inflight, "Concurrent requests");
    cmd->add_option("--timeout", timeout, "Per-request timeout in seconds");
    cmd->add_option("--max-retries", max_retries, "Retries on timeouts, 429 and 5xx");
    cmd->add_option("--sidecars", sidecars, "Trajectory sidecar directory for the mock backend");
  }

  BackendConfig config(const fs::path& default_sidecars) const {
    BackendConfig cfg;
    cfg.kind = *parse_backend_kind(backend);
    cfg.model_name = model;
    cfg.endpoint_url = endpoint;
    cfg.api_key_ref = api_key_env;
    cfg.requests_per_minute = rpm;
    if (cfg.kind == BackendKind::MockOracle && rpm_option && rpm_option->count() == 0) {
      cfg.requests_per_minute = kMockRequestsPerMinute;
    }
    cfg.max_inflight = max_inflight;
    cfg.timeout = timeout;
    cfg.max_retries = max_retries;
    cfg.sidecar_dir = sidecars.empty() ? default_sidecars : fs::path(sidecars);
    return cfg;
  }
};

std::string backend_label(const RunConfig& cfg) {
  return cfg.backend.kind == BackendKind::MockOracle ? std::string("mock-oracle") : cfg.backend.model_name;
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

// Ingests a manifest into the store unless segments.jsonl is already there.
std::vector<IngestedSegment> ensure_ingested(const fs::path& manifest, const fs::path& store_dir, int frames,
                                             int workers) {
  const fs::path segments_path = store_dir / "segments.jsonl";
  if (fs::exists(segments_path)) return load_segments(segments_path);
  if (manifest.empty()) throw Error(ErrorCode::InvalidArgument, "store has no segments; pass --manifest");
  const auto clips = load_manifest(manifest);
  FrameStore store(store_dir);
  // Non-native media goes through ffmpeg when it is installed.
  std::unique_ptr<FrameDecoder> external;
  try {
    external = std::make_unique<ExternalDecoder>(ExternalDecoder::ffmpeg_template());
  } catch (const Error&) {
  }
  RoutingDecoder decoder(std::move(external));
  IngestOptions opts;
  opts.sampling.frames = frames;
  opts.workers = workers;
  auto result = ingest(clips, decoder, store, opts);
  save_segments(segments_path, result.segments);
  json report = to_json(result.validation);
  json discarded = json::array();
  for (const auto& d : result.discarded) discarded.push_back({{"clip_id", d.clip_id}, {"reason", d.reason}});
  report["discarded"] = discarded;
  report["segments_ingested"] = result.segments.size();
  write_atomic(store_dir / "ingest.json", report.dump(2) + "\n");
  std::cerr << "ingested " << result.segments.size() << " segments from " << clips.size() << " clips ("
            << result.discarded.size() << " discarded, " << result.validation.excluded.size() << " excluded)\n";
  return result.segments;
}

int run_serve(const std::string& config_path) {
  // Block termination signals in every thread; the main thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Service service(ServiceConfig::load(config_path));
  const int port = service.start();
  std::cout << "vrmod listening on " << service.config().bind_address << ":" << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "shutting down\n";
  service.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VR harassment moderation pipeline"};
  app.require_subcommand(1);

  // gen-fixtures
  synth::CorpusOptions corpus;
  std::string corpus_out = "corpus";
  auto* gen = app.add_subcommand("gen-fixtures", "Generate a labeled synthetic clip corpus");
  gen->add_option("--count-per-class", corpus.count_per_class, "Clips per subcategory")->check(CLI::PositiveNumber);
  gen->add_option("--seed", corpus.seed, "Random seed");
  gen->add_option("--out", corpus_out, "Output directory");
  gen->add_option("--min-duration", corpus.min_duration, "Shortest clip in seconds");
  gen->add_option("--max-duration", corpus.max_duration, "Longest clip in seconds");
  gen->add_option("--workers", corpus.workers, "Parallel generators")->check(CLI::PositiveNumber);

  // ingest
  std::string manifest, store_dir = "store";
  int frames = kDefaultFramesPerSegment, workers = 1;
  auto* ing = app.add_subcommand("ingest", "Segment clips and sample frames into a store");
  ing->add_option("--manifest", manifest, "Clip manifest (JSON lines)")->required();
  ing->add_option("--store", store_dir, "Frame store directory");
  ing->add_option("--frames-per-segment", frames, "Frames sampled per 10 s segment");
  ing->add_option("--workers", workers, "Parallel clips")->check(CLI::PositiveNumber);

  // classify
  std::string run_id, runs_dir = "runs", stage_mode = "independent", variant = "baseline";
  std::string frame_base_url = RunConfig{}.frame_base_url;
  BackendFlags backend;
  auto* cls = app.add_subcommand("classify", "Run the two-stage classifier over ingested segments");
  cls->add_option("--run-id", run_id, "Run identifier")->required();
  cls->add_option("--manifest", manifest, "Clip manifest; ingested on first use");
  cls->add_option("--store", store_dir, "Frame store directory");
  cls->add_option("--runs", runs_dir, "Directory holding run outputs");
  cls->add_option("--stage-mode", stage_mode, "stage1-only, stage2-only, independent or cascade")
      ->check(CLI::IsMember({"stage1-only", "stage2-only", "independent", "cascade"}));
  cls->add_option("--variant", variant, "baseline, context, cot, fewshot or all");
  cls->add_option("--frames-per-segment", frames, "Frames per segment");
  cls->add_option("--workers", workers, "Concurrent segments")->check(CLI::PositiveNumber);
  cls->add_option("--frame-base-url", frame_base_url, "Public URL prefix serving /frames/<hash>.jpg");
  backend.attach(cls);

  // resume
  auto* res = app.add_subcommand("resume", "Finish an interrupted run");
  res->add_option("--run-id", run_id, "Run identifier")->required();
  res->add_option("--runs", runs_dir, "Directory holding run outputs");
  res->add_option("--store", store_dir, "Frame store directory");

  // evaluate
  std::vector<std::string> run_ids;
  std::string truth_manifest, report_out = "report";
  auto* ev = app.add_subcommand("evaluate", "Score runs and render result tables");
  ev->add_option("--run-id", run_ids, "Run identifier (repeatable)")->required();
  ev->add_option("--runs", runs_dir, "Directory holding run outputs");
  ev->add_option("--truth", truth_manifest, "Manifest with ground truth; defaults to the run's own labels");
  ev->add_option("--out", report_out, "Output prefix; writes <prefix>.json and <prefix>.txt");

  // export-finetune
  std::size_t k = 200;
  std::uint64_t seed = 7;
  std::string stage = "both", granularity = "clip", sft_out = "finetune/sft.jsonl", service_store;
  auto* ft = app.add_subcommand("export-finetune", "Export a stratified chat-format fine-tuning set");
  ft->add_option("--store", store_dir, "Frame store with ingested, labeled segments");
  ft->add_option("--manifest", manifest, "Clip manifest; ingested on first use");
  ft->add_option("--k", k, "Sample size (clips or segments)");
  ft->add_option("--seed", seed, "Sampling seed");
  ft->add_option("--stage", stage, "stage1, stage2 or both")->check(CLI::IsMember({"stage1", "stage2", "both"}));
  ft->add_option("--variant", variant, "Prompt variant used for the records");
  ft->add_option("--granularity", granularity, "Sample whole clips or single segments")
      ->check(CLI::IsMember({"clip", "segment"}));
  ft->add_option("--frame-base-url", frame_base_url, "Public URL prefix serving /frames/<hash>.jpg");
  ft->add_option("--frames-per-segment", frames, "Frames per segment");
  ft->add_option("--service-store", service_store, "Also export moderator overrides from a service store");
  ft->add_option("--out", sft_out, "Output JSON-lines file");

  // serve
  std::string config_path;
  auto* srv = app.add_subcommand("serve", "Run the moderation HTTP service");
  srv->add_option("--config", config_path, "key = value configuration file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto clips = synth::generate_corpus(corpus_out, corpus);
      std::cerr << "wrote " << clips.size() << " clips to " << corpus_out << "\n";
      print_json({{"clips", clips.size()}, {"manifest", (fs::path(corpus_out) / "manifest.jsonl").string()}});
    } else if (*ing) {
      if (fs::exists(fs::path(store_dir) / "segments.jsonl")) fs::remove(fs::path(store_dir) / "segments.jsonl");
      const auto segments = ensure_ingested(manifest, store_dir, frames, workers);
      print_json(json::parse(read_text(fs::path(store_dir) / "ingest.json")));
    } else if (*cls) {
      const auto segments = ensure_ingested(manifest, store_dir, frames, workers);
      const fs::path default_sidecars = manifest.empty() ? fs::path("sidecars") : fs::path(manifest).parent_path() / "sidecars";
      std::vector<PromptVariant> variants;
      if (variant == "all") {
        variants.assign(kPromptVariants.begin(), kPromptVariants.end());
      } else {
        auto v = parse_variant(variant);
        if (!v) throw Error(ErrorCode::InvalidArgument, "unknown variant: " + variant);
        variants.push_back(*v);
      }
      FrameStore store(store_dir);
      Classifier classifier(runs_dir, store);
      json out = json::array();
      for (auto v : variants) {
        RunConfig cfg;
        cfg.run_id = variants.size() > 1 ? run_id + "-" + std::string(wire(v)) : run_id;
        cfg.stage_mode = *parse_stage_mode(stage_mode);
        cfg.variant = v;
        cfg.backend = backend.config(default_sidecars);
        cfg.n_frames = frames;
        cfg.workers = workers;
        cfg.frame_base_url = frame_base_url;
        std::cerr << "run " << cfg.run_id << ": " << segments.size() << " segments, " << wire(cfg.stage_mode) << ", "
                  << wire(v) << "\n";
        out.push_back(summary_json(classifier.run(segments, cfg)));
      }
      print_json(out.size() == 1 ? out[0] : out);
    } else if (*res) {
      FrameStore store(store_dir);
      Classifier classifier(runs_dir, store);
      print_json(summary_json(classifier.resume(run_id)));
    } else if (*ev) {
      std::map<std::string, ClipTruth> truth;
      if (!truth_manifest.empty()) {
        for (const auto& c : load_manifest(truth_manifest)) {
          if (c.truth) truth.emplace(c.clip_id, *c.truth);
        }
      }
      std::vector<EvalReport> by_stage[2];
      json reports = json::array();
      for (const auto& id : run_ids) {
        const fs::path dir = fs::path(runs_dir) / id;
        if (!fs::exists(dir / "verdicts.jsonl")) throw Error(ErrorCode::UnknownRun, "no finished run " + id);
        const auto cfg = load_run_config(dir);
        const auto results = load_verdicts(dir);
        for (Stage s : {Stage::One, Stage::Two}) {
          if (!runs_stage(cfg.stage_mode, s)) continue;
          auto e = evaluate_run(results, s, cfg.variant, backend_label(cfg), truth_manifest.empty() ? nullptr : &truth);
          json r = to_json(e.report);
          r["run_id"] = id;
          r["confusion"] = to_json(e.matrix);
          r["skipped_unlabeled"] = e.skipped_unlabeled;
          reports.push_back(r);
          by_stage[s == Stage::One ? 0 : 1].push_back(std::move(e.report));
        }
      }
      std::string text;
      if (!by_stage[0].empty()) text += "Binary classification (stage 1)\n" + render_table(by_stage[0]);
      if (!by_stage[1].empty()) {
        if (!text.empty()) text += "\n";
        text += "Multi-class classification (stage 2)\n" + render_table(by_stage[1]);
      }
      fs::path prefix(report_out);
      if (prefix.extension() == ".json" || prefix.extension() == ".txt") prefix.replace_extension();
      if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
      write_atomic(prefix.string() + ".json", json({{"reports", reports}}).dump(2) + "\n");
      write_atomic(prefix.string() + ".txt", text);
      std::cout << text;
    } else if (*ft) {
      const auto segments = ensure_ingested(manifest, store_dir, frames, 1);
      std::vector<IngestedSegment> labeled;
      for (const auto& s : segments) {
        if (s.segment.truth) labeled.push_back(s);
      }
      const auto picked = granularity == "clip" ? sample_by_clip(labeled, k, seed) : sample_by_segment(labeled, k, seed);
      const auto items = items_from_truth(picked);
      FrameStore store(store_dir);
      ExportOptions opts;
      if (stage != "both") opts.stages = {*parse_stage(stage)};
      auto v = parse_variant(variant);
      if (!v) throw Error(ErrorCode::InvalidArgument, "unknown variant: " + variant);
      opts.variant = *v;
      opts.n_frames = frames;
      opts.frame_base_url = frame_base_url;
      if (opts.variant == PromptVariant::FewShot) {
        for (Stage s : opts.stages) {
          auto& dst = s == Stage::One ? opts.stage1_exemplars : opts.stage2_exemplars;
          for (auto& c : select_exemplars(labeled, s, s == Stage::One ? 2 : 1)) {
            dst.push_back({c.segment.frames, c.gold, c.reason});
          }
        }
      }
      json j = to_json(export_sft(items, store, opts, sft_out));
      j["segments"] = picked.size();
      j["granularity"] = granularity;
      j["path"] = sft_out;
      if (!service_store.empty()) {
        // Moderator overrides reference frames held by the service store.
        ModStore svc(service_store);
        const fs::path override_out = fs::path(sft_out).replace_extension(".overrides.jsonl");
        j["overrides"] = to_json(export_sft(svc.override_items(), svc.frames(), opts, override_out));
        j["overrides_path"] = override_out.string();
      }
      print_json(j);
    } else if (*srv) {
      return run_serve(config_path);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
