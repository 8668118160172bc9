#include "vrmod/media.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <set>
#include <sstream>

#include "vrmod/clip_format.hpp"
#include "vrmod/error.hpp"
#include "vrmod/hash.hpp"
#include "vrmod/image.hpp"
#include "vrmod/io.hpp"
#include "vrmod/parallel.hpp"

namespace vrmod {

namespace fs = std::filesystem;
using nlohmann::json;

std::string make_segment_id(const std::string& clip_id, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", index);
  return clip_id + "_seg" + buf;
}

std::vector<Segment> segment_clip(const ClipRecord& clip) {
  std::error_code ec;
  if (!fs::is_regular_file(clip.path, ec)) {
    throw Error(ErrorCode::UnreadableMedia, "clip file missing: " + clip.path.string());
  }
  if (!(clip.duration > 0) || !std::isfinite(clip.duration)) {
    throw Error(ErrorCode::UnreadableMedia, "clip " + clip.clip_id + " has no usable duration");
  }
  const auto count = static_cast<int>(std::floor(clip.duration / kSegmentSeconds));
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    Segment s;
    s.segment_id = make_segment_id(clip.clip_id, i);
    s.clip_id = clip.clip_id;
    s.index = i;
    s.start = i * kSegmentSeconds;
    s.length = kSegmentSeconds;
    s.truth = clip.truth;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t frame_count, int n) {
  if (n < 2) throw Error(ErrorCode::InvalidFrameCount, "at least two frames must be sampled");
  if (frame_count < static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::TooFewFrames, "segment has " + std::to_string(frame_count) +
                                             " frames, need " + std::to_string(n));
  }
  const std::uint64_t span = frame_count - 1;
  const std::uint64_t den = static_cast<std::uint64_t>(n - 1);
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(n); ++i) {
    // floor(i*span/den + 1/2) in exact integer arithmetic (ties round up).
    out.push_back(static_cast<std::size_t>((2 * i * span + den) / (2 * den)));
  }
  return out;
}

// ---------------------------------------------------------------------------

FrameStore::FrameStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "frames");
}

std::string FrameStore::relative_location(const std::string& hash) {
  return "frames/" + hash.substr(0, 2) + "/" + hash + ".jpg";
}

fs::path FrameStore::path_for(const std::string& hash) const {
  return root_ / relative_location(hash);
}

std::string FrameStore::put(std::span<const std::uint8_t> jpeg) {
  std::string hash = sha256_hex(jpeg);
  write_if_absent(path_for(hash),
                  std::string_view(reinterpret_cast<const char*>(jpeg.data()), jpeg.size()));
  return hash;
}

bool FrameStore::contains(const std::string& hash) const {
  if (!is_sha256_hex(hash)) return false;
  std::error_code ec;
  return fs::is_regular_file(path_for(hash), ec);
}

std::vector<std::uint8_t> FrameStore::get(const std::string& hash) const {
  if (!contains(hash)) throw Error(ErrorCode::MissingFrame, "frame not in store: " + hash);
  return read_bytes(path_for(hash));
}

// ---------------------------------------------------------------------------

namespace {

std::pair<std::size_t, std::size_t> frame_range(double start, double length, double fps,
                                                std::size_t available) {
  const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(start * fps - 1e-9)));
  const auto last = static_cast<std::size_t>(std::max(0.0, std::ceil((start + length) * fps - 1e-9)));
  return {std::min(first, available), std::min(last, available)};
}

}  // namespace

std::vector<std::vector<std::uint8_t>> NativeClipDecoder::decode_segment(const ClipRecord& clip,
                                                                         const Segment& segment) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_bytes(clip.path);
  } catch (const Error&) {
    throw Error(ErrorCode::UnreadableMedia, "cannot read clip " + clip.path.string());
  }
  const NativeClip nc(std::move(bytes));
  const auto [first, last] =
      frame_range(segment.start, segment.length, nc.info().fps, nc.info().frame_count);
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(last - first);
  for (std::size_t i = first; i < last; ++i) {
    auto f = nc.frame(i);
    out.emplace_back(f.begin(), f.end());
  }
  return out;
}

namespace {

std::optional<std::string> resolve_executable(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return name;
    return std::nullopt;
  }
  const char* path_env = std::getenv("PATH");
  std::stringstream ss(path_env ? path_env : "/usr/bin:/bin");
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    const std::string candidate = (dir.empty() ? std::string(".") : dir) + "/" + name;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
  }
  return std::nullopt;
}

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  return buf;
}

}  // namespace

ExternalDecoder::ExternalDecoder(std::vector<std::string> argv_template)
    : argv_(std::move(argv_template)) {
  if (argv_.empty()) throw Error(ErrorCode::DecoderUnavailable, "empty decoder command");
  auto resolved = resolve_executable(argv_[0]);
  if (!resolved) {
    throw Error(ErrorCode::DecoderUnavailable, "video decoder '" + argv_[0] + "' not found");
  }
  argv_[0] = *resolved;
}

std::vector<std::string> ExternalDecoder::ffmpeg_template() {
  return {"ffmpeg", "-v",    "error", "-ss",   "{start}", "-t",     "{length}", "-i",
          "{input}", "-f",   "image2pipe", "-c:v", "mjpeg", "-q:v", "2",  "-"};
}

std::vector<std::vector<std::uint8_t>> ExternalDecoder::decode_segment(const ClipRecord& clip,
                                                                       const Segment& segment) {
  std::vector<std::string> args;
  args.reserve(argv_.size());
  for (const auto& a : argv_) {
    if (a == "{input}") args.push_back(clip.path.string());
    else if (a == "{start}") args.push_back(format_seconds(segment.start));
    else if (a == "{length}") args.push_back(format_seconds(segment.length));
    else args.push_back(a);
  }
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  cargs.push_back(nullptr);

  int pipefd[2];
  if (::pipe(pipefd) != 0) throw Error(ErrorCode::DecodeFailure, "pipe() failed");
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    throw Error(ErrorCode::DecodeFailure, "fork() failed");
  }
  if (pid == 0) {
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    ::execv(cargs[0], cargs.data());
    ::_exit(127);
  }
  ::close(pipefd[1]);
  std::vector<std::uint8_t> stream;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const ssize_t n = ::read(pipefd[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    stream.insert(stream.end(), buf, buf + n);
  }
  ::close(pipefd[0]);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::DecodeFailure,
                "decoder exited abnormally for " + clip.clip_id + " segment " +
                    std::to_string(segment.index));
  }
  return split_jpeg_stream(stream);
}

std::vector<std::vector<std::uint8_t>> split_jpeg_stream(std::span<const std::uint8_t> s) {
  std::vector<std::vector<std::uint8_t>> out;
  std::size_t i = 0;
  while (i + 1 < s.size()) {
    if (!(s[i] == 0xFF && s[i + 1] == 0xD8)) {
      ++i;
      continue;
    }
    // Walk marker segments so EOI bytes inside entropy-coded data or
    // thumbnails are not mistaken for the end of the image.
    std::size_t j = i + 2;
    bool done = false;
    while (j + 1 < s.size() && !done) {
      if (s[j] != 0xFF) {
        ++j;
        continue;
      }
      const std::uint8_t m = s[j + 1];
      if (m == 0xD9) {
        out.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(i),
                         s.begin() + static_cast<std::ptrdiff_t>(j + 2));
        j += 2;
        done = true;
      } else if (m == 0x00 || m == 0xFF || (m >= 0xD0 && m <= 0xD7) || m == 0x01) {
        j += (m == 0xFF) ? 1 : 2;
      } else {
        if (j + 3 >= s.size()) break;
        const std::size_t len = (static_cast<std::size_t>(s[j + 2]) << 8) | s[j + 3];
        j += 2 + len;
      }
    }
    if (!done) break;
    i = j;
  }
  return out;
}

RoutingDecoder::RoutingDecoder(std::unique_ptr<FrameDecoder> external)
    : external_(std::move(external)) {}

std::vector<std::vector<std::uint8_t>> RoutingDecoder::decode_segment(const ClipRecord& clip,
                                                                      const Segment& segment) {
  std::FILE* f = std::fopen(clip.path.c_str(), "rb");
  if (!f) throw Error(ErrorCode::UnreadableMedia, "cannot open " + clip.path.string());
  std::uint8_t magic[8] = {};
  const std::size_t got = std::fread(magic, 1, sizeof magic, f);
  std::fclose(f);
  if (is_native_clip(std::span<const std::uint8_t>(magic, got))) {
    return native_.decode_segment(clip, segment);
  }
  if (!external_) {
    throw Error(ErrorCode::UnsupportedMedia,
                "no external decoder configured for " + clip.path.filename().string());
  }
  return external_->decode_segment(clip, segment);
}

FrameSet sample_frames(const ClipRecord& clip, const Segment& segment, FrameDecoder& decoder,
                       FrameStore& store, const SampleOptions& options) {
  if (options.frames < 2) throw Error(ErrorCode::InvalidFrameCount, "at least two frames required");
  const auto encoded = decoder.decode_segment(clip, segment);
  const auto picks = sample_indices(encoded.size(), options.frames);
  FrameSet set;
  set.segment_id = segment.segment_id;
  const double step = clip.fps > 0 ? 1.0 / clip.fps : segment.length / static_cast<double>(encoded.size());
  for (std::size_t idx : picks) {
    const Image img = fit_within(decode_jpeg(encoded[idx]), options.max_side);
    const auto jpeg = encode_jpeg(img, options.jpeg_quality);
    FrameRef ref;
    ref.timestamp = segment.start + static_cast<double>(idx) * step;
    ref.content_hash = store.put(jpeg);
    ref.location = FrameStore::relative_location(ref.content_hash);
    set.frames.push_back(std::move(ref));
  }
  return set;
}

// ---------------------------------------------------------------------------

double ValidationReport::ratio(const std::map<std::string, std::size_t>& counts,
                               const std::string& key) const {
  std::size_t total = 0;
  for (const auto& [k, v] : counts) total += v;
  const auto it = counts.find(key);
  if (total == 0 || it == counts.end()) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(total);
}

bool ValidationReport::is_excluded(const std::string& clip_id) const {
  return std::any_of(excluded.begin(), excluded.end(),
                     [&](const ExcludedClip& e) { return e.clip_id == clip_id; });
}

const std::vector<std::pair<std::string, std::size_t>>& reference_stage2_distribution() {
  static const std::vector<std::pair<std::string, std::size_t>> kDist = {
      {"Aggressive Behavior", 1408},
      {"Personal Space Violation", 880},
      {"Disruptive Behavior", 304},
      {"Benign", 816},
  };
  return kDist;
}

const std::vector<std::pair<std::string, std::size_t>>& reference_room_distribution() {
  static const std::vector<std::pair<std::string, std::size_t>> kDist = {
      {"Communication", 1864},
      {"WhackAPig", 728},
      {"SlingShot", 648},
      {"Climbing", 168},
  };
  return kDist;
}

ValidationReport validate_manifest(std::span<const ClipRecord> clips) {
  ValidationReport report;
  std::set<std::string> seen;
  for (const auto& clip : clips) {
    if (!seen.insert(clip.clip_id).second) {
      throw Error(ErrorCode::DuplicateClipId, "duplicate clip id: " + clip.clip_id);
    }
  }
  report.total_clips = clips.size();
  for (const auto& clip : clips) {
    if (clip.participant_count > 2) {
      report.excluded.push_back({clip.clip_id, "more than two participants"});
      continue;
    }
    report.included.push_back(clip.clip_id);
    const auto segs = static_cast<std::size_t>(std::max(0.0, std::floor(clip.duration / kSegmentSeconds)));
    report.total_segments += segs;
    report.segments_per_room[std::string(wire(clip.room))] += segs;
    if (clip.truth) {
      report.segments_per_stage2[std::string(wire(clip.truth->label))] += segs;
      report.segments_per_stage1[std::string(wire(coarsen(clip.truth->label)))] += segs;
    } else {
      report.unlabeled_segments += segs;
    }
  }
  return report;
}

json to_json(const ValidationReport& r) {
  json excluded = json::array();
  for (const auto& e : r.excluded) excluded.push_back({{"clip_id", e.clip_id}, {"reason", e.reason}});
  auto ratios = [&](const std::map<std::string, std::size_t>& m) {
    json out = json::object();
    for (const auto& [k, v] : m) out[k] = {{"count", v}, {"ratio", r.ratio(m, k)}};
    return out;
  };
  return {{"total_clips", r.total_clips},
          {"included_clips", r.included.size()},
          {"excluded", excluded},
          {"total_segments", r.total_segments},
          {"unlabeled_segments", r.unlabeled_segments},
          {"rooms", ratios(r.segments_per_room)},
          {"stage1", ratios(r.segments_per_stage1)},
          {"stage2", ratios(r.segments_per_stage2)}};
}

// ---------------------------------------------------------------------------

void to_json(json& j, const ClipTruth& t) {
  j = {{"label", wire(t.label)}, {"subcategory", wire(t.subcategory)}};
}

void from_json(const json& j, ClipTruth& t) {
  const auto label = parse_stage2(j.at("label").get<std::string>());
  if (!label) throw Error(ErrorCode::UnknownLabel, "unknown Stage 2 label in truth: " + j.at("label").dump());
  t.label = *label;
  if (j.contains("subcategory") && !j.at("subcategory").is_null()) {
    const auto sub = parse_subcategory(j.at("subcategory").get<std::string>());
    if (!sub) throw Error(ErrorCode::UnknownLabel, "unknown subcategory: " + j.at("subcategory").dump());
    if (parent_of(*sub) != t.label) {
      throw Error(ErrorCode::InvalidArgument, "subcategory does not belong to label");
    }
    t.subcategory = *sub;
  } else {
    // Label-only truth: pick the first subcategory of the category.
    for (Subcategory s : kSubcategories) {
      if (parent_of(s) == t.label) {
        t.subcategory = s;
        break;
      }
    }
  }
}

void to_json(json& j, const ClipRecord& c) {
  j = {{"clip_id", c.clip_id},
       {"path", c.path.string()},
       {"duration", c.duration},
       {"fps", c.fps},
       {"participant_count", c.participant_count},
       {"room", wire(c.room)},
       {"truth", c.truth ? json(*c.truth) : json(nullptr)}};
}

void from_json(const json& j, ClipRecord& c) {
  c.clip_id = j.at("clip_id").get<std::string>();
  c.path = j.at("path").get<std::string>();
  c.duration = j.at("duration").get<double>();
  c.fps = j.at("fps").get<double>();
  c.participant_count = j.value("participant_count", 1);
  const auto room = parse_room(j.value("room", std::string("Communication")));
  if (!room) throw Error(ErrorCode::InvalidArgument, "unknown room in clip " + c.clip_id);
  c.room = *room;
  if (j.contains("truth") && !j.at("truth").is_null()) c.truth = j.at("truth").get<ClipTruth>();
  else c.truth.reset();
  if (c.clip_id.empty()) throw Error(ErrorCode::InvalidArgument, "clip_id must not be empty");
  if (!(c.duration > 0) || !(c.fps > 0) || c.participant_count < 1) {
    throw Error(ErrorCode::InvalidArgument,
                "clip " + c.clip_id + " violates duration > 0, fps > 0, participant_count >= 1");
  }
}

void to_json(json& j, const IngestedSegment& s) {
  json frames = json::array();
  for (const auto& f : s.frames.frames) {
    frames.push_back({{"timestamp", f.timestamp}, {"hash", f.content_hash}, {"location", f.location}});
  }
  j = {{"segment_id", s.segment.segment_id},
       {"clip_id", s.segment.clip_id},
       {"index", s.segment.index},
       {"start", s.segment.start},
       {"length", s.segment.length},
       {"truth", s.segment.truth ? json(*s.segment.truth) : json(nullptr)},
       {"clip_hash", s.clip_hash},
       {"room", wire(s.room)},
       {"frames", frames}};
}

void from_json(const json& j, IngestedSegment& s) {
  s.segment.segment_id = j.at("segment_id").get<std::string>();
  s.segment.clip_id = j.at("clip_id").get<std::string>();
  s.segment.index = j.at("index").get<int>();
  s.segment.start = j.at("start").get<double>();
  s.segment.length = j.value("length", kSegmentSeconds);
  if (j.contains("truth") && !j.at("truth").is_null()) s.segment.truth = j.at("truth").get<ClipTruth>();
  s.clip_hash = j.value("clip_hash", std::string());
  s.room = parse_room(j.value("room", std::string("Communication"))).value_or(Room::Communication);
  s.frames.segment_id = s.segment.segment_id;
  s.frames.frames.clear();
  for (const auto& f : j.at("frames")) {
    FrameRef ref;
    ref.timestamp = f.at("timestamp").get<double>();
    ref.content_hash = f.at("hash").get<std::string>();
    ref.location = f.value("location", FrameStore::relative_location(ref.content_hash));
    s.frames.frames.push_back(std::move(ref));
  }
}

std::vector<ClipRecord> load_manifest(const fs::path& path) {
  std::vector<ClipRecord> out;
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::InvalidArgument,
                  path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
    }
    ClipRecord rec;
    try {
      rec = j.get<ClipRecord>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (rec.path.is_relative()) rec.path = base / rec.path;
    out.push_back(std::move(rec));
  });
  return out;
}

void write_manifest(const fs::path& path, std::span<const ClipRecord> clips) {
  std::string text;
  for (const auto& c : clips) text += json(c).dump() + "\n";
  write_atomic(path, text);
}

IngestResult ingest(std::span<const ClipRecord> clips, FrameDecoder& decoder, FrameStore& store,
                    const IngestOptions& options) {
  IngestResult result;
  result.validation = validate_manifest(clips);
  std::vector<const ClipRecord*> work;
  for (const auto& c : clips) {
    if (!result.validation.is_excluded(c.clip_id)) work.push_back(&c);
  }
  std::vector<std::vector<IngestedSegment>> per_clip(work.size());
  std::vector<std::optional<ExcludedClip>> failures(work.size());
  parallel_for(work.size(), options.workers, [&](std::size_t i) {
    const ClipRecord& clip = *work[i];
    try {
      const auto segments = segment_clip(clip);
      if (segments.empty()) {
        failures[i] = ExcludedClip{clip.clip_id, "discarded-short"};
        return;
      }
      const std::string clip_hash = sha256_hex(read_bytes(clip.path));
      for (const auto& seg : segments) {
        IngestedSegment is;
        is.segment = seg;
        is.frames = sample_frames(clip, seg, decoder, store, options.sampling);
        is.clip_hash = clip_hash;
        is.room = clip.room;
        per_clip[i].push_back(std::move(is));
      }
    } catch (const Error& e) {
      per_clip[i].clear();
      failures[i] = ExcludedClip{clip.clip_id, std::string(to_string(e.code())) + ": " + e.what()};
    }
  });
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (failures[i]) result.discarded.push_back(*failures[i]);
    for (auto& s : per_clip[i]) result.segments.push_back(std::move(s));
  }
  std::stable_sort(result.segments.begin(), result.segments.end(),
                   [](const IngestedSegment& a, const IngestedSegment& b) {
                     if (a.segment.clip_id != b.segment.clip_id) return a.segment.clip_id < b.segment.clip_id;
                     return a.segment.index < b.segment.index;
                   });
  return result;
}

void save_segments(const fs::path& path, std::span<const IngestedSegment> segments) {
  std::string text;
  for (const auto& s : segments) text += json(s).dump() + "\n";
  write_atomic(path, text);
}

std::vector<IngestedSegment> load_segments(const fs::path& path) {
  std::vector<IngestedSegment> out;
  for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::InvalidArgument,
                  path.string() + ":" + std::to_string(lineno) + ": malformed segment record");
    }
    out.push_back(j.get<IngestedSegment>());
  });
  return out;
}

}  // namespace vrmod
