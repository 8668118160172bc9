#pragma once

// Clip ingestion: manifest records, fixed-length segmentation, uniform frame
// sampling and the content-addressed frame store.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/taxonomy.hpp"

namespace vrmod {

inline constexpr double kSegmentSeconds = 10.0;
inline constexpr int kDefaultFramesPerSegment = 6;
inline constexpr int kMaxFrameSide = 768;
inline constexpr int kFrameJpegQuality = 90;

struct ClipTruth {
  Stage2Label label = Stage2Label::BenignBehavior;
  Subcategory subcategory = Subcategory::BenignOther;

  friend bool operator==(const ClipTruth&, const ClipTruth&) = default;
};

struct ClipRecord {
  std::string clip_id;
  std::filesystem::path path;
  double duration = 0.0;  // seconds
  double fps = 0.0;
  int participant_count = 1;
  Room room = Room::Communication;
  std::optional<ClipTruth> truth;
};

struct Segment {
  std::string segment_id;
  std::string clip_id;
  int index = 0;
  double start = 0.0;
  double length = kSegmentSeconds;
  std::optional<ClipTruth> truth;
};

struct FrameRef {
  double timestamp = 0.0;
  std::string content_hash;   // sha256 hex of the stored JPEG bytes
  std::string location;       // path relative to the frame store root
};

struct FrameSet {
  std::string segment_id;
  std::vector<FrameRef> frames;
};

// A segment whose frames have been sampled into a store.
struct IngestedSegment {
  Segment segment;
  FrameSet frames;
  std::string clip_hash;
  Room room = Room::Communication;
};

std::string make_segment_id(const std::string& clip_id, int index);

// Throws Error{UnreadableMedia} when the clip file is missing. Clips shorter
// than one segment yield an empty list.
std::vector<Segment> segment_clip(const ClipRecord& clip);

// Endpoint-inclusive uniform indices round_half_up(i*(F-1)/(n-1)).
// Throws InvalidFrameCount for n < 2 and TooFewFrames for F < n.
std::vector<std::size_t> sample_indices(std::size_t frame_count, int n);

// ---------------------------------------------------------------------------

// Content-addressed JPEG store laid out as frames/<first-2-hex>/<hash>.jpg.
class FrameStore {
 public:
  explicit FrameStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  // Idempotent: an existing hash is never rewritten.
  std::string put(std::span<const std::uint8_t> jpeg);
  bool contains(const std::string& hash) const;
  std::filesystem::path path_for(const std::string& hash) const;
  static std::string relative_location(const std::string& hash);
  std::vector<std::uint8_t> get(const std::string& hash) const;

 private:
  std::filesystem::path root_;
};

// Produces the encoded frames of one segment.
class FrameDecoder {
 public:
  virtual ~FrameDecoder() = default;

  // Returns the segment's frames in presentation order. Throws
  // DecodeFailure / UnsupportedMedia / UnreadableMedia.
  virtual std::vector<std::vector<std::uint8_t>> decode_segment(const ClipRecord& clip,
                                                                const Segment& segment) = 0;
};

// Reads the native clip container in-process.
class NativeClipDecoder : public FrameDecoder {
 public:
  std::vector<std::vector<std::uint8_t>> decode_segment(const ClipRecord& clip,
                                                        const Segment& segment) override;
};

// Spawns an external decoder process per segment and splits its stdout into
// JPEG images. The argv template may contain {input}, {start} and {length}.
class ExternalDecoder : public FrameDecoder {
 public:
  // Throws DecoderUnavailable if argv[0] cannot be resolved to an executable.
  explicit ExternalDecoder(std::vector<std::string> argv_template);

  static std::vector<std::string> ffmpeg_template();

  std::vector<std::vector<std::uint8_t>> decode_segment(const ClipRecord& clip,
                                                        const Segment& segment) override;

 private:
  std::vector<std::string> argv_;
};

// Native clips are decoded in-process; anything else goes to the external
// decoder when one is configured.
class RoutingDecoder : public FrameDecoder {
 public:
  explicit RoutingDecoder(std::unique_ptr<FrameDecoder> external = nullptr);

  std::vector<std::vector<std::uint8_t>> decode_segment(const ClipRecord& clip,
                                                        const Segment& segment) override;

 private:
  NativeClipDecoder native_;
  std::unique_ptr<FrameDecoder> external_;
};

// Splits a concatenated MJPEG byte stream on SOI/EOI markers.
std::vector<std::vector<std::uint8_t>> split_jpeg_stream(std::span<const std::uint8_t> stream);

struct SampleOptions {
  int frames = kDefaultFramesPerSegment;
  int max_side = kMaxFrameSide;
  int jpeg_quality = kFrameJpegQuality;
};

FrameSet sample_frames(const ClipRecord& clip, const Segment& segment, FrameDecoder& decoder,
                       FrameStore& store, const SampleOptions& options = {});

// ---------------------------------------------------------------------------

struct ExcludedClip {
  std::string clip_id;
  std::string reason;
};

struct ValidationReport {
  std::size_t total_clips = 0;
  std::vector<ExcludedClip> excluded;
  std::vector<std::string> included;  // clip ids, manifest order
  // Counts over included clips, weighted by number of 10 s segments.
  std::map<std::string, std::size_t> segments_per_room;
  std::map<std::string, std::size_t> segments_per_stage1;
  std::map<std::string, std::size_t> segments_per_stage2;
  std::size_t total_segments = 0;
  std::size_t unlabeled_segments = 0;

  double ratio(const std::map<std::string, std::size_t>& counts, const std::string& key) const;
  bool is_excluded(const std::string& clip_id) const;
};

// Reference segment distribution of the recorded corpus (label, count).
const std::vector<std::pair<std::string, std::size_t>>& reference_stage2_distribution();
const std::vector<std::pair<std::string, std::size_t>>& reference_room_distribution();

// Throws DuplicateClipId. Clips with more than two participants are excluded.
ValidationReport validate_manifest(std::span<const ClipRecord> clips);

// JSON-lines manifest; relative paths resolve against the manifest directory.
std::vector<ClipRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ClipRecord> clips);

// ---------------------------------------------------------------------------

struct IngestResult {
  ValidationReport validation;
  std::vector<IngestedSegment> segments;  // ordered by (clip_id, index)
  std::vector<ExcludedClip> discarded;    // short, unreadable or undecodable
};

struct IngestOptions {
  SampleOptions sampling;
  int workers = 1;
};

// Segments and samples every included clip into `store`. Per-clip media
// failures are recorded in `discarded`, never thrown.
IngestResult ingest(std::span<const ClipRecord> clips, FrameDecoder& decoder, FrameStore& store,
                    const IngestOptions& options = {});

// segments.jsonl in a store directory.
void save_segments(const std::filesystem::path& path, std::span<const IngestedSegment> segments);
std::vector<IngestedSegment> load_segments(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const ClipTruth& t);
void from_json(const nlohmann::json& j, ClipTruth& t);
void to_json(nlohmann::json& j, const ClipRecord& c);
void from_json(const nlohmann::json& j, ClipRecord& c);
void to_json(nlohmann::json& j, const IngestedSegment& s);
void from_json(const nlohmann::json& j, IngestedSegment& s);
nlohmann::json to_json(const ValidationReport& report);

}  // namespace vrmod
