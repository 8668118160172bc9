#include "vrmod/finetune.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "vrmod/error.hpp"
#include "vrmod/gateway.hpp"
#include "vrmod/io.hpp"

namespace vrmod {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> apportion(std::span<const std::size_t> class_sizes, std::size_t k) {
  const std::size_t total = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
  if (k > total) {
    throw Error(ErrorCode::InvalidArgument,
                "sample size " + std::to_string(k) + " exceeds population " + std::to_string(total));
  }
  std::vector<std::size_t> quotas(class_sizes.size(), 0);
  if (k == 0) return quotas;
  std::vector<std::size_t> remainders(class_sizes.size(), 0);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    const auto scaled = static_cast<unsigned __int128>(k) * class_sizes[c];
    quotas[c] = static_cast<std::size_t>(scaled / total);
    remainders[c] = static_cast<std::size_t>(scaled % total);
    assigned += quotas[c];
  }
  std::vector<std::size_t> order(class_sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < k; ++i, ++assigned) ++quotas[order[i]];
  return quotas;
}

namespace {

// Unbiased draw in [0, bound) by rejection; fixed across standard libraries.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

}  // namespace

std::vector<std::size_t> sample_quotas(std::span<const std::size_t> class_of,
                                       std::span<const std::size_t> quotas, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> members(quotas.size());
  for (std::size_t i = 0; i < class_of.size(); ++i) {
    if (class_of[i] >= quotas.size()) throw Error(ErrorCode::InvalidArgument, "class index out of range");
    members[class_of[i]].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < quotas.size(); ++c) {
    auto& pool = members[c];
    if (quotas[c] > pool.size()) {
      throw Error(ErrorCode::InsufficientClassMembers, "class " + std::to_string(c) + " needs " +
                                                            std::to_string(quotas[c]) + " members but has " +
                                                            std::to_string(pool.size()));
    }
    // Partial Fisher-Yates: the first quota slots become a uniform subset.
    for (std::size_t i = 0; i < quotas[c]; ++i) {
      const std::size_t j = i + draw_below(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quotas[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

StratifiedSample stratified_sample(std::span<const Stage2Label> labels, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> class_of(labels.size());
  std::vector<std::size_t> sizes(kStage2Labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    class_of[i] = static_cast<std::size_t>(labels[i]);
    ++sizes[class_of[i]];
  }
  const auto quotas = apportion(sizes, k);
  StratifiedSample s;
  s.indices = sample_quotas(class_of, quotas, seed);
  for (std::size_t c = 0; c < quotas.size(); ++c) s.quotas[kStage2Labels[c]] = quotas[c];
  return s;
}

std::vector<Segment> stratified_sample(std::span<const std::pair<Segment, Stage2Label>> population,
                                       std::size_t k, std::uint64_t seed) {
  std::vector<Stage2Label> labels;
  labels.reserve(population.size());
  for (const auto& p : population) labels.push_back(p.second);
  std::vector<Segment> out;
  for (auto i : stratified_sample(labels, k, seed).indices) out.push_back(population[i].first);
  return out;
}

std::vector<IngestedSegment> sample_by_clip(std::span<const IngestedSegment> segments, std::size_t k,
                                            std::uint64_t seed) {
  std::vector<std::string> clips;
  std::vector<Stage2Label> labels;
  std::map<std::string, std::size_t> position;
  for (const auto& s : segments) {
    if (!s.segment.truth) {
      throw Error(ErrorCode::MissingTruth, s.segment.segment_id + " has no ground truth");
    }
    if (position.emplace(s.segment.clip_id, clips.size()).second) {
      clips.push_back(s.segment.clip_id);
      labels.push_back(s.segment.truth->label);
    }
  }
  std::set<std::string> chosen;
  for (auto i : stratified_sample(labels, k, seed).indices) chosen.insert(clips[i]);
  std::vector<IngestedSegment> out;
  for (const auto& s : segments) {
    if (chosen.count(s.segment.clip_id)) out.push_back(s);
  }
  return out;
}

std::vector<IngestedSegment> sample_by_segment(std::span<const IngestedSegment> segments, std::size_t k,
                                               std::uint64_t seed) {
  std::vector<Stage2Label> labels;
  for (const auto& s : segments) {
    if (!s.segment.truth) throw Error(ErrorCode::MissingTruth, s.segment.segment_id + " has no ground truth");
    labels.push_back(s.segment.truth->label);
  }
  std::vector<IngestedSegment> out;
  for (auto i : stratified_sample(labels, k, seed).indices) out.push_back(segments[i]);
  return out;
}

std::vector<SftItem> items_from_truth(std::span<const IngestedSegment> segments) {
  std::vector<SftItem> items;
  for (const auto& s : segments) {
    if (!s.segment.truth) throw Error(ErrorCode::MissingTruth, s.segment.segment_id + " has no ground truth");
    items.push_back({s, s.segment.truth->label, std::string(reason_phrase(s.segment.truth->subcategory))});
  }
  return items;
}

json sft_record(const SftItem& item, Stage stage, const PromptBundle& bundle,
                std::span<const std::string> frame_urls, std::span<const std::vector<std::string>> exemplar_urls) {
  json messages = render_messages(bundle, frame_urls, exemplar_urls);
  messages.push_back({{"role", "assistant"}, {"content", format_answer(project(item.gold, stage), item.reason)}});
  return {{"messages", std::move(messages)}};
}

ExportSummary export_sft(std::span<const SftItem> items, const FrameStore& store, const ExportOptions& options,
                         const fs::path& out_path) {
  struct Plan {
    Stage stage;
    PromptBundle bundle;
    std::vector<std::vector<std::string>> exemplar_urls;
  };
  std::vector<Plan> plans;
  for (Stage stage : options.stages) {
    const auto& ex = stage == Stage::One ? options.stage1_exemplars : options.stage2_exemplars;
    Plan p{stage, build_prompt(stage, options.variant, options.n_frames, ex), {}};
    for (const auto& e : ex) p.exemplar_urls.push_back(host_frames(store, e.frames, options.frame_base_url));
    plans.push_back(std::move(p));
  }

  ExportSummary summary;
  std::string out;
  for (const auto& item : items) {
    if (static_cast<int>(item.segment.frames.frames.size()) != options.n_frames) {
      throw Error(ErrorCode::MissingFrames, item.segment.segment.segment_id + " does not have " +
                                                std::to_string(options.n_frames) + " frames");
    }
    std::vector<std::string> urls;
    try {
      urls = host_frames(store, item.segment.frames, options.frame_base_url);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingFrame) throw;
      throw Error(ErrorCode::MissingFrames, item.segment.segment.segment_id + ": " + e.what());
    }
    for (const auto& plan : plans) {
      const std::string line = sft_record(item, plan.stage, plan.bundle, urls, plan.exemplar_urls).dump();
      out += line;
      out += '\n';
      ++summary.records;
      summary.approx_tokens += (line.size() + 3) / 4;
      ++summary.labels[std::string(wire(plan.stage))][std::string(project(item.gold, plan.stage).wire())];
    }
  }
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_atomic(out_path, out);
  return summary;
}

json to_json(const ExportSummary& summary) {
  return {{"records", summary.records},
          {"approx_tokens", summary.approx_tokens},
          {"labels", summary.labels},
          {"recommended_epochs", summary.recommended_epochs}};
}

}  // namespace vrmod
