#pragma once

#include <filesystem>
#include <vector>

#include "vrmod/media.hpp"
#include "vrmod/synth.hpp"

namespace vrmod::testing {

// Synthetic clips generated, then ingested into <root>/store.
struct Corpus {
  std::filesystem::path root;
  std::vector<ClipRecord> clips;
  IngestResult ingested;

  std::filesystem::path sidecars() const { return root / "corpus" / "sidecars"; }
  std::filesystem::path store_root() const { return root / "store"; }
};

inline Corpus make_corpus(const std::filesystem::path& root, int per_class, std::uint64_t seed = 7,
                          double max_duration = 25.0, int workers = 1) {
  Corpus c;
  c.root = root;
  synth::CorpusOptions opts;
  opts.count_per_class = per_class;
  opts.seed = seed;
  opts.max_duration = max_duration;
  opts.workers = workers;
  c.clips = synth::generate_corpus(root / "corpus", opts);
  FrameStore store(c.store_root());
  RoutingDecoder decoder;
  IngestOptions io;
  io.workers = workers;
  c.ingested = ingest(c.clips, decoder, store, io);
  return c;
}

}  // namespace vrmod::testing
