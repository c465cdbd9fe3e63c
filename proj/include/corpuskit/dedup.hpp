#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "corpuskit/corpus.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/hash.hpp"
#include "corpuskit/parallel.hpp"

namespace corpuskit {

// Hashes of consecutive word n-grams (words joined by one space). Documents
// shorter than n contribute a single hash of their whole word sequence.
// Returned sorted and unique.
inline std::vector<uint64_t> shingles(std::span<const std::string> words, std::size_t n = 5) {
  if (n == 0) throw ConfigError("shingle size must be positive");
  std::vector<uint64_t> out;
  auto join = [&](std::size_t begin, std::size_t end) {
    std::string s;
    for (std::size_t i = begin; i < end; ++i) {
      if (i > begin) s.push_back(' ');
      s += words[i];
    }
    return hash::stable64(s);
  };
  if (words.size() < n) {
    out.push_back(join(0, words.size()));
    return out;
  }
  out.reserve(words.size() - n + 1);
  for (std::size_t i = 0; i + n <= words.size(); ++i) out.push_back(join(i, i + n));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<uint64_t> shingles(const NormalizedView& view, std::size_t n = 5) { return shingles(view.words, n); }

struct MinHashSignature {
  std::vector<uint64_t> values;
  uint64_t seed = 0;

  friend bool operator==(const MinHashSignature&, const MinHashSignature&) = default;
};

// k universal hash functions h_i(s) = (a_i s + b_i) mod (2^61 - 1), with
// (a_i, b_i) drawn from mt19937_64 seeded by (seed, i).
class MinHasher {
public:
  static constexpr uint64_t kPrime = (uint64_t{1} << 61) - 1;

  MinHasher(std::size_t k, uint64_t seed) : seed_(seed), a_(k), b_(k) {
    if (k == 0) throw ConfigError("signature length must be positive");
    for (std::size_t i = 0; i < k; ++i) {
      std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(i),
                        static_cast<uint32_t>(i >> 32)};
      std::mt19937_64 gen(seq);
      a_[i] = 1 + gen() % (kPrime - 1);
      b_[i] = gen() % kPrime;
    }
  }

  std::size_t size() const noexcept { return a_.size(); }
  uint64_t seed() const noexcept { return seed_; }

  uint64_t apply(std::size_t i, uint64_t s) const {
    const unsigned __int128 x = static_cast<unsigned __int128>(a_[i]) * reduce(s) + b_[i];
    return reduce(static_cast<uint64_t>(x & kPrime) + static_cast<uint64_t>(x >> 61));
  }

  MinHashSignature operator()(std::span<const uint64_t> shingle_set) const {
    if (shingle_set.empty()) throw EmptyDocument("cannot sign an empty shingle set");
    MinHashSignature sig{std::vector<uint64_t>(a_.size(), kPrime), seed_};
    for (uint64_t s : shingle_set) {
      const uint64_t r = reduce(s);
      for (std::size_t i = 0; i < a_.size(); ++i) {
        const unsigned __int128 x = static_cast<unsigned __int128>(a_[i]) * r + b_[i];
        const uint64_t h = reduce(static_cast<uint64_t>(x & kPrime) + static_cast<uint64_t>(x >> 61));
        if (h < sig.values[i]) sig.values[i] = h;
      }
    }
    return sig;
  }

private:
  static uint64_t reduce(uint64_t x) {
    x = (x & kPrime) + (x >> 61);
    return x >= kPrime ? x - kPrime : x;
  }

  uint64_t seed_;
  std::vector<uint64_t> a_;
  std::vector<uint64_t> b_;
};

inline MinHashSignature signature(std::span<const uint64_t> shingle_set, std::size_t k, uint64_t seed) {
  return MinHasher(k, seed)(shingle_set);
}

inline double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.values.size() != b.values.size() || a.seed != b.seed)
    throw SignatureMismatch("signatures differ in length or seed");
  if (a.values.empty()) throw SignatureMismatch("empty signatures");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) agree += a.values[i] == b.values[i];
  return static_cast<double>(agree) / static_cast<double>(a.values.size());
}

// ---------------------------------------------------------------------------
// LSH banding

// Bucket tables for b bands of r rows. Entries are buffered per band and
// spilled to temporary files once the buffered size exceeds the memory
// budget; candidate generation then processes one band at a time.
class LshIndex {
public:
  LshIndex(std::size_t bands, std::size_t rows, std::size_t memory_budget_bytes = std::size_t{1} << 30,
           std::filesystem::path spill_dir = std::filesystem::temp_directory_path())
      : bands_(bands), rows_(rows), budget_(memory_budget_bytes), spill_dir_(std::move(spill_dir)), pending_(bands) {
    if (bands == 0 || rows == 0) throw ConfigError("bands and rows must be positive");
  }
  LshIndex(const LshIndex&) = delete;
  LshIndex& operator=(const LshIndex&) = delete;
  ~LshIndex() {
    for (const auto& f : spill_files_) {
      std::error_code ec;
      std::filesystem::remove(f, ec);
    }
  }

  std::size_t bands() const noexcept { return bands_; }
  std::size_t rows() const noexcept { return rows_; }
  bool spilled() const noexcept { return !spill_files_.empty(); }

  uint64_t band_hash(const MinHashSignature& sig, std::size_t band) const {
    const auto* p = reinterpret_cast<const char*>(sig.values.data() + band * rows_);
    return hash::stable64(std::string_view(p, rows_ * sizeof(uint64_t)));
  }

  void insert(uint32_t doc, const MinHashSignature& sig) {
    if (sig.values.size() != bands_ * rows_) throw SignatureMismatch("signature length != bands * rows");
    for (std::size_t b = 0; b < bands_; ++b) pending_[b].push_back({band_hash(sig, b), doc});
    pending_bytes_ += bands_ * sizeof(Entry);
    if (pending_bytes_ > budget_) spill();
  }

  // Doc ids per bucket of one band, buckets keyed by band hash.
  std::map<uint64_t, std::vector<uint32_t>> band_buckets(std::size_t band) const {
    std::map<uint64_t, std::vector<uint32_t>> out;
    for (const auto& e : load_band(band)) out[e.hash].push_back(e.doc);
    return out;
  }

  // Calls f(span of doc ids) for every bucket holding two or more documents.
  template <class F>
  void for_each_collision(F&& f) const {
    std::vector<uint32_t> group;
    for (std::size_t b = 0; b < bands_; ++b) {
      auto entries = load_band(b);
      std::sort(entries.begin(), entries.end(),
                [](const Entry& x, const Entry& y) { return x.hash != y.hash ? x.hash < y.hash : x.doc < y.doc; });
      for (std::size_t i = 0; i < entries.size();) {
        std::size_t j = i;
        group.clear();
        while (j < entries.size() && entries[j].hash == entries[i].hash) group.push_back(entries[j++].doc);
        if (group.size() > 1) f(std::span<const uint32_t>(group));
        i = j;
      }
    }
  }

private:
  struct Entry {
    uint64_t hash;
    uint32_t doc;
  };

  void spill() {
    if (spill_files_.empty()) {
      static std::atomic<uint64_t> counter{0};
      const uint64_t tag = hash::mix64(reinterpret_cast<uintptr_t>(this) ^ (counter++ << 48) ^
                                       static_cast<uint64_t>(std::random_device{}()));
      for (std::size_t b = 0; b < bands_; ++b)
        spill_files_.push_back(spill_dir_ / ("corpuskit-lsh-" + std::to_string(tag) + "-" + std::to_string(b) + ".bin"));
    }
    for (std::size_t b = 0; b < bands_; ++b) {
      std::ofstream out(spill_files_[b], std::ios::binary | std::ios::app);
      if (!out) throw IoError("cannot write LSH spill file " + spill_files_[b].string());
      for (const auto& e : pending_[b]) {
        out.write(reinterpret_cast<const char*>(&e.hash), sizeof e.hash);
        out.write(reinterpret_cast<const char*>(&e.doc), sizeof e.doc);
      }
      if (!out) throw IoError("LSH spill write failed");
      pending_[b].clear();
      pending_[b].shrink_to_fit();
    }
    pending_bytes_ = 0;
  }

  std::vector<Entry> load_band(std::size_t band) const {
    std::vector<Entry> entries;
    if (!spill_files_.empty()) {
      std::ifstream in(spill_files_[band], std::ios::binary);
      Entry e{};
      while (in.read(reinterpret_cast<char*>(&e.hash), sizeof e.hash) &&
             in.read(reinterpret_cast<char*>(&e.doc), sizeof e.doc))
        entries.push_back(e);
    }
    entries.insert(entries.end(), pending_[band].begin(), pending_[band].end());
    return entries;
  }

  std::size_t bands_;
  std::size_t rows_;
  std::size_t budget_;
  std::filesystem::path spill_dir_;
  std::vector<std::vector<Entry>> pending_;
  std::size_t pending_bytes_ = 0;
  std::vector<std::filesystem::path> spill_files_;
};

// ---------------------------------------------------------------------------
// Clustering

struct DedupParams {
  std::size_t k = 128;
  std::size_t bands = 16;
  std::size_t rows = 8;
  double threshold = 0.7;
  uint64_t seed = 1;
  std::size_t shingle_n = 5;
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
  std::size_t threads = default_thread_count();

  void validate() const {
    if (bands * rows != k) throw ConfigError("bands * rows must equal k");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0,1]");
    if (shingle_n == 0) throw ConfigError("shingle size must be positive");
  }
};

struct DupCluster {
  std::size_t cluster_id = 0;
  std::vector<std::string> members;  // sorted
  std::string kept;

  friend bool operator==(const DupCluster&, const DupCluster&) = default;
};

struct DupClusters {
  std::vector<DupCluster> clusters;

  std::size_t duplicate_count() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.members.size() - 1;
    return n;
  }
  friend bool operator==(const DupClusters&, const DupClusters&) = default;
};

class DisjointSets {
public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }

  uint32_t find(uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(uint32_t a, uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a > b) std::swap(a, b);
    parent_[b] = a;
  }

private:
  std::vector<uint32_t> parent_;
};

// Candidates share at least one band bucket; candidates whose estimated
// Jaccard reaches the threshold are joined. Clusters are the resulting
// connected components of size >= 2, each keeping its lexicographically
// smallest id. Clusters are ordered by kept id, so the result does not
// depend on input order.
inline DupClusters find_clusters(std::span<const std::string> ids, std::span<const MinHashSignature> sigs,
                                 const DedupParams& params) {
  params.validate();
  if (ids.size() != sigs.size()) throw ConsistencyError("ids and signatures differ in length");
  LshIndex index(params.bands, params.rows, params.memory_budget_bytes);
  for (std::size_t i = 0; i < sigs.size(); ++i) index.insert(static_cast<uint32_t>(i), sigs[i]);

  DisjointSets sets(ids.size());
  index.for_each_collision([&](std::span<const uint32_t> group) {
    for (std::size_t i = 0; i < group.size(); ++i)
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        if (sets.find(group[i]) == sets.find(group[j])) continue;
        if (estimate_jaccard(sigs[group[i]], sigs[group[j]]) >= params.threshold) sets.unite(group[i], group[j]);
      }
  });

  std::unordered_map<uint32_t, std::vector<std::string>> components;
  for (std::size_t i = 0; i < ids.size(); ++i) components[sets.find(static_cast<uint32_t>(i))].push_back(ids[i]);
  DupClusters out;
  for (auto& [root, members] : components) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end());
    DupCluster c;
    c.kept = members.front();
    c.members = std::move(members);
    out.clusters.push_back(std::move(c));
  }
  std::sort(out.clusters.begin(), out.clusters.end(),
            [](const DupCluster& a, const DupCluster& b) { return a.kept < b.kept; });
  for (std::size_t i = 0; i < out.clusters.size(); ++i) out.clusters[i].cluster_id = i;
  return out;
}

inline DupClusters find_clusters(CorpusReader& reader, const DedupParams& params,
                                 const NormalizeOptions& normalize_options = {}) {
  params.validate();
  const MinHasher hasher(params.k, params.seed);
  std::vector<std::string> ids;
  std::vector<MinHashSignature> sigs;
  std::vector<Document> batch;
  const std::size_t batch_size = 1024 * std::max<std::size_t>(1, params.threads);
  while (true) {
    batch.clear();
    while (batch.size() < batch_size) {
      auto doc = reader.next();
      if (!doc) break;
      batch.push_back(std::move(*doc));
    }
    if (batch.empty()) break;
    const std::size_t offset = sigs.size();
    sigs.resize(offset + batch.size());
    parallel_for(batch.size(), params.threads, [&](std::size_t i) {
      const auto view = normalize(batch[i].text, normalize_options);
      sigs[offset + i] = hasher(shingles(view, params.shingle_n));
    });
    for (auto& d : batch) ids.push_back(std::move(d.id));
  }
  return find_clusters(ids, sigs, params);
}

// Emits every document except the non-kept members of each cluster, in input
// order. Throws ConsistencyError (after the pass) if a cluster names an id the
// corpus does not contain; callers writing through OutputFile then discard
// the partial output.
inline std::size_t deduplicate(CorpusReader& reader, const DupClusters& clusters, CorpusWriter& writer) {
  std::unordered_set<std::string> drop;
  std::unordered_set<std::string> unseen;
  for (const auto& c : clusters.clusters) {
    if (std::find(c.members.begin(), c.members.end(), c.kept) == c.members.end())
      throw ConsistencyError("cluster " + std::to_string(c.cluster_id) + " keeps a non-member");
    for (const auto& m : c.members) {
      unseen.insert(m);
      if (m != c.kept) drop.insert(m);
    }
  }
  std::size_t kept = 0;
  while (auto doc = reader.next()) {
    unseen.erase(doc->id);
    if (drop.contains(doc->id)) continue;
    writer.write(*doc);
    ++kept;
  }
  if (!unseen.empty()) throw ConsistencyError("cluster references unknown id \"" + *unseen.begin() + "\"");
  return kept;
}

inline void write_clusters(std::ostream& out, const DupClusters& clusters) {
  for (const auto& c : clusters.clusters) {
    nlohmann::ordered_json j;
    j["cluster_id"] = c.cluster_id;
    j["members"] = c.members;
    j["kept"] = c.kept;
    out << dump_line(j) << '\n';
  }
}

inline DupClusters read_clusters(std::istream& in) {
  DupClusters out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DupCluster c;
      c.cluster_id = j.at("cluster_id").get<std::size_t>();
      c.members = j.at("members").get<std::vector<std::string>>();
      c.kept = j.at("kept").get<std::string>();
      out.clusters.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw RecordError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace corpuskit
