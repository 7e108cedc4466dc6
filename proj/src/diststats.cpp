#include "utk/diststats.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace utk {

void DistanceHistogram::merge(const DistanceHistogram& other) {
  if (bin_edges.empty()) {
    *this = other;
    return;
  }
  if (other.bin_edges != bin_edges) throw ConfigError("cannot merge histograms: edges differ");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total_pairs += other.total_pairs;
}

std::string DistanceHistogram::to_csv() const {
  std::string s = "bin_lo,bin_hi,count\n";
  for (size_t i = 0; i < counts.size(); ++i) {
    s += std::to_string(bin_edges[i]);
    s += ',';
    s += std::to_string(bin_edges[i + 1]);
    s += ',';
    s += std::to_string(counts[i]);
    s += '\n';
  }
  return s;
}

std::string DistanceHistogram::to_json() const {
  nlohmann::json j;
  j["bin_edges"] = bin_edges;
  j["counts"] = counts;
  j["total_pairs"] = total_pairs;
  return j.dump(2);
}

std::string DistanceHistogram::to_gnuplot() const {
  std::string s = "# bin_lo bin_hi count\n";
  for (size_t i = 0; i < counts.size(); ++i) {
    s += std::to_string(bin_edges[i]);
    s += ' ';
    s += std::to_string(bin_edges[i + 1]);
    s += ' ';
    s += std::to_string(counts[i]);
    s += '\n';
  }
  return s;
}

const char* to_string(PairScope s) {
  switch (s) {
    case PairScope::intra_doc_cross_chunk: return "intra_doc_cross_chunk";
    case PairScope::intra_doc_all: return "intra_doc_all";
    case PairScope::all_pairs: return "all_pairs";
  }
  return "?";
}

PairScope pair_scope_from_string(const std::string& s) {
  if (s == "intra_doc_cross_chunk") return PairScope::intra_doc_cross_chunk;
  if (s == "intra_doc_all") return PairScope::intra_doc_all;
  if (s == "all_pairs") return PairScope::all_pairs;
  throw ConfigError("unknown scope \"" + s + "\"");
}

uint64_t pair_count_at_distance(uint64_t a0, uint64_t a1, uint64_t b0, uint64_t b1, uint64_t d) {
  if (a1 > b0) throw ConfigError("pair_count_at_distance: spans overlap or out of order");
  if (d == 0) return 0;
  // |{(i,j): i in a, j in b, j-i=d}| = max(0, min(a1-1, b1-1-d) - max(a0, b0-d) + 1)
  int64_t hi = std::min<int64_t>(int64_t(a1) - 1, int64_t(b1) - 1 - int64_t(d));
  int64_t lo = std::max<int64_t>(int64_t(a0), int64_t(b0) - int64_t(d));
  return hi >= lo ? uint64_t(hi - lo + 1) : 0;
}

namespace {

inline uint64_t tri(uint64_t k) { return k * (k + 1) / 2; }

// Cumulative trapezoid: sum of count(d) for d in [d_min, min(x, d_max)].
// The count profile rises 1..m over [d_min, d_min+m-1], holds m through
// d_max-m+1, then falls m-1..1.
uint64_t cum_pairs(uint64_t len_a, uint64_t len_b, uint64_t d_min, uint64_t d_max, uint64_t x) {
  if (x < d_min) return 0;
  x = std::min(x, d_max);
  const uint64_t m = std::min(len_a, len_b);
  const uint64_t up_end = d_min + m - 1;
  if (x <= up_end) return tri(x - d_min + 1);
  uint64_t total = tri(m);
  const uint64_t plat_end = d_max - m + 1;
  if (x <= plat_end) return total + m * (x - up_end);
  total += m * (plat_end - up_end);
  const uint64_t k = x - plat_end;  // falling terms m-1, m-2, ..., m-k
  return total + k * m - tri(k);
}

}  // namespace

uint64_t pair_count_in_range(uint64_t a0, uint64_t a1, uint64_t b0, uint64_t b1, uint64_t d_lo,
                             uint64_t d_hi) {
  if (a1 > b0) throw ConfigError("pair_count_in_range: spans overlap or out of order");
  if (d_hi <= d_lo) return 0;
  const uint64_t len_a = a1 - a0;
  const uint64_t len_b = b1 - b0;
  if (len_a == 0 || len_b == 0) return 0;
  const uint64_t d_min = b0 - a1 + 1;  // closest pair
  const uint64_t d_max = b1 - 1 - a0;  // farthest pair
  uint64_t upper = cum_pairs(len_a, len_b, d_min, d_max, d_hi - 1);
  uint64_t lower = d_lo == 0 ? 0 : cum_pairs(len_a, len_b, d_min, d_max, d_lo - 1);
  return upper - lower;
}

uint64_t self_pair_count_in_range(uint64_t len, uint64_t d_lo, uint64_t d_hi) {
  if (len == 0 || d_hi <= d_lo) return 0;
  d_lo = std::max<uint64_t>(d_lo, 1);
  d_hi = std::min<uint64_t>(d_hi, len);  // count(d) = len-d is 0 from d = len
  if (d_hi <= d_lo) return 0;
  // sum over d in [d_lo, d_hi) of (len - d)
  uint64_t k = d_hi - d_lo;
  uint64_t first = len - d_lo;  // largest term
  uint64_t last = len - (d_hi - 1);
  return k * (first + last) / 2;
}

std::vector<uint64_t> linear_edges(uint32_t bins, uint64_t seq_len) {
  if (bins == 0 || seq_len < 2) throw ConfigError("need bins >= 1 and seq_len >= 2");
  std::vector<uint64_t> edges(bins + 1);
  // distances live in [1, seq_len)
  const double span = double(seq_len - 1);
  for (uint32_t i = 0; i <= bins; ++i)
    edges[i] = 1 + uint64_t(std::llround(span * double(i) / double(bins)));
  for (uint32_t i = 1; i <= bins; ++i)
    if (edges[i] <= edges[i - 1]) edges[i] = edges[i - 1] + 1;
  edges[bins] = seq_len;
  return edges;
}

std::vector<uint64_t> log_edges(uint32_t bins, uint64_t seq_len) {
  if (bins == 0 || seq_len < 2) throw ConfigError("need bins >= 1 and seq_len >= 2");
  std::vector<uint64_t> edges(bins + 1);
  const double lo = 0.0, hi = std::log2(double(seq_len));
  for (uint32_t i = 0; i <= bins; ++i)
    edges[i] = uint64_t(std::llround(std::exp2(lo + (hi - lo) * double(i) / double(bins))));
  edges[0] = 1;
  for (uint32_t i = 1; i <= bins; ++i)
    if (edges[i] <= edges[i - 1]) edges[i] = edges[i - 1] + 1;
  edges[bins] = seq_len;
  return edges;
}

std::vector<uint64_t> parse_bin_spec(const std::string& spec, uint64_t seq_len) {
  if (spec.empty()) throw ConfigError("empty bin spec");
  if (spec.rfind("log:", 0) == 0) return log_edges(uint32_t(std::stoul(spec.substr(4))), seq_len);
  if (spec.find(',') == std::string::npos) return linear_edges(uint32_t(std::stoul(spec)), seq_len);
  std::vector<uint64_t> edges;
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    edges.push_back(std::stoull(spec.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (edges.size() < 2 && !(edges.size() == 1 && edges[0] < seq_len))
    throw ConfigError("bin spec needs at least one bin");
  if (edges.empty() || edges[0] < 1) throw ConfigError("bin edges must start at >= 1");
  for (size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) throw ConfigError("bin edges must be strictly ascending");
  if (edges.back() < seq_len) edges.push_back(seq_len);
  return edges;
}

namespace {

struct ScopedSpan {
  uint64_t doc_id;
  uint32_t chunk_index;
  uint64_t start, end;
};

bool span_relevant(const ChunkSpan& sp, bool include_structural) {
  if (sp.kind == SpanKind::pad) return false;
  if (sp.kind == SpanKind::body) return true;
  return include_structural;
}

std::vector<ScopedSpan> relevant_spans(const PackedSequence& seq, bool include_structural) {
  std::vector<ScopedSpan> out;
  out.reserve(seq.spans.size());
  for (const ChunkSpan& sp : seq.spans) {
    if (!span_relevant(sp, include_structural)) continue;
    if (sp.start >= sp.end) continue;
    out.push_back({sp.doc_id, sp.chunk_index, sp.start, sp.end});
  }
  return out;
}

bool pair_in_scope(const ScopedSpan& a, const ScopedSpan& b, PairScope scope) {
  switch (scope) {
    case PairScope::all_pairs: return true;
    case PairScope::intra_doc_all: return a.doc_id == b.doc_id;
    case PairScope::intra_doc_cross_chunk:
      return a.doc_id == b.doc_id && a.chunk_index != b.chunk_index;
  }
  return false;
}

void accumulate_sequence(const PackedSequence& seq, const std::vector<uint64_t>& edges,
                         PairScope scope, bool include_structural, DistanceHistogram& hist) {
  std::vector<ScopedSpan> spans = relevant_spans(seq, include_structural);
  const size_t nbins = edges.size() - 1;

  auto add_range = [&](size_t bin, uint64_t pairs) {
    hist.counts[bin] += pairs;
    hist.total_pairs += pairs;
  };

  // Within-span pairs count under every scope except cross-chunk.
  if (scope != PairScope::intra_doc_cross_chunk) {
    for (const ScopedSpan& sp : spans) {
      uint64_t len = sp.end - sp.start;
      for (size_t b = 0; b < nbins; ++b) {
        if (edges[b] >= len) break;
        uint64_t c = self_pair_count_in_range(len, edges[b], edges[b + 1]);
        if (c) add_range(b, c);
      }
    }
  }

  for (size_t i = 0; i < spans.size(); ++i) {
    for (size_t j = i + 1; j < spans.size(); ++j) {
      const ScopedSpan& a = spans[i];
      const ScopedSpan& b = spans[j];
      if (!pair_in_scope(a, b, scope)) continue;
      // spans are positionally ordered, so a precedes b
      const uint64_t d_min = b.start - a.end + 1;
      const uint64_t d_max = b.end - 1 - a.start;
      for (size_t k = 0; k < nbins; ++k) {
        if (edges[k] > d_max) break;
        if (edges[k + 1] <= d_min) continue;
        uint64_t c = pair_count_in_range(a.start, a.end, b.start, b.end, edges[k], edges[k + 1]);
        if (c) add_range(k, c);
      }
    }
  }
}

DistanceHistogram empty_hist(const std::vector<uint64_t>& edges) {
  if (edges.size() < 2) throw ConfigError("need at least one bin");
  DistanceHistogram h;
  h.bin_edges = edges;
  h.counts.assign(edges.size() - 1, 0);
  return h;
}

}  // namespace

DistanceHistogram histogram(const std::vector<PackedSequence>& seqs,
                            const std::vector<uint64_t>& edges, PairScope scope,
                            bool include_structural, int workers) {
  const int nthreads = workers > 0 ? workers : omp_get_max_threads();
  std::vector<DistanceHistogram> parts(nthreads, empty_hist(edges));
  std::vector<std::exception_ptr> errors(nthreads);
#pragma omp parallel num_threads(nthreads)
  {
    int tid = omp_get_thread_num();
    try {
#pragma omp for schedule(dynamic)
      for (int64_t i = 0; i < int64_t(seqs.size()); ++i)
        accumulate_sequence(seqs[i], edges, scope, include_structural, parts[tid]);
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  DistanceHistogram total = empty_hist(edges);
  for (auto& p : parts) total.merge(p);
  return total;
}

namespace reference {

DistanceHistogram histogram_brute(const std::vector<PackedSequence>& seqs,
                                  const std::vector<uint64_t>& edges, PairScope scope,
                                  bool include_structural) {
  DistanceHistogram hist = empty_hist(edges);

  for (const PackedSequence& seq : seqs) {
    // Position -> (relevant, doc, chunk)
    const uint64_t n = seq.tokens.size();
    std::vector<uint8_t> keep(n, 0);
    std::vector<uint64_t> doc(n, 0);
    std::vector<uint32_t> chunk(n, 0);
    for (const ChunkSpan& sp : seq.spans) {
      if (!span_relevant(sp, include_structural)) continue;
      for (uint64_t p = sp.start; p < sp.end && p < n; ++p) {
        keep[p] = 1;
        doc[p] = sp.doc_id;
        chunk[p] = sp.chunk_index;
      }
    }
    for (uint64_t i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      for (uint64_t j = i + 1; j < n; ++j) {
        if (!keep[j]) continue;
        if (scope != PairScope::all_pairs && doc[i] != doc[j]) continue;
        if (scope == PairScope::intra_doc_cross_chunk &&
            (doc[i] != doc[j] || chunk[i] == chunk[j]))
          continue;
        uint64_t d = j - i;
        auto it = std::upper_bound(hist.bin_edges.begin(), hist.bin_edges.end(), d);
        if (it == hist.bin_edges.begin() || it == hist.bin_edges.end()) continue;
        size_t bin = size_t(it - hist.bin_edges.begin()) - 1;
        hist.counts[bin]++;
        hist.total_pairs++;
      }
    }
  }
  return hist;
}

}  // namespace reference

}  // namespace utk
