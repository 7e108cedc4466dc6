#include "utk/tangler.hpp"

#include <algorithm>

namespace utk {

bool loss_mask_for(SpanKind kind) {
  switch (kind) {
    case SpanKind::body:
    case SpanKind::label:
    case SpanKind::solution_label: return true;
    case SpanKind::label_delim:
    case SpanKind::head_knot:
    case SpanKind::tail_knot:
    case SpanKind::solution_delim:
    case SpanKind::pad: return false;
  }
  return false;
}

uint64_t augmented_len(uint64_t doc_len, uint32_t h, uint32_t label_len) {
  if (h <= 1) return doc_len;
  uint64_t labels = uint64_t(h) * (label_len + 2);          // cl_open label cl_close per chunk
  uint64_t knots = 2ull * (h - 1);                          // tail + head per cut
  uint64_t solution = uint64_t(h) * label_len + (h - 1) + 2;  // sol_open labels seps sol_close
  return doc_len + labels + knots + solution;
}

uint32_t sample_chunk_count(uint64_t doc_len, const SplitPolicy& policy, PhiloxRng& rng) {
  if (doc_len < policy.min_split_len) return 1;
  if (rng.unit_real() >= policy.p_split) return 1;
  double r = rng.unit_real();
  uint32_t h = policy.chunk_count_dist.back().first;
  double cum = 0.0;
  for (auto& [k, p] : policy.chunk_count_dist) {
    cum += p;
    if (r < cum) {
      h = k;
      break;
    }
  }
  // Feasibility cap: every chunk must reach min_chunk_len.
  uint64_t max_feasible = doc_len / policy.min_chunk_len;
  if (h > max_feasible) h = uint32_t(std::max<uint64_t>(max_feasible, 1));
  return h;
}

std::vector<uint64_t> choose_split_points(uint64_t doc_len, uint32_t h, const SplitPolicy& policy,
                                          PhiloxRng& rng) {
  const uint64_t m = policy.min_chunk_len;
  if (h < 2 || doc_len < uint64_t(h) * m)
    throw ConfigError("infeasible split: doc_len=" + std::to_string(doc_len) +
                      " h=" + std::to_string(h) + " min_chunk_len=" + std::to_string(m));
  // Bijection between feasible cut sets and (h-1)-subsets of [0, N):
  // sorted picks f_1<...<f_{h-1} map to cuts c_i = f_i - (i-1) + i*m, which
  // makes every chunk at least m tokens. Uniform subsets give uniform cut
  // sets.
  const uint64_t n_free = doc_len - uint64_t(h) * m;
  const uint64_t N = n_free + h - 1;
  const uint32_t k = h - 1;

  // Floyd's subset sampling: k draws regardless of N.
  std::unordered_set<uint64_t> picked;
  std::vector<uint64_t> picks;
  picks.reserve(k);
  for (uint64_t j = N - k; j < N; ++j) {
    uint64_t t = rng.below(j + 1);
    if (picked.insert(t).second)
      picks.push_back(t);
    else {
      picked.insert(j);
      picks.push_back(j);
    }
  }
  std::sort(picks.begin(), picks.end());

  std::vector<uint64_t> cuts(k);
  for (uint32_t i = 0; i < k; ++i) cuts[i] = picks[i] - i + uint64_t(i + 1) * m;
  return cuts;
}

bool LabelSet::insert(const std::vector<uint32_t>& label) { return set_.insert(label).second; }

std::vector<uint32_t> gen_label(const SplitPolicy& policy, PhiloxRng& rng, LabelSet& used) {
  if (used.size() >= policy.label_capacity())
    throw ConfigError("label pool exhausted: " + std::to_string(used.size()) +
                      " labels in use, capacity " + std::to_string(policy.label_capacity()));
  const uint64_t pool = policy.label_pool.size();
  std::vector<uint32_t> label(policy.label_len);
  for (;;) {
    for (uint32_t i = 0; i < policy.label_len; ++i)
      label[i] = policy.label_pool.at(rng.below(pool));
    if (used.insert(label)) return label;
  }
}

namespace {

struct ChunkBuilder {
  TangledChunk& c;

  void append(SpanKind kind, std::span<const uint32_t> toks, uint32_t span_chunk_index) {
    uint64_t start = c.tokens.size();
    c.tokens.insert(c.tokens.end(), toks.begin(), toks.end());
    c.mask.insert(c.mask.end(), toks.size(), loss_mask_for(kind) ? 1 : 0);
    ChunkSpan sp;
    sp.doc_id = c.doc_id;
    sp.chunk_index = span_chunk_index;
    sp.total_chunks = c.total_chunks;
    sp.start = start;
    sp.end = start + toks.size();
    sp.kind = kind;
    c.spans.push_back(sp);
  }

  void append_one(SpanKind kind, uint32_t tok, uint32_t span_chunk_index) {
    append(kind, std::span<const uint32_t>(&tok, 1), span_chunk_index);
  }
};

}  // namespace

std::vector<TangledChunk> tangle_none(const Document& doc) {
  TangledChunk c;
  c.doc_id = doc.doc_id;
  c.chunk_index = 1;
  c.total_chunks = 1;
  ChunkBuilder b{c};
  b.append(SpanKind::body, doc.tokens, 1);
  std::vector<TangledChunk> out;
  out.push_back(std::move(c));
  return out;
}

std::vector<TangledChunk> tangle_document(const Document& doc, const SplitPolicy& policy,
                                          const SpecialTokens& specials, PhiloxRng& rng,
                                          LabelSet& used) {
  const uint64_t len = doc.tokens.size();
  const uint32_t h = sample_chunk_count(len, policy, rng);
  if (h == 1) return tangle_none(doc);

  std::vector<uint64_t> cuts = choose_split_points(len, h, policy, rng);

  if (used.size() + h > policy.label_capacity())
    throw ConfigError("label pool too small for " + std::to_string(h) + " more labels");
  std::vector<std::vector<uint32_t>> labels(h);
  for (uint32_t j = 0; j < h; ++j) labels[j] = gen_label(policy, rng, used);

  std::vector<TangledChunk> chunks;
  chunks.reserve(h);
  for (uint32_t j = 1; j <= h; ++j) {
    uint64_t body_start = j == 1 ? 0 : cuts[j - 2];
    uint64_t body_end = j == h ? len : cuts[j - 1];

    TangledChunk c;
    c.doc_id = doc.doc_id;
    c.chunk_index = j;
    c.total_chunks = h;
    c.label = labels[j - 1];
    ChunkBuilder b{c};

    if (j > 1) b.append_one(SpanKind::head_knot, specials.head_knot(j), j);
    b.append_one(SpanKind::label_delim, specials.cl_open, j);
    b.append(SpanKind::label, labels[j - 1], j);
    b.append_one(SpanKind::label_delim, specials.cl_close, j);
    b.append(SpanKind::body,
             std::span<const uint32_t>(doc.tokens.data() + body_start, body_end - body_start), j);
    if (j < h) b.append_one(SpanKind::tail_knot, specials.tail_knot(j), j);
    if (j == h) {
      // Untie solution: the document's chunk labels in original order.
      b.append_one(SpanKind::solution_delim, specials.sol_open, j);
      for (uint32_t i = 1; i <= h; ++i) {
        if (i > 1) b.append_one(SpanKind::solution_delim, specials.sol_sep, j);
        b.append(SpanKind::solution_label, labels[i - 1], i);
      }
      b.append_one(SpanKind::solution_delim, specials.sol_close, j);
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<TangledChunk> tangle_cip(const Document& doc, const SplitPolicy& policy,
                                     PhiloxRng& rng) {
  const uint64_t len = doc.tokens.size();
  if (len < 2ull * policy.min_chunk_len) return tangle_none(doc);
  std::vector<uint64_t> cuts = choose_split_points(len, 2, policy, rng);
  const uint64_t cut = cuts[0];

  std::vector<TangledChunk> chunks(2);
  for (uint32_t j = 1; j <= 2; ++j) {
    TangledChunk& c = chunks[j - 1];
    c.doc_id = doc.doc_id;
    c.chunk_index = j;
    c.total_chunks = 2;
    ChunkBuilder b{c};
    uint64_t s = j == 1 ? 0 : cut;
    uint64_t e = j == 1 ? cut : len;
    b.append(SpanKind::body, std::span<const uint32_t>(doc.tokens.data() + s, e - s), j);
  }
  return chunks;
}

}  // namespace utk
