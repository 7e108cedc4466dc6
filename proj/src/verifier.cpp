#include "utk/verifier.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "utk/tangler.hpp"

namespace utk {

namespace {

constexpr size_t kMaxSampleIssues = 16;

struct ChunkPieces {
  uint32_t head_knots = 0;
  uint32_t tail_knots = 0;
  uint32_t label_delims = 0;
  bool label_present = false;
  bool label_clipped = false;
  std::vector<uint32_t> label;
  bool body_present = false;
  bool body_clipped = false;
  uint64_t body_pos = 0;
  std::vector<uint32_t> body;
};

struct DocState {
  uint32_t total_chunks = 0;
  bool any_clipped = false;
  bool structured = false;  // any span kind beyond body
  uint32_t sol_delims = 0;
  bool sol_clipped = false;
  std::map<uint32_t, std::vector<uint32_t>> sol_labels;  // i -> label tokens
  std::map<uint32_t, ChunkPieces> chunks;
};

}  // namespace

SequenceAnalysis untie(const PackedSequence& seq, uint64_t seq_index) {
  if (seq.spans.empty()) throw IntegrityError("sequence carries no span manifest");
  SequenceAnalysis res;
  auto issue = [&](uint64_t offset, IssueKind kind, std::string what) {
    res.issues.push_back({seq_index, offset, kind, std::move(what)});
  };

  // Spans must partition [0, seq_len).
  uint64_t prev_end = 0;
  for (const ChunkSpan& sp : seq.spans) {
    if (sp.start >= sp.end) issue(sp.start, IssueKind::structure, "empty or inverted span");
    if (sp.start != prev_end)
      issue(sp.start, IssueKind::structure,
            sp.start < prev_end ? "overlapping spans" : "gap between spans");
    prev_end = std::max(prev_end, sp.end);
  }
  if (prev_end != seq.tokens.size())
    issue(prev_end, IssueKind::structure, "spans do not cover the sequence");

  // Loss-mask rule holds position by position.
  for (const ChunkSpan& sp : seq.spans) {
    uint8_t want = loss_mask_for(sp.kind) ? 1 : 0;
    uint64_t end = std::min<uint64_t>(sp.end, seq.loss_mask.size());
    for (uint64_t p = sp.start; p < end; ++p) {
      if (seq.loss_mask[p] != want) {
        if (res.mask_violations == 0)
          issue(p, IssueKind::mask, std::string("loss mask wrong for ") + to_string(sp.kind));
        ++res.mask_violations;
      }
    }
  }

  // Gather per-document state.
  std::map<uint64_t, DocState> docs;
  for (const ChunkSpan& sp : seq.spans) {
    if (sp.kind == SpanKind::pad) continue;
    DocState& d = docs[sp.doc_id];
    if (d.total_chunks == 0) d.total_chunks = sp.total_chunks;
    if (d.total_chunks != sp.total_chunks)
      issue(sp.start, IssueKind::structure,
            "inconsistent total_chunks for doc " + std::to_string(sp.doc_id));
    if (sp.clipped) d.any_clipped = true;
    if (sp.kind != SpanKind::body) d.structured = true;

    switch (sp.kind) {
      case SpanKind::body: {
        ChunkPieces& c = d.chunks[sp.chunk_index];
        c.body_present = true;
        c.body_clipped = sp.clipped;
        c.body_pos = sp.start;
        c.body.assign(seq.tokens.begin() + sp.start, seq.tokens.begin() + sp.end);
        break;
      }
      case SpanKind::label: {
        ChunkPieces& c = d.chunks[sp.chunk_index];
        c.label_present = true;
        c.label_clipped = sp.clipped;
        c.label.assign(seq.tokens.begin() + sp.start, seq.tokens.begin() + sp.end);
        break;
      }
      case SpanKind::label_delim: d.chunks[sp.chunk_index].label_delims++; break;
      case SpanKind::head_knot:
        if (sp.chunk_index <= 1) issue(sp.start, IssueKind::structure, "head knot on chunk 1");
        d.chunks[sp.chunk_index].head_knots++;
        break;
      case SpanKind::tail_knot:
        if (sp.chunk_index >= sp.total_chunks)
          issue(sp.start, IssueKind::structure, "tail knot on final chunk");
        d.chunks[sp.chunk_index].tail_knots++;
        break;
      case SpanKind::solution_label:
        if (sp.clipped)
          d.sol_clipped = true;
        else
          d.sol_labels[sp.chunk_index] =
              std::vector<uint32_t>(seq.tokens.begin() + sp.start, seq.tokens.begin() + sp.end);
        break;
      case SpanKind::solution_delim:
        d.sol_delims++;
        if (sp.clipped) d.sol_clipped = true;
        break;
      case SpanKind::pad: break;
    }
  }

  // Label uniqueness across the whole sequence.
  std::set<std::vector<uint32_t>> labels_seen;
  for (auto& [doc_id, d] : docs) {
    for (auto& [j, c] : d.chunks) {
      if (c.label_present && !c.label_clipped && !labels_seen.insert(c.label).second) {
        issue(c.body_pos, IssueKind::label_collision,
              "duplicate chunk label in sequence (doc " + std::to_string(doc_id) + ")");
        ++res.label_collisions;
      }
    }
  }

  for (auto& [doc_id, d] : docs) {
    ReconstructedDoc out;
    out.total_chunks = d.total_chunks;

    bool incomplete = d.any_clipped;
    const uint32_t h = d.total_chunks;
    for (uint32_t j = 1; j <= h; ++j) {
      auto it = d.chunks.find(j);
      if (it == d.chunks.end() || !it->second.body_present) {
        incomplete = true;
        continue;
      }
      const ChunkPieces& c = it->second;
      ++out.chunks_present;
      if (c.body_clipped) incomplete = true;
      if (d.structured) {
        if (j > 1 && c.head_knots != 1) incomplete = true;
        if (j < h && c.tail_knots != 1) incomplete = true;
        if (c.label_delims != 2 || !c.label_present || c.label_clipped) incomplete = true;
      }
    }
    if (d.structured && h > 1) {
      // sol_open + (h-1) separators + sol_close, one label per chunk.
      if (d.sol_clipped || d.sol_delims != h + 1 || d.sol_labels.size() != h) incomplete = true;
    }

    // Solution block vs actual chunk labels, where both survived.
    if (d.structured && h > 1 && !d.sol_clipped) {
      for (auto& [i, sol] : d.sol_labels) {
        if (i < 1 || i > h) {
          issue(0, IssueKind::structure,
                "solution label index out of range for doc " + std::to_string(doc_id));
          continue;
        }
        auto it = d.chunks.find(i);
        if (it != d.chunks.end() && it->second.label_present && !it->second.label_clipped &&
            it->second.label != sol) {
          issue(it->second.body_pos, IssueKind::solution_mismatch,
                "solution label mismatch for doc " + std::to_string(doc_id) + " chunk " +
                    std::to_string(i));
        }
      }
    }

    // Reconstruct in chunk order; count positional inversions.
    std::vector<std::pair<uint64_t, uint32_t>> by_pos;  // (position, chunk_index)
    for (auto& [j, c] : d.chunks) {
      if (!c.body_present) continue;
      by_pos.emplace_back(c.body_pos, j);
      out.tokens.insert(out.tokens.end(), c.body.begin(), c.body.end());
    }
    std::sort(by_pos.begin(), by_pos.end());
    for (size_t a = 0; a < by_pos.size(); ++a) {
      for (size_t b = a + 1; b < by_pos.size(); ++b) {
        ++res.order_pairs;
        if (by_pos[a].second > by_pos[b].second) ++res.order_inversions;
      }
    }

    out.status = incomplete ? DocStatus::truncated : DocStatus::complete;
    res.docs.emplace(doc_id, std::move(out));
  }
  return res;
}

BlindReport blind_check(const PackedSequence& seq, const SpecialTokens& specials,
                        uint32_t label_len) {
  BlindReport rep;
  const auto& toks = seq.tokens;
  const uint64_t n = toks.size();

  std::vector<SpanKind> derived(n, SpanKind::body);
  std::vector<uint8_t> undecided(n, 0);

  struct BlindUnit {  // one derived chunk: label -> body range
    std::vector<uint32_t> label;
    uint64_t body_start = 0, body_end = 0;
  };
  std::vector<BlindUnit> units;
  std::vector<std::vector<std::vector<uint32_t>>> solutions;

  auto is_ordinary = [&](uint32_t t) { return !specials.is_special(t); };
  // A structure failed to parse: everything up to the next special token is
  // ambiguous (typically the clipped tail of a sequence).
  auto mark_undecided = [&](uint64_t from) {
    uint64_t p = from;
    if (p < n && !is_ordinary(toks[p])) undecided[p++] = 1;
    while (p < n && is_ordinary(toks[p])) undecided[p++] = 1;
    return p;
  };

  uint64_t p = 0;
  while (p < n) {
    uint32_t t = toks[p];
    if (t == specials.pad) {
      derived[p++] = SpanKind::pad;
    } else if (specials.head_knot_index(t) >= 0) {
      derived[p++] = SpanKind::head_knot;
    } else if (specials.tail_knot_index(t) >= 0) {
      derived[p++] = SpanKind::tail_knot;
    } else if (t == specials.cl_open) {
      uint64_t close_pos = p + label_len + 1;
      bool ok = close_pos < n && toks[close_pos] == specials.cl_close;
      if (ok) {
        for (uint64_t q = p + 1; q < close_pos; ++q)
          if (!is_ordinary(toks[q])) ok = false;
      }
      if (!ok) {
        p = mark_undecided(p);
        continue;
      }
      derived[p] = SpanKind::label_delim;
      for (uint64_t q = p + 1; q < close_pos; ++q) derived[q] = SpanKind::label;
      derived[close_pos] = SpanKind::label_delim;
      BlindUnit u;
      u.label.assign(toks.begin() + p + 1, toks.begin() + close_pos);
      u.body_start = close_pos + 1;
      uint64_t e = u.body_start;
      while (e < n && is_ordinary(toks[e])) ++e;
      u.body_end = e;
      units.push_back(std::move(u));
      p = close_pos + 1;
    } else if (t == specials.sol_open) {
      // sol_open label (sol_sep label)* sol_close
      uint64_t q = p + 1;
      std::vector<std::vector<uint32_t>> labels;
      bool ok = true;
      for (;;) {
        if (q + label_len > n) {
          ok = false;
          break;
        }
        bool lab_ok = true;
        for (uint64_t r = q; r < q + label_len; ++r)
          if (!is_ordinary(toks[r])) lab_ok = false;
        if (!lab_ok) {
          ok = false;
          break;
        }
        labels.emplace_back(toks.begin() + q, toks.begin() + q + label_len);
        q += label_len;
        if (q >= n) {
          ok = false;
          break;
        }
        if (toks[q] == specials.sol_close) break;
        if (toks[q] != specials.sol_sep) {
          ok = false;
          break;
        }
        ++q;
      }
      if (!ok) {
        p = mark_undecided(p);
        continue;
      }
      derived[p] = SpanKind::solution_delim;
      for (uint64_t r = p + 1; r < q; ++r)
        derived[r] = is_ordinary(toks[r]) ? SpanKind::solution_label : SpanKind::solution_delim;
      derived[q] = SpanKind::solution_delim;
      solutions.push_back(std::move(labels));
      p = q + 1;
    } else if (is_ordinary(t)) {
      derived[p++] = SpanKind::body;
    } else {
      // cl_close / sol_sep / sol_close outside any structure
      p = mark_undecided(p);
    }
  }

  // Cross-check derived roles against the manifest.
  for (const ChunkSpan& sp : seq.spans) {
    for (uint64_t q = sp.start; q < std::min<uint64_t>(sp.end, n); ++q) {
      if (undecided[q]) {
        ++rep.undecidable_tokens;
        continue;
      }
      ++rep.positions_checked;
      if (derived[q] != sp.kind) ++rep.kind_mismatches;
    }
  }

  // Follow each solution block the way the model would: match labels to
  // chunks, reconstruct the document, compare against the manifest view.
  std::map<std::vector<uint32_t>, const BlindUnit*> by_label;
  for (const BlindUnit& u : units) by_label[u.label] = &u;

  SequenceAnalysis manifest_view = untie(seq);
  std::map<uint64_t, const ChunkSpan*> span_at;
  for (const ChunkSpan& sp : seq.spans) span_at[sp.start] = &sp;

  for (const auto& labels : solutions) {
    std::vector<uint32_t> recon;
    bool resolved = !labels.empty();
    uint64_t doc_id = 0;
    bool doc_known = false;
    for (const auto& lab : labels) {
      auto it = by_label.find(lab);
      if (it == by_label.end()) {
        resolved = false;
        break;
      }
      const BlindUnit* u = it->second;
      recon.insert(recon.end(), toks.begin() + u->body_start, toks.begin() + u->body_end);
      auto sp_it = span_at.find(u->body_start);
      if (sp_it != span_at.end()) {
        doc_id = sp_it->second->doc_id;
        doc_known = true;
      }
    }
    if (!resolved || !doc_known) {
      ++rep.docs_unresolved;  // referenced chunk truncated away
      continue;
    }
    auto doc_it = manifest_view.docs.find(doc_id);
    if (doc_it != manifest_view.docs.end() && doc_it->second.tokens == recon)
      ++rep.docs_matched;
    else
      ++rep.doc_mismatches;
  }
  return rep;
}

uint64_t AuditReport::violations() const {
  return mask_violations + order_violations + label_collisions + structure_issues +
         solution_mismatches + roundtrip_mismatches + blind_kind_mismatches +
         blind_doc_mismatches;
}

std::string AuditReport::to_json() const {
  nlohmann::json j;
  j["sequences"] = sequences;
  j["docs_complete"] = docs_complete;
  j["docs_truncated"] = docs_truncated;
  j["mask_violations"] = mask_violations;
  j["order_inversions"] = order_inversions;
  j["order_pairs"] = order_pairs;
  j["order_violations"] = order_violations;
  j["label_collisions"] = label_collisions;
  j["structure_issues"] = structure_issues;
  j["solution_mismatches"] = solution_mismatches;
  j["roundtrip_checked"] = roundtrip_checked;
  j["roundtrip_mismatches"] = roundtrip_mismatches;
  if (blind_docs_matched || blind_doc_mismatches || blind_kind_mismatches ||
      blind_undecidable_tokens || blind_docs_unresolved) {
    j["blind"] = {{"kind_mismatches", blind_kind_mismatches},
                  {"undecidable_tokens", blind_undecidable_tokens},
                  {"docs_matched", blind_docs_matched},
                  {"docs_unresolved", blind_docs_unresolved},
                  {"doc_mismatches", blind_doc_mismatches}};
  }
  nlohmann::json hist = nlohmann::json::object();
  for (auto& [h, count] : chunk_count_hist) hist[std::to_string(h)] = count;
  j["chunk_count_hist"] = hist;
  if (chunk_dist_tv) j["chunk_dist_tv"] = *chunk_dist_tv;
  if (split_fraction) j["split_fraction"] = *split_fraction;
  j["violations"] = violations();
  if (!sample_issues.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& is : sample_issues)
      arr.push_back({{"seq", is.seq_index}, {"offset", is.offset}, {"what", is.what}});
    j["sample_issues"] = arr;
  }
  return j.dump(2);
}

namespace {

struct SeqAuditAccum {
  AuditReport rep;
  std::map<uint32_t, uint64_t> eligible_hist;  // complete + eligible docs only
  uint64_t eligible_docs = 0;
  uint64_t eligible_split = 0;

  void push_sample(const IntegrityIssue& is) {
    if (rep.sample_issues.size() < kMaxSampleIssues) rep.sample_issues.push_back(is);
  }

  void merge(const SeqAuditAccum& o) {
    rep.sequences += o.rep.sequences;
    rep.docs_complete += o.rep.docs_complete;
    rep.docs_truncated += o.rep.docs_truncated;
    rep.mask_violations += o.rep.mask_violations;
    rep.order_inversions += o.rep.order_inversions;
    rep.order_pairs += o.rep.order_pairs;
    rep.label_collisions += o.rep.label_collisions;
    rep.structure_issues += o.rep.structure_issues;
    rep.solution_mismatches += o.rep.solution_mismatches;
    rep.roundtrip_checked += o.rep.roundtrip_checked;
    rep.roundtrip_mismatches += o.rep.roundtrip_mismatches;
    rep.blind_kind_mismatches += o.rep.blind_kind_mismatches;
    rep.blind_undecidable_tokens += o.rep.blind_undecidable_tokens;
    rep.blind_docs_matched += o.rep.blind_docs_matched;
    rep.blind_docs_unresolved += o.rep.blind_docs_unresolved;
    rep.blind_doc_mismatches += o.rep.blind_doc_mismatches;
    for (auto& [h, c] : o.rep.chunk_count_hist) rep.chunk_count_hist[h] += c;
    for (auto& [h, c] : o.eligible_hist) eligible_hist[h] += c;
    eligible_docs += o.eligible_docs;
    eligible_split += o.eligible_split;
    for (const auto& is : o.rep.sample_issues) push_sample(is);
  }
};

void audit_one(const PackedSequence& seq, uint64_t seq_index, const AuditOptions& options,
               SeqAuditAccum& acc) {
  SequenceAnalysis a = untie(seq, seq_index);
  ++acc.rep.sequences;
  acc.rep.mask_violations += a.mask_violations;
  acc.rep.label_collisions += a.label_collisions;
  acc.rep.order_inversions += a.order_inversions;
  acc.rep.order_pairs += a.order_pairs;
  for (const auto& is : a.issues) {
    switch (is.kind) {
      case IssueKind::structure: ++acc.rep.structure_issues; break;
      case IssueKind::solution_mismatch: ++acc.rep.solution_mismatches; break;
      case IssueKind::mask:
      case IssueKind::label_collision: break;  // counted via their own counters
    }
    acc.push_sample(is);
  }

  for (auto& [doc_id, doc] : a.docs) {
    if (doc.status == DocStatus::complete) {
      ++acc.rep.docs_complete;
      acc.rep.chunk_count_hist[doc.total_chunks]++;
      if (options.config && doc.tokens.size() >= options.config->policy.min_split_len) {
        ++acc.eligible_docs;
        acc.eligible_hist[doc.total_chunks]++;
        if (doc.total_chunks > 1) ++acc.eligible_split;
      }
      if (options.corpus) {
        auto it = options.corpus->find(doc_id);
        ++acc.rep.roundtrip_checked;
        if (it == options.corpus->end() || it->second != doc.tokens)
          ++acc.rep.roundtrip_mismatches;
      }
    } else {
      ++acc.rep.docs_truncated;
    }
  }

  if (options.blind && options.config) {
    BlindReport b = blind_check(seq, options.config->specials, options.config->policy.label_len);
    acc.rep.blind_kind_mismatches += b.kind_mismatches;
    acc.rep.blind_undecidable_tokens += b.undecidable_tokens;
    acc.rep.blind_docs_matched += b.docs_matched;
    acc.rep.blind_docs_unresolved += b.docs_unresolved;
    acc.rep.blind_doc_mismatches += b.doc_mismatches;
  }
}

void finalize(SeqAuditAccum& acc, const AuditOptions& options) {
  AuditReport& rep = acc.rep;
  if (options.config && options.config->policy.preserve_order &&
      options.config->policy.strategy == Strategy::utk) {
    rep.order_violations = rep.order_inversions;
  }
  if (options.config && acc.eligible_docs > 0) {
    const SplitPolicy& pol = options.config->policy;
    std::map<uint32_t, double> want;
    want[1] = 1.0 - pol.p_split;
    for (auto& [h, p] : pol.chunk_count_dist) want[h] += pol.p_split * p;
    double tv = 0.0;
    std::set<uint32_t> support;
    for (auto& [h, unused] : want) support.insert(h);
    for (auto& [h, unused] : acc.eligible_hist) support.insert(h);
    for (uint32_t h : support) {
      double observed = acc.eligible_hist.count(h)
                            ? double(acc.eligible_hist[h]) / double(acc.eligible_docs)
                            : 0.0;
      double expected = want.count(h) ? want[h] : 0.0;
      tv += std::abs(observed - expected);
    }
    rep.chunk_dist_tv = tv / 2.0;
    rep.split_fraction = double(acc.eligible_split) / double(acc.eligible_docs);
  }
}

}  // namespace

AuditReport audit_sequences(const std::vector<PackedSequence>& seqs, const AuditOptions& options) {
  const int workers = options.workers > 0 ? options.workers : omp_get_max_threads();
  std::vector<SeqAuditAccum> parts(workers);
  std::vector<std::exception_ptr> errors(workers);
#pragma omp parallel num_threads(workers)
  {
    int tid = omp_get_thread_num();
    try {
#pragma omp for schedule(dynamic)
      for (int64_t i = 0; i < int64_t(seqs.size()); ++i)
        audit_one(seqs[i], uint64_t(i), options, parts[tid]);
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  SeqAuditAccum total;
  for (auto& p : parts) total.merge(p);
  finalize(total, options);
  return total.rep;
}

AuditReport audit_file(const std::string& packed_path, const AuditOptions& options) {
  PackedReader reader(packed_path);
  if (!reader.has_manifest())
    throw IntegrityError(packed_path + ": no manifest sidecar; audit needs spans");
  SeqAuditAccum total;
  uint64_t seq_index = 0;
  const int workers = options.workers > 0 ? options.workers : omp_get_max_threads();
  const size_t window = size_t(workers) * 8;
  std::vector<PackedSequence> block;
  block.reserve(window);
  PackedSequence s;
  auto flush = [&]() {
    if (block.empty()) return;
    std::vector<SeqAuditAccum> parts(block.size());
    std::vector<std::exception_ptr> errors(block.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int64_t i = 0; i < int64_t(block.size()); ++i) {
      try {
        audit_one(block[i], seq_index + uint64_t(i), options, parts[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (auto& p : parts) total.merge(p);
    seq_index += block.size();
    block.clear();
  };
  while (reader.next(s)) {
    block.push_back(std::move(s));
    if (block.size() >= window) flush();
  }
  flush();
  finalize(total, options);
  return total.rep;
}

}  // namespace utk
