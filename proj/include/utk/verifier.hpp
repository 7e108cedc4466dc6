#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "utk/packed.hpp"
#include "utk/policy.hpp"

namespace utk {

enum class DocStatus { complete, truncated };

struct ReconstructedDoc {
  std::vector<uint32_t> tokens;  // body spans concatenated in chunk order
  DocStatus status = DocStatus::complete;
  uint32_t total_chunks = 0;
  uint32_t chunks_present = 0;
};

enum class IssueKind { structure, mask, label_collision, solution_mismatch };

struct IntegrityIssue {
  uint64_t seq_index = 0;
  uint64_t offset = 0;
  IssueKind kind = IssueKind::structure;
  std::string what;
};

// Everything a single-sequence walk can establish. untie() and audit() are
// both views of this.
struct SequenceAnalysis {
  std::map<uint64_t, ReconstructedDoc> docs;
  std::vector<IntegrityIssue> issues;  // structure/solution failures
  uint64_t mask_violations = 0;
  uint64_t label_collisions = 0;
  uint64_t order_inversions = 0;  // within-doc chunk pairs out of order
  uint64_t order_pairs = 0;       // within-doc chunk pairs observed
};

// The untying oracle: reconstructs each document's tokens from the span
// manifest and audits label/solution consistency. Throws IntegrityError only
// when the sequence carries no spans; all other failures are reported as
// issues.
SequenceAnalysis untie(const PackedSequence& seq, uint64_t seq_index = 0);

struct BlindReport {
  uint64_t positions_checked = 0;
  uint64_t kind_mismatches = 0;    // token-derived role disagrees with manifest
  uint64_t undecidable_tokens = 0; // regions where the token stream is ambiguous
  uint64_t docs_matched = 0;       // solution-guided reconstructions that check out
  uint64_t docs_unresolved = 0;    // solution references a chunk that is gone
  uint64_t doc_mismatches = 0;
};

// Re-derives span structure purely from special tokens and cross-checks the
// manifest; follows solution blocks to reconstruct documents the way the
// trained model would. Best-effort: truncated structures become undecidable
// regions, not guesses.
BlindReport blind_check(const PackedSequence& seq, const SpecialTokens& specials,
                        uint32_t label_len);

struct AuditReport {
  uint64_t sequences = 0;
  uint64_t docs_complete = 0;
  uint64_t docs_truncated = 0;
  uint64_t mask_violations = 0;
  uint64_t order_inversions = 0;
  uint64_t order_pairs = 0;
  uint64_t order_violations = 0;  // inversions, counted only under preserve_order
  uint64_t label_collisions = 0;
  uint64_t structure_issues = 0;
  uint64_t solution_mismatches = 0;
  uint64_t roundtrip_checked = 0;
  uint64_t roundtrip_mismatches = 0;
  uint64_t blind_kind_mismatches = 0;
  uint64_t blind_undecidable_tokens = 0;
  uint64_t blind_docs_matched = 0;
  uint64_t blind_docs_unresolved = 0;
  uint64_t blind_doc_mismatches = 0;

  std::map<uint32_t, uint64_t> chunk_count_hist;  // complete docs, by h
  // Distribution diagnostics over complete documents that were eligible for
  // splitting (raw length >= min_split_len); set when a policy is supplied.
  std::optional<double> chunk_dist_tv;
  std::optional<double> split_fraction;

  std::vector<IntegrityIssue> sample_issues;  // first few, for diagnostics

  uint64_t violations() const;
  std::string to_json() const;
};

struct AuditOptions {
  const Config* config = nullptr;  // enables TV distance, order gating, blind mode
  bool blind = false;
  // When set, complete documents are compared byte-for-byte against the
  // original corpus.
  const std::unordered_map<uint64_t, std::vector<uint32_t>>* corpus = nullptr;
  int workers = 0;
};

AuditReport audit_sequences(const std::vector<PackedSequence>& seqs, const AuditOptions& options);
AuditReport audit_file(const std::string& packed_path, const AuditOptions& options);

}  // namespace utk
