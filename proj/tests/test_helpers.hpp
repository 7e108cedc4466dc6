#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "utk/corpus.hpp"
#include "utk/policy.hpp"
#include "utk/rng.hpp"

namespace utk::test {

// Synthetic corpus with deterministic content: token at position p of doc d
// is a Philox draw, so any reconstruction error is content-visible.
inline std::vector<Document> make_corpus(size_t n_docs, uint64_t len_lo, uint64_t len_hi,
                                         uint64_t seed, uint32_t vocab = 65536) {
  std::vector<Document> docs;
  docs.reserve(n_docs);
  for (size_t d = 0; d < n_docs; ++d) {
    PhiloxRng rng(Seed128{0, seed}, RngDomain::fixture, d);
    Document doc;
    doc.doc_id = d;
    uint64_t len = len_lo + rng.below(len_hi - len_lo + 1);
    doc.tokens.resize(len);
    for (auto& t : doc.tokens) t = uint32_t(rng.below(vocab));
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline std::map<uint64_t, std::vector<uint32_t>> corpus_index(const std::vector<Document>& docs) {
  std::map<uint64_t, std::vector<uint32_t>> m;
  for (const auto& d : docs) m[d.doc_id] = d.tokens;
  return m;
}

// Pearson chi-square statistic against expected probabilities.
inline double chi_square(const std::vector<uint64_t>& observed,
                         const std::vector<double>& expected_prob) {
  uint64_t n = 0;
  for (uint64_t o : observed) n += o;
  double stat = 0.0;
  for (size_t i = 0; i < observed.size(); ++i) {
    double e = expected_prob[i] * double(n);
    double d = double(observed[i]) - e;
    stat += d * d / e;
  }
  return stat;
}

// chi-square 0.99 quantiles, indexed by degrees of freedom
inline double chi2_crit_99(uint32_t df) {
  switch (df) {
    case 5: return 15.086;
    case 8: return 20.090;
    case 14: return 29.141;
    case 20: return 37.566;
    default: return 0.0;  // extend the table as tests need it
  }
}

inline Config small_config() {
  Config cfg;
  cfg.vocab_size = 65536;
  cfg.policy.p_split = 0.8;
  cfg.policy.chunk_count_dist = {{2, 0.5}, {3, 0.5}};
  cfg.policy.max_h = 8;
  cfg.policy.min_split_len = 256;
  cfg.policy.min_chunk_len = 16;
  cfg.policy.label_len = 4;
  cfg.policy.label_pool = LabelPool{256, 4096, {}};
  cfg.specials = SpecialTokens::default_layout(cfg.vocab_size, cfg.policy.max_h);
  return cfg;
}

}  // namespace utk::test
