#include <numeric>

#include "doctest.h"
#include "test_helpers.hpp"
#include "utk/diststats.hpp"
#include "utk/packer.hpp"

using namespace utk;

namespace {

uint64_t brute_pairs_at(uint64_t a0, uint64_t a1, uint64_t b0, uint64_t b1, uint64_t d) {
  uint64_t n = 0;
  for (uint64_t i = a0; i < a1; ++i)
    for (uint64_t j = b0; j < b1; ++j)
      if (j - i == d) ++n;
  return n;
}

std::vector<PackedSequence> fuzz_packings(uint64_t seed, uint32_t seq_len, size_t n_docs) {
  Config cfg = test::small_config();
  cfg.policy.min_split_len = 128;
  auto docs = test::make_corpus(n_docs, 16, seq_len / 2, seed, cfg.vocab_size);
  VectorDocumentStream stream(docs);
  PackOptions opt;
  opt.seq_len = seq_len;
  opt.workers = 1;
  return pack_to_vector(stream, cfg, opt, Seed128{seed, 99});
}

}  // namespace

TEST_SUITE("diststats") {
  TEST_CASE("single pair at its one distance") {
    CHECK(pair_count_at_distance(0, 1, 5, 6, 5) == 1);
    for (uint64_t d = 1; d < 12; ++d)
      if (d != 5) CHECK(pair_count_at_distance(0, 1, 5, 6, d) == 0);
  }

  TEST_CASE("adjacent length-3 spans count 1,2,3,2,1") {
    std::vector<uint64_t> want = {1, 2, 3, 2, 1};
    for (uint64_t d = 1; d <= 5; ++d) CHECK(pair_count_at_distance(0, 3, 3, 6, d) == want[d - 1]);
    CHECK(pair_count_at_distance(0, 3, 3, 6, 6) == 0);
  }

  TEST_CASE("overlapping spans are rejected") {
    CHECK_THROWS_AS(pair_count_at_distance(0, 4, 3, 6, 1), ConfigError);
    CHECK_THROWS_AS(pair_count_in_range(0, 4, 3, 6, 1, 2), ConfigError);
  }

  TEST_CASE("closed form equals brute force on random span pairs") {
    PhiloxRng rng(Seed128{13, 13}, RngDomain::fixture, 0);
    for (int it = 0; it < 500; ++it) {
      uint64_t a0 = rng.below(100);
      uint64_t a1 = a0 + 1 + rng.below(40);
      uint64_t b0 = a1 + rng.below(30);
      uint64_t b1 = b0 + 1 + rng.below(40);
      for (uint64_t d = 1; d <= b1; ++d)
        CHECK(pair_count_at_distance(a0, a1, b0, b1, d) == brute_pairs_at(a0, a1, b0, b1, d));
    }
  }

  TEST_CASE("range sum equals the sum of per-distance counts") {
    PhiloxRng rng(Seed128{14, 14}, RngDomain::fixture, 0);
    for (int it = 0; it < 500; ++it) {
      uint64_t a0 = rng.below(50);
      uint64_t a1 = a0 + 1 + rng.below(30);
      uint64_t b0 = a1 + rng.below(20);
      uint64_t b1 = b0 + 1 + rng.below(30);
      uint64_t lo = 1 + rng.below(b1 + 2);
      uint64_t hi = lo + rng.below(b1 + 2);
      uint64_t direct = 0;
      for (uint64_t d = lo; d < hi; ++d) direct += pair_count_at_distance(a0, a1, b0, b1, d);
      CHECK(pair_count_in_range(a0, a1, b0, b1, lo, hi) == direct);
    }
  }

  TEST_CASE("self pair range sum matches the triangular identity") {
    for (uint64_t len : {1ull, 2ull, 7ull, 64ull}) {
      for (uint64_t lo = 0; lo <= len + 2; ++lo) {
        for (uint64_t hi = lo; hi <= len + 3; ++hi) {
          uint64_t direct = 0;
          for (uint64_t d = std::max<uint64_t>(lo, 1); d < hi && d < len; ++d) direct += len - d;
          CHECK(self_pair_count_in_range(len, lo, hi) == direct);
        }
      }
    }
  }

  TEST_CASE("one unsplit doc gives count(d) = L - d") {
    const uint64_t L = 12;
    PackedSequence seq;
    seq.tokens.assign(L, 1);
    seq.loss_mask.assign(L, 1);
    ChunkSpan sp;
    sp.doc_id = 0;
    sp.chunk_index = 1;
    sp.total_chunks = 1;
    sp.start = 0;
    sp.end = L;
    sp.kind = SpanKind::body;
    seq.spans.push_back(sp);
    std::vector<uint64_t> edges(L);
    std::iota(edges.begin(), edges.end(), 1);  // unit bins over [1, L)
    auto hist = histogram({seq}, edges, PairScope::intra_doc_all);
    for (uint64_t d = 1; d < L; ++d) CHECK(hist.counts[d - 1] == L - d);
    CHECK(hist.total_pairs == L * (L - 1) / 2);
  }

  TEST_CASE("closed-form histogram equals brute force on packings") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      auto seqs = fuzz_packings(300 + seed, 1024, 30);
      auto edges = linear_edges(16, 1024);
      for (PairScope scope : {PairScope::intra_doc_cross_chunk, PairScope::intra_doc_all,
                              PairScope::all_pairs}) {
        for (bool structural : {false, true}) {
          auto fast = histogram(seqs, edges, scope, structural);
          auto brute = reference::histogram_brute(seqs, edges, scope, structural);
          CHECK(fast.counts == brute.counts);
          CHECK(fast.total_pairs == brute.total_pairs);
        }
      }
    }
  }

  TEST_CASE("histogram total matches the analytic span-length sum") {
    auto seqs = fuzz_packings(333, 2048, 60);
    auto edges = linear_edges(8, 2048);
    auto hist = histogram(seqs, edges, PairScope::intra_doc_all);
    // Independent route: sum lenA*lenB over same-doc span pairs plus the
    // within-span triangular counts, from span lengths alone.
    uint64_t want = 0;
    for (const auto& seq : seqs) {
      std::vector<const ChunkSpan*> body;
      for (const auto& sp : seq.spans)
        if (sp.kind == SpanKind::body) body.push_back(&sp);
      for (size_t i = 0; i < body.size(); ++i) {
        uint64_t len = body[i]->len();
        want += len * (len - 1) / 2;
        for (size_t j = i + 1; j < body.size(); ++j)
          if (body[i]->doc_id == body[j]->doc_id) want += len * body[j]->len();
      }
    }
    CHECK(hist.total_pairs == want);
    uint64_t counted = std::accumulate(hist.counts.begin(), hist.counts.end(), uint64_t(0));
    CHECK(counted == hist.total_pairs);
  }

  TEST_CASE("scope monotonicity binwise") {
    auto seqs = fuzz_packings(444, 1024, 40);
    auto edges = linear_edges(16, 1024);
    auto cross = histogram(seqs, edges, PairScope::intra_doc_cross_chunk);
    auto intra = histogram(seqs, edges, PairScope::intra_doc_all);
    auto all = histogram(seqs, edges, PairScope::all_pairs);
    for (size_t b = 0; b < cross.counts.size(); ++b) {
      CHECK(cross.counts[b] <= intra.counts[b]);
      CHECK(intra.counts[b] <= all.counts[b]);
    }
  }

  TEST_CASE("histogram is worker-count independent") {
    auto seqs = fuzz_packings(555, 1024, 40);
    auto edges = linear_edges(10, 1024);
    auto a = histogram(seqs, edges, PairScope::intra_doc_all, false, 1);
    auto b = histogram(seqs, edges, PairScope::intra_doc_all, false, 4);
    CHECK(a.counts == b.counts);
  }

  TEST_CASE("augmented packing fills distance deciles the plain one cannot reach") {
    Config cfg = test::small_config();
    const uint32_t seq_len = 8192;
    // Max doc length below seq_len/2 keeps plain intra-doc distances short.
    auto docs = test::make_corpus(400, 64, 3000, 666, cfg.vocab_size);

    auto pack_with = [&](Strategy s) {
      Config c = cfg;
      c.policy.strategy = s;
      VectorDocumentStream stream(docs);
      PackOptions opt;
      opt.seq_len = seq_len;
      opt.workers = 2;
      return pack_to_vector(stream, c, opt, Seed128{1, 666});
    };
    auto edges = linear_edges(10, seq_len);
    auto utk_hist = histogram(pack_with(Strategy::utk), edges, PairScope::intra_doc_all);
    auto plain_hist = histogram(pack_with(Strategy::none), edges, PairScope::intra_doc_all);
    for (size_t b = 0; b < 10; ++b) CHECK(utk_hist.counts[b] > 0);
    // Plain packing cannot produce intra-doc distances beyond the longest doc.
    for (size_t b = 5; b < 10; ++b) CHECK(plain_hist.counts[b] == 0);
  }

  TEST_CASE("bin spec parsing") {
    CHECK(parse_bin_spec("4", 1024) == linear_edges(4, 1024));
    CHECK(parse_bin_spec("log:8", 1024) == log_edges(8, 1024));
    CHECK(parse_bin_spec("1,64,256", 1024) == std::vector<uint64_t>{1, 64, 256, 1024});
    CHECK_THROWS_AS(parse_bin_spec("0,5", 64), ConfigError);
    CHECK_THROWS_AS(parse_bin_spec("5,5", 64), ConfigError);
    auto edges = log_edges(8, 131072);
    CHECK(edges.front() == 1);
    CHECK(edges.back() == 131072);
  }

  TEST_CASE("csv and gnuplot output carry every bin") {
    auto seqs = fuzz_packings(777, 512, 10);
    auto hist = histogram(seqs, linear_edges(4, 512), PairScope::intra_doc_all);
    std::string csv = hist.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 bins
    std::string gp = hist.to_gnuplot();
    CHECK(std::count(gp.begin(), gp.end(), '\n') == 5);
    CHECK(hist.to_json().find("total_pairs") != std::string::npos);
  }
}
