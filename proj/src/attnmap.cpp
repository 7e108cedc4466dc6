#include "utk/attnmap.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace utk {

const char* to_string(DType t) { return t == DType::f32 ? "f32" : "bf16"; }

DType dtype_from_string(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "bf16") return DType::bf16;
  throw ConfigError("unknown dtype \"" + s + "\" (expected f32|bf16)");
}

namespace {

std::string meta_path(const std::string& dir, uint32_t layer) {
  return dir + "/layer" + std::to_string(layer) + ".meta.json";
}
std::string bin_path(const std::string& dir, uint32_t layer, char which) {
  return dir + "/layer" + std::to_string(layer) + "." + which + ".bin";
}

uint64_t file_size(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open: " + path);
  return uint64_t(f.tellg());
}

uint16_t f32_to_bf16(float v) {
  uint32_t x = std::bit_cast<uint32_t>(v);
  uint32_t lsb = (x >> 16) & 1;
  x += 0x7fff + lsb;  // round to nearest even
  return uint16_t(x >> 16);
}

float bf16_to_f32(uint16_t v) { return std::bit_cast<float>(uint32_t(v) << 16); }

}  // namespace

QkDump QkDump::open(const std::string& dir, uint32_t layer) {
  QkDump d;
  std::ifstream meta_in(meta_path(dir, layer));
  if (!meta_in) throw IoError("missing metadata: " + meta_path(dir, layer));
  nlohmann::json j;
  try {
    meta_in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(meta_path(dir, layer) + ": " + e.what());
  }
  d.meta_.n_heads = j.at("n_heads").get<uint32_t>();
  d.meta_.seq = j.at("seq").get<uint32_t>();
  d.meta_.head_dim = j.at("head_dim").get<uint32_t>();
  d.meta_.dtype = dtype_from_string(j.at("dtype").get<std::string>());
  d.meta_.layer = j.value<uint32_t>("layer", layer);
  d.q_path_ = bin_path(dir, layer, 'q');
  d.k_path_ = bin_path(dir, layer, 'k');

  uint64_t want = uint64_t(d.meta_.n_heads) * d.meta_.seq * d.meta_.head_dim *
                  dtype_size(d.meta_.dtype);
  for (const std::string& p : {d.q_path_, d.k_path_}) {
    uint64_t got = file_size(p);
    if (got != want)
      throw FormatError(p + ": size " + std::to_string(got) + " does not match metadata (" +
                        std::to_string(want) + " bytes)");
  }
  return d;
}

void QkDump::load_head(const std::string& path, uint32_t head, float* out) const {
  if (head >= meta_.n_heads)
    throw ConfigError("head " + std::to_string(head) + " out of range (n_heads=" +
                      std::to_string(meta_.n_heads) + ")");
  const size_t elems = size_t(meta_.seq) * meta_.head_dim;
  const size_t esize = dtype_size(meta_.dtype);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  f.seekg(std::streamoff(uint64_t(head) * elems * esize));
  if (meta_.dtype == DType::f32) {
    f.read(reinterpret_cast<char*>(out), std::streamsize(elems * 4));
    if (size_t(f.gcount()) != elems * 4) throw FormatError(path + ": short read");
  } else {
    std::vector<uint16_t> raw(elems);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(elems * 2));
    if (size_t(f.gcount()) != elems * 2) throw FormatError(path + ": short read");
    for (size_t i = 0; i < elems; ++i) out[i] = bf16_to_f32(raw[i]);
  }
}

void QkDump::load_q_head(uint32_t head, float* out) const { load_head(q_path_, head, out); }
void QkDump::load_k_head(uint32_t head, float* out) const { load_head(k_path_, head, out); }

void write_qk_dump(const std::string& dir, const QkMeta& meta, const float* q, const float* k) {
  const size_t elems = size_t(meta.n_heads) * meta.seq * meta.head_dim;
  for (char which : {'q', 'k'}) {
    const float* src = which == 'q' ? q : k;
    std::ofstream f(bin_path(dir, meta.layer, which), std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + bin_path(dir, meta.layer, which));
    if (meta.dtype == DType::f32) {
      f.write(reinterpret_cast<const char*>(src), std::streamsize(elems * 4));
    } else {
      std::vector<uint16_t> raw(elems);
      for (size_t i = 0; i < elems; ++i) raw[i] = f32_to_bf16(src[i]);
      f.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(elems * 2));
    }
    if (!f) throw IoError("write failed: " + bin_path(dir, meta.layer, which));
  }
  nlohmann::json j;
  j["n_heads"] = meta.n_heads;
  j["seq"] = meta.seq;
  j["head_dim"] = meta.head_dim;
  j["dtype"] = to_string(meta.dtype);
  j["layer"] = meta.layer;
  std::ofstream mf(meta_path(dir, meta.layer), std::ios::trunc);
  if (!mf) throw IoError("cannot open for write: " + meta_path(dir, meta.layer));
  mf << j.dump(2) << "\n";
}

void attention_rows(const float* q, const float* k, uint32_t seq, uint32_t head_dim,
                    uint32_t row0, uint32_t n_rows, const AttnOptions& opts, float* out) {
  if (row0 + n_rows > seq) throw ConfigError("row tile outside [0, seq)");
  const float scale = 1.0f / std::sqrt(float(head_dim));
  const uint32_t key_tile = std::max<uint32_t>(opts.key_tile, 1);
  const int workers = opts.workers > 0 ? opts.workers : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 8) num_threads(workers)
  for (int64_t r = 0; r < int64_t(n_rows); ++r) {
    const uint32_t i = row0 + uint32_t(r);
    const uint32_t n_keys = i + 1;  // causal
    const float* qi = q + size_t(i) * head_dim;
    float* row = out + size_t(r) * seq;

    // Score pass, tiled over keys, tracking the running max.
    float m = -std::numeric_limits<float>::infinity();
    for (uint32_t t0 = 0; t0 < n_keys; t0 += key_tile) {
      const uint32_t t1 = std::min(t0 + key_tile, n_keys);
      for (uint32_t j = t0; j < t1; ++j) {
        const float* kj = k + size_t(j) * head_dim;
        float dot = 0.0f;
        for (uint32_t dd = 0; dd < head_dim; ++dd) dot += qi[dd] * kj[dd];
        const float s = dot * scale;
        row[j] = s;
        if (s > m) m = s;
      }
    }
    // Exponentials with an f64 denominator, then normalize in place.
    double z = 0.0;
    for (uint32_t j = 0; j < n_keys; ++j) {
      const float e = std::exp(row[j] - m);
      row[j] = e;
      z += double(e);
    }
    const double inv = 1.0 / z;
    for (uint32_t j = 0; j < n_keys; ++j) row[j] = float(double(row[j]) * inv);
    std::memset(row + n_keys, 0, size_t(seq - n_keys) * sizeof(float));
  }
}

namespace reference {

void attention_naive(const float* q, const float* k, uint32_t seq, uint32_t head_dim,
                     float* out) {
  const double scale = 1.0 / std::sqrt(double(head_dim));
  std::vector<double> scores(seq);
  for (uint32_t i = 0; i < seq; ++i) {
    float* row = out + size_t(i) * seq;
    double m = -std::numeric_limits<double>::infinity();
    for (uint32_t j = 0; j <= i; ++j) {
      double dot = 0.0;
      for (uint32_t dd = 0; dd < head_dim; ++dd)
        dot += double(q[size_t(i) * head_dim + dd]) * double(k[size_t(j) * head_dim + dd]);
      scores[j] = dot * scale;
      m = std::max(m, scores[j]);
    }
    double z = 0.0;
    for (uint32_t j = 0; j <= i; ++j) z += std::exp(scores[j] - m);
    for (uint32_t j = 0; j <= i; ++j) row[j] = float(std::exp(scores[j] - m) / z);
    for (uint32_t j = i + 1; j < seq; ++j) row[j] = 0.0f;
  }
}

}  // namespace reference

void pool_and_scale(const float* rows, uint32_t row0, uint32_t n_rows, uint32_t seq,
                    uint32_t block, double gain, PooledMap& out) {
  if (block == 0) throw ConfigError("block must be >= 1");
  if (row0 % block != 0) throw ConfigError("row tile must be block-aligned");
  const uint32_t side = uint32_t((uint64_t(seq) + block - 1) / block);
  if (out.side == 0) {
    out.side = side;
    out.block = block;
    out.values.assign(size_t(side) * side, 0.0f);
  } else if (out.side != side || out.block != block) {
    throw ConfigError("pooled map shape mismatch");
  }

  std::vector<float> block_max(side);
  for (uint32_t r0 = 0; r0 < n_rows; r0 += block) {
    const uint32_t br = (row0 + r0) / block;
    const uint32_t r1 = std::min(r0 + block, n_rows);
    std::fill(block_max.begin(), block_max.end(), 0.0f);
    for (uint32_t r = r0; r < r1; ++r) {
      const uint32_t i = row0 + r;
      const float* row = rows + size_t(r) * seq;
      const uint32_t n_keys = std::min(i + 1, seq);
      for (uint32_t j = 0; j < n_keys; ++j) {
        const uint32_t bj = j / block;
        if (row[j] > block_max[bj]) block_max[bj] = row[j];
      }
    }
    float* dst = out.values.data() + size_t(br) * side;
    for (uint32_t bj = 0; bj < side; ++bj) {
      double v = gain * double(block_max[bj]);
      dst[bj] = float(std::min(1.0, std::max(0.0, v)));
    }
  }
}

PooledMap compute_pooled_map(const QkDump& dump, uint32_t head, uint32_t block, double gain,
                             const AttnOptions& opts, Workspace& ws) {
  const QkMeta& m = dump.meta();
  uint32_t query_tile = std::max<uint32_t>(opts.query_tile, block);
  query_tile -= query_tile % block;  // blocks never straddle tiles

  Workspace::Buffer q = ws.alloc(size_t(m.seq) * m.head_dim);
  Workspace::Buffer k = ws.alloc(size_t(m.seq) * m.head_dim);
  dump.load_q_head(head, q.data());
  dump.load_k_head(head, k.data());
  Workspace::Buffer rows = ws.alloc(size_t(query_tile) * m.seq);

  PooledMap map;
  for (uint32_t row0 = 0; row0 < m.seq; row0 += query_tile) {
    const uint32_t n_rows = std::min(query_tile, m.seq - row0);
    attention_rows(q.data(), k.data(), m.seq, m.head_dim, row0, n_rows, opts, rows.data());
    pool_and_scale(rows.data(), row0, n_rows, m.seq, block, gain, map);
  }
  return map;
}

PooledMap diff_map(const PooledMap& a, const PooledMap& b) {
  if (a.side != b.side || a.block != b.block)
    throw ConfigError("diff_map: shape mismatch (" + std::to_string(a.side) + " vs " +
                      std::to_string(b.side) + ")");
  PooledMap d;
  d.side = a.side;
  d.block = a.block;
  d.signed_values = true;
  d.values.resize(a.values.size());
  for (size_t i = 0; i < a.values.size(); ++i) d.values[i] = a.values[i] - b.values[i];
  return d;
}

std::vector<HeadScore> longrange_scores(const std::string& dir,
                                        const std::vector<uint32_t>& layers, uint64_t threshold,
                                        const AttnOptions& opts, Workspace& ws) {
  std::vector<HeadScore> scores;
  for (uint32_t layer : layers) {
    QkDump dump = QkDump::open(dir, layer);
    const QkMeta& m = dump.meta();
    const uint32_t query_tile = std::max<uint32_t>(opts.query_tile, 1);

    Workspace::Buffer q = ws.alloc(size_t(m.seq) * m.head_dim);
    Workspace::Buffer k = ws.alloc(size_t(m.seq) * m.head_dim);
    Workspace::Buffer rows = ws.alloc(size_t(query_tile) * m.seq);

    for (uint32_t head = 0; head < m.n_heads; ++head) {
      dump.load_q_head(head, q.data());
      dump.load_k_head(head, k.data());
      // Per-row partial sums, reduced serially: the ranking must not depend
      // on thread scheduling.
      std::vector<double> row_mass(m.seq, 0.0);
      for (uint32_t row0 = 0; row0 < m.seq; row0 += query_tile) {
        const uint32_t n_rows = std::min(query_tile, m.seq - row0);
        attention_rows(q.data(), k.data(), m.seq, m.head_dim, row0, n_rows, opts, rows.data());
        const int workers = opts.workers > 0 ? opts.workers : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(workers)
        for (int64_t r = 0; r < int64_t(n_rows); ++r) {
          const uint64_t i = row0 + uint64_t(r);
          if (i <= threshold) continue;  // no key farther than threshold
          const float* row = rows.data() + size_t(r) * m.seq;
          const uint64_t n_far = i - threshold;  // keys j with i - j > threshold
          double s = 0.0;
          for (uint64_t j = 0; j < n_far; ++j) s += double(row[j]);
          row_mass[i] = s;
        }
      }
      double total = 0.0;
      for (double v : row_mass) total += v;
      scores.push_back({layer, head, total});
    }
  }
  std::stable_sort(scores.begin(), scores.end(), [](const HeadScore& a, const HeadScore& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.head < b.head;
  });
  return scores;
}

namespace {
constexpr char kMapMagic[4] = {'U', 'T', 'K', 'M'};
constexpr uint16_t kMapVersion = 1;
}  // namespace

void write_map(const std::string& path, const PooledMap& map) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path);
  uint16_t version = kMapVersion;
  uint16_t flags = map.signed_values ? 1 : 0;
  f.write(kMapMagic, 4);
  f.write(reinterpret_cast<const char*>(&version), 2);
  f.write(reinterpret_cast<const char*>(&flags), 2);
  f.write(reinterpret_cast<const char*>(&map.side), 4);
  f.write(reinterpret_cast<const char*>(&map.block), 4);
  f.write(reinterpret_cast<const char*>(map.values.data()),
          std::streamsize(map.values.size() * 4));
  if (!f) throw IoError("write failed: " + path);
}

PooledMap read_map(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[4];
  uint16_t version = 0, flags = 0;
  PooledMap map;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 2);
  f.read(reinterpret_cast<char*>(&flags), 2);
  f.read(reinterpret_cast<char*>(&map.side), 4);
  f.read(reinterpret_cast<char*>(&map.block), 4);
  if (!f || std::memcmp(magic, kMapMagic, 4) != 0) throw FormatError(path + ": bad map header");
  if (version != kMapVersion) throw FormatError(path + ": unsupported map version");
  map.signed_values = flags & 1;
  map.values.resize(size_t(map.side) * map.side);
  f.read(reinterpret_cast<char*>(map.values.data()), std::streamsize(map.values.size() * 4));
  if (size_t(f.gcount()) != map.values.size() * 4) throw FormatError(path + ": truncated map");
  return map;
}

void write_pgm(const std::string& path, const PooledMap& map) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path);
  f << "P5\n" << map.side << " " << map.side << "\n255\n";
  std::vector<uint8_t> bytes(map.values.size());
  for (size_t i = 0; i < map.values.size(); ++i) {
    float v = map.values[i];
    if (map.signed_values) v = (v + 1.0f) * 0.5f;  // [-1,1] -> [0,1]
    v = std::min(1.0f, std::max(0.0f, v));
    bytes[i] = uint8_t(std::lround(v * 255.0f));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace utk
