#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "utk/error.hpp"

namespace utk {

enum class DType { f32, bf16 };

const char* to_string(DType t);
DType dtype_from_string(const std::string& s);
inline size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 2; }

// Tracks buffer allocations so tests can assert a peak-memory bound; an
// optional hard budget turns overruns into errors.
class Workspace {
 public:
  explicit Workspace(size_t budget_bytes = 0) : budget_(budget_bytes) {}

  class Buffer {
   public:
    Buffer() = default;
    Buffer(Workspace* ws, size_t n) : ws_(ws), data_(n) { ws_->acquire(n * sizeof(float)); }
    Buffer(Buffer&& o) noexcept : ws_(o.ws_), data_(std::move(o.data_)) { o.ws_ = nullptr; }
    Buffer& operator=(Buffer&& o) noexcept {
      release();
      ws_ = o.ws_;
      data_ = std::move(o.data_);
      o.ws_ = nullptr;
      return *this;
    }
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
    ~Buffer() { release(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    size_t size() const { return data_.size(); }

   private:
    void release() {
      if (ws_) ws_->free_bytes(data_.size() * sizeof(float));
      ws_ = nullptr;
      data_ = {};
    }
    Workspace* ws_ = nullptr;
    std::vector<float> data_;
  };

  Buffer alloc(size_t n_floats) { return Buffer(this, n_floats); }
  size_t in_use() const { return in_use_; }
  size_t peak() const { return peak_; }

 private:
  friend class Buffer;
  void acquire(size_t bytes) {
    in_use_ += bytes;
    if (budget_ && in_use_ > budget_)
      throw ConfigError("workspace budget exceeded: " + std::to_string(in_use_) + " > " +
                        std::to_string(budget_) + " bytes");
    peak_ = std::max(peak_, in_use_);
  }
  void free_bytes(size_t bytes) { in_use_ -= bytes; }

  size_t budget_;
  size_t in_use_ = 0;
  size_t peak_ = 0;
};

// One layer's Q/K projections on disk, layout [head][position][dim]
// row-major little-endian, with a JSON metadata sidecar:
//   layer{N}.q.bin  layer{N}.k.bin  layer{N}.meta.json
//   meta schema: {"n_heads":H,"seq":S,"head_dim":D,"dtype":"f32"|"bf16","layer":N}
struct QkMeta {
  uint32_t n_heads = 0;
  uint32_t seq = 0;
  uint32_t head_dim = 0;
  DType dtype = DType::f32;
  uint32_t layer = 0;
};

class QkDump {
 public:
  static QkDump open(const std::string& dir, uint32_t layer);

  const QkMeta& meta() const { return meta_; }
  // One head's projections upcast to f32, [seq][head_dim]. out must hold
  // seq*head_dim floats.
  void load_q_head(uint32_t head, float* out) const;
  void load_k_head(uint32_t head, float* out) const;

 private:
  void load_head(const std::string& path, uint32_t head, float* out) const;
  QkMeta meta_;
  std::string q_path_, k_path_;
};

// Writes a dump in the layout above; q and k hold n_heads*seq*head_dim f32
// values (converted to bf16 on disk when meta says so).
void write_qk_dump(const std::string& dir, const QkMeta& meta, const float* q, const float* k);

struct AttnOptions {
  uint32_t query_tile = 1024;
  uint32_t key_tile = 4096;
  int workers = 0;
};

// Causal softmax rows [row0, row0+n_rows) of QK^T/sqrt(head_dim). out holds
// n_rows*seq floats; entries beyond the diagonal are zero. Scores stream
// through key tiles with running max tracking and an f64 denominator, so
// nothing close to seq x seq is ever resident.
void attention_rows(const float* q, const float* k, uint32_t seq, uint32_t head_dim,
                    uint32_t row0, uint32_t n_rows, const AttnOptions& opts, float* out);

namespace reference {
// Full-matrix causal softmax in double precision, serial. Oracle for the
// tiled kernel; out holds seq*seq floats.
void attention_naive(const float* q, const float* k, uint32_t seq, uint32_t head_dim, float* out);
}  // namespace reference

// Block-max-pooled attention map, scaled and clipped into [0, 1].
struct PooledMap {
  uint32_t side = 0;
  uint32_t block = 0;
  bool signed_values = false;  // diff maps
  std::vector<float> values;   // side * side, row-major

  float at(uint32_t i, uint32_t j) const { return values[size_t(i) * side + j]; }
};

// Pools a row-aligned tile of attention rows (row0 % block == 0) into
// min(1, max(0, gain * blockmax)). Blocks never straddle tiles.
void pool_and_scale(const float* rows, uint32_t row0, uint32_t n_rows, uint32_t seq,
                    uint32_t block, double gain, PooledMap& out);

// Full pipeline: tiled rows -> 16x16 block maxima -> x gain, clipped.
PooledMap compute_pooled_map(const QkDump& dump, uint32_t head, uint32_t block, double gain,
                             const AttnOptions& opts, Workspace& ws);

// Elementwise a - b; shapes must match.
PooledMap diff_map(const PooledMap& a, const PooledMap& b);

struct HeadScore {
  uint32_t layer = 0;
  uint32_t head = 0;
  double score = 0.0;  // sum of attention mass at key distance > threshold
};

// Ranks (layer, head) pairs by long-range attention mass, descending; ties
// break on (layer, head) ascending.
std::vector<HeadScore> longrange_scores(const std::string& dir,
                                        const std::vector<uint32_t>& layers, uint64_t threshold,
                                        const AttnOptions& opts, Workspace& ws);

// Map files: "UTKM" | u16 version | u16 flags (bit0 = signed) | u32 side
// | u32 block | side*side f32. PGM output is 8-bit grayscale, values x255.
void write_map(const std::string& path, const PooledMap& map);
PooledMap read_map(const std::string& path);
void write_pgm(const std::string& path, const PooledMap& map);

}  // namespace utk
