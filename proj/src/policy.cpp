#include "utk/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace utk {

using nlohmann::json;

uint32_t SpecialTokens::head_knot(uint32_t j) const {
  if (j < 2 || j > max_h()) throw ConfigError("head knot index out of range: " + std::to_string(j));
  return head_knots[j - 2];
}

uint32_t SpecialTokens::tail_knot(uint32_t j) const {
  if (j < 1 || j >= max_h()) throw ConfigError("tail knot index out of range: " + std::to_string(j));
  return tail_knots[j - 1];
}

int SpecialTokens::head_knot_index(uint32_t id) const {
  for (size_t i = 0; i < head_knots.size(); ++i)
    if (head_knots[i] == id) return int(i) + 2;
  return -1;
}

int SpecialTokens::tail_knot_index(uint32_t id) const {
  for (size_t i = 0; i < tail_knots.size(); ++i)
    if (tail_knots[i] == id) return int(i) + 1;
  return -1;
}

bool SpecialTokens::is_special(uint32_t id) const {
  if (id == pad || id == cl_open || id == cl_close || id == sol_open || id == sol_sep ||
      id == sol_close)
    return true;
  return head_knot_index(id) >= 0 || tail_knot_index(id) >= 0;
}

std::vector<uint32_t> SpecialTokens::all_ids() const {
  std::vector<uint32_t> ids = {pad, cl_open, cl_close, sol_open, sol_sep, sol_close};
  ids.insert(ids.end(), head_knots.begin(), head_knots.end());
  ids.insert(ids.end(), tail_knots.begin(), tail_knots.end());
  return ids;
}

SpecialTokens SpecialTokens::default_layout(uint32_t reserved_base, uint32_t max_h) {
  if (max_h < 2) throw ConfigError("max_h must be >= 2");
  SpecialTokens st;
  st.reserved_base = reserved_base;
  uint32_t next = reserved_base;
  st.pad = next++;
  st.cl_open = next++;
  st.cl_close = next++;
  st.sol_open = next++;
  st.sol_sep = next++;
  st.sol_close = next++;
  for (uint32_t j = 2; j <= max_h; ++j) st.head_knots.push_back(next++);
  for (uint32_t j = 1; j < max_h; ++j) st.tail_knots.push_back(next++);
  return st;
}

void SpecialTokens::validate() const {
  auto ids = all_ids();
  std::unordered_set<uint32_t> seen;
  for (uint32_t id : ids) {
    if (id < reserved_base)
      throw ConfigError("special token id " + std::to_string(id) + " below reserved_base " +
                        std::to_string(reserved_base));
    if (!seen.insert(id).second)
      throw ConfigError("special token id " + std::to_string(id) + " assigned twice");
  }
  if (head_knots.size() != tail_knots.size())
    throw ConfigError("head/tail knot tables must have equal size");
  if (head_knots.empty()) throw ConfigError("knot tables empty (max_h < 2)");
}

bool LabelPool::contains(uint32_t id) const {
  if (ids.empty()) return id >= start && id < start + count;
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::utk: return "utk";
    case Strategy::cip: return "cip";
    case Strategy::none: return "none";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "utk") return Strategy::utk;
  if (s == "cip") return Strategy::cip;
  if (s == "none") return Strategy::none;
  throw ConfigError("unknown strategy \"" + s + "\" (expected utk|cip|none)");
}

uint64_t SplitPolicy::label_capacity() const {
  uint64_t pool = label_pool.size();
  if (pool == 0 || label_len == 0) return 0;
  uint64_t cap = 1;
  for (uint32_t i = 0; i < label_len; ++i) {
    if (cap > UINT64_MAX / pool) return UINT64_MAX;  // saturate
    cap *= pool;
  }
  return cap;
}

void SplitPolicy::validate(const SpecialTokens& specials) const {
  if (p_split < 0.0 || p_split > 1.0) throw ConfigError("p_split must be in [0,1]");
  if (max_h < 2) throw ConfigError("max_h must be >= 2");
  if (min_chunk_len < 1) throw ConfigError("min_chunk_len must be >= 1");
  if (uint64_t(min_split_len) < uint64_t(max_h) * min_chunk_len)
    throw ConfigError("min_split_len must be >= max_h * min_chunk_len");
  if (chunk_count_dist.empty()) throw ConfigError("chunk_count_dist is empty");
  double sum = 0.0;
  for (auto& [h, p] : chunk_count_dist) {
    if (h < 2 || h > max_h)
      throw ConfigError("chunk_count_dist support " + std::to_string(h) + " outside [2, max_h]");
    if (p < 0.0) throw ConfigError("chunk_count_dist has negative mass");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("chunk_count_dist must sum to 1 within 1e-9");
  if (label_len == 0) throw ConfigError("label_len must be >= 1");
  if (label_pool.size() == 0) throw ConfigError("label_pool is empty");
  for (uint64_t i = 0; i < label_pool.size(); ++i) {
    if (specials.is_special(label_pool.at(i)))
      throw ConfigError("label_pool overlaps special token " + std::to_string(label_pool.at(i)));
  }
}

Config Config::defaults() {
  Config cfg;
  cfg.specials = SpecialTokens::default_layout(cfg.vocab_size, cfg.policy.max_h);
  return cfg;
}

void Config::validate() const {
  specials.validate();
  policy.validate(specials);
  if (specials.reserved_base < vocab_size)
    throw ConfigError("reserved_base must be >= vocab_size so specials stay out of the corpus");
  if (specials.max_h() < policy.max_h)
    throw ConfigError("knot tables cover max_h=" + std::to_string(specials.max_h()) +
                      " but policy.max_h=" + std::to_string(policy.max_h));
  for (uint64_t i = 0; i < policy.label_pool.size(); ++i) {
    if (policy.label_pool.at(i) >= vocab_size)
      throw ConfigError("label_pool id " + std::to_string(policy.label_pool.at(i)) +
                        " outside corpus vocabulary");
  }
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

}  // namespace

Config Config::from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  Config cfg;
  cfg.vocab_size = get_or<uint32_t>(j, "vocab_size", cfg.vocab_size);

  SplitPolicy& p = cfg.policy;
  p.p_split = get_or<double>(j, "p_split", p.p_split);
  p.max_h = get_or<uint32_t>(j, "max_h", p.max_h);
  p.min_split_len = get_or<uint32_t>(j, "min_split_len", p.min_split_len);
  p.min_chunk_len = get_or<uint32_t>(j, "min_chunk_len", p.min_chunk_len);
  p.label_len = get_or<uint32_t>(j, "label_len", p.label_len);
  p.preserve_order = get_or<bool>(j, "preserve_order", p.preserve_order);
  if (j.contains("strategy")) p.strategy = strategy_from_string(j["strategy"].get<std::string>());

  if (j.contains("chunk_count_dist")) {
    p.chunk_count_dist.clear();
    for (auto& [key, val] : j["chunk_count_dist"].items()) {
      p.chunk_count_dist.emplace_back(uint32_t(std::stoul(key)), val.get<double>());
    }
    std::sort(p.chunk_count_dist.begin(), p.chunk_count_dist.end());
  }

  if (j.contains("label_pool")) {
    const json& lp = j["label_pool"];
    p.label_pool = LabelPool{};
    if (lp.is_array()) {
      p.label_pool.ids = lp.get<std::vector<uint32_t>>();
    } else {
      p.label_pool.start = get_or<uint32_t>(lp, "start", p.label_pool.start);
      p.label_pool.count = get_or<uint32_t>(lp, "count", p.label_pool.count);
    }
  }

  if (j.contains("special_tokens")) {
    const json& st = j["special_tokens"];
    uint32_t base = get_or<uint32_t>(st, "reserved_base", cfg.vocab_size);
    SpecialTokens t = SpecialTokens::default_layout(base, p.max_h);
    t.pad = get_or<uint32_t>(st, "pad", t.pad);
    t.cl_open = get_or<uint32_t>(st, "cl_open", t.cl_open);
    t.cl_close = get_or<uint32_t>(st, "cl_close", t.cl_close);
    t.sol_open = get_or<uint32_t>(st, "sol_open", t.sol_open);
    t.sol_sep = get_or<uint32_t>(st, "sol_sep", t.sol_sep);
    t.sol_close = get_or<uint32_t>(st, "sol_close", t.sol_close);
    if (st.contains("head_knots")) t.head_knots = st["head_knots"].get<std::vector<uint32_t>>();
    if (st.contains("tail_knots")) t.tail_knots = st["tail_knots"].get<std::vector<uint32_t>>();
    cfg.specials = t;
  } else {
    cfg.specials = SpecialTokens::default_layout(cfg.vocab_size, p.max_h);
  }

  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

Config Config::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), path);
}

}  // namespace utk
