#include "iclft/labelmap.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "iclft/error.hpp"
#include "iclft/text.hpp"

namespace iclft {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::none: return "none";
    case Strategy::regular: return "regular";
    case Strategy::symbol: return "symbol";
    case Strategy::random_label: return "random_label";
  }
  return "none";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "none") return Strategy::none;
  if (s == "regular") return Strategy::regular;
  if (s == "symbol") return Strategy::symbol;
  if (s == "random_label") return Strategy::random_label;
  throw ParseError("unknown strategy '" + std::string(s) + "'");
}

std::vector<std::string> LabelMapping::display_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.display_name);
  return out;
}

std::string LabelMapping::fingerprint() const {
  std::string s = task_id + "|" + std::string(to_string(strategy)) + "|";
  for (const auto& e : entries) {
    s += e.display_name;
    s += '=';
    s += e.gold_name;
    s += ';';
  }
  return s;
}

void validate(const LabelMapping& m, const TaskSpec& task) {
  if (m.task_id != task.task_id) {
    throw ValidationError("mapping for '" + m.task_id + "' used with task '" + task.task_id + "'");
  }
  if (m.entries.size() != task.num_classes()) {
    throw ValidationError("mapping size does not match label space");
  }
  std::set<std::string> display, gold, defs_seen;
  std::multiset<std::string> defs, task_defs;
  for (const auto& e : m.entries) {
    if (!display.insert(text::to_lower(e.display_name)).second) {
      throw ValidationError("duplicate display name '" + e.display_name + "'");
    }
    if (!task.class_index(e.gold_name)) {
      throw ValidationError("mapping names unknown class '" + e.gold_name + "'");
    }
    if (!gold.insert(e.gold_name).second) {
      throw ValidationError("duplicate gold name '" + e.gold_name + "'");
    }
    const auto& expected = task.label_space[*task.class_index(e.gold_name)].definition;
    if (e.definition != expected) {
      throw ValidationError("definition of '" + e.gold_name + "' does not travel with it");
    }
    defs.insert(e.definition);
  }
  for (const auto& c : task.label_space) task_defs.insert(c.definition);
  if (defs != task_defs) throw ValidationError("mapping definitions are not a permutation");
}

const std::vector<std::string>& default_symbols() {
  static const std::vector<std::string> symbols = {
      "alpha", "beta",    "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota",
      "kappa", "lambda",  "mu",    "nu",    "xi",      "omicron", "pi", "rho", "sigma"};
  return symbols;
}

namespace {

std::vector<std::size_t> iota_perm(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

bool is_identity(const std::vector<std::size_t>& p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != i) return false;
  return true;
}

}  // namespace

LabelMapping identity_mapping(const TaskSpec& task) {
  LabelMapping m = permuted_mapping(task, iota_perm(task.num_classes()));
  m.strategy = Strategy::regular;
  return m;
}

LabelMapping symbol_mapping(const TaskSpec& task, const std::vector<std::string>& symbols) {
  if (symbols.size() < task.num_classes()) {
    throw ValidationError("too few symbols: " + std::to_string(symbols.size()) + " for " +
                          std::to_string(task.num_classes()) + " classes");
  }
  std::set<std::string> seen;
  std::set<std::string> gold;
  for (const auto& c : task.label_space) gold.insert(text::to_lower(c.name));
  for (std::size_t i = 0; i < task.num_classes(); ++i) {
    const auto& s = symbols[i];
    if (s.empty() || text::trim_punct(s) != s || text::words(s).size() != 1) {
      throw ValidationError("symbol '" + s + "' is not a single word");
    }
    if (!seen.insert(text::to_lower(s)).second) throw ValidationError("duplicate symbol '" + s + "'");
    if (gold.count(text::to_lower(s))) {
      throw ValidationError("symbol '" + s + "' collides with a class name");
    }
  }
  LabelMapping m = identity_mapping(task);
  m.strategy = Strategy::symbol;
  for (std::size_t i = 0; i < m.entries.size(); ++i) m.entries[i].display_name = symbols[i];
  return m;
}

LabelMapping permuted_mapping(const TaskSpec& task, const std::vector<std::size_t>& perm,
                              std::optional<std::size_t> pool_index) {
  const std::size_t n = task.num_classes();
  if (perm.size() != n) throw ValidationError("permutation length does not match label space");
  std::vector<bool> used(n, false);
  for (auto p : perm) {
    if (p >= n || used[p]) throw ValidationError("not a permutation");
    used[p] = true;
  }
  LabelMapping m;
  m.task_id = task.task_id;
  m.strategy = Strategy::random_label;
  m.pool_index = pool_index;
  m.permutation = perm;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& src = task.label_space[perm[i]];
    m.entries.push_back({task.label_space[i].name, src.definition, src.name});
  }
  return m;
}

std::size_t slot_of_gold(const LabelMapping& m, std::string_view gold_label) {
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i].gold_name == gold_label) return i;
  }
  throw ValidationError("unknown label '" + std::string(gold_label) + "'");
}

const std::string& remap_label(const LabelMapping& m, std::string_view gold_label) {
  return m.entries[slot_of_gold(m, gold_label)].display_name;
}

std::vector<std::string> remap_labels(const LabelMapping& m,
                                      const std::vector<std::string>& gold_labels) {
  // Output follows slot order so multi-label strings are canonical.
  std::vector<std::size_t> slots;
  for (const auto& g : gold_labels) slots.push_back(slot_of_gold(m, g));
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
  std::vector<std::string> out;
  for (auto s : slots) out.push_back(m.entries[s].display_name);
  return out;
}

std::optional<std::string> gold_for_display(const LabelMapping& m, std::string_view display) {
  const auto key = text::to_lower(display);
  for (const auto& e : m.entries) {
    if (text::to_lower(e.display_name) == key) return e.gold_name;
  }
  return std::nullopt;
}

std::uint64_t max_pool_size(std::size_t n_classes, bool include_identity) {
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n_classes; ++i) {
    if (f > UINT64_MAX / i) return UINT64_MAX;
    f *= i;
  }
  return include_identity ? f : f - 1;
}

MappingPool enumerate_permutation_pool(const TaskSpec& task, bool include_identity) {
  if (task.num_classes() > kMaxEnumerableClasses) {
    throw ValidationError("label space of " + std::to_string(task.num_classes()) +
                          " classes is too large to enumerate; use sample_permutation_pool");
  }
  MappingPool pool{task.task_id, 0, include_identity, {}};
  auto perm = iota_perm(task.num_classes());
  do {
    if (!include_identity && is_identity(perm)) continue;
    pool.mappings.push_back(permuted_mapping(task, perm, pool.mappings.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return pool;
}

MappingPool sample_permutation_pool(const TaskSpec& task, std::size_t pool_size,
                                    std::uint64_t seed, bool include_identity) {
  if (pool_size < 1) throw ValidationError("pool_size must be >= 1");
  const auto limit = max_pool_size(task.num_classes(), include_identity);
  if (pool_size > limit) {
    throw ValidationError("pool_size " + std::to_string(pool_size) + " exceeds the " +
                          std::to_string(limit) + " distinct permutations available");
  }
  MappingPool pool{task.task_id, seed, include_identity, {}};
  Rng rng(seed);
  std::set<std::vector<std::size_t>> seen;
  while (pool.mappings.size() < pool_size) {
    auto perm = iota_perm(task.num_classes());
    rng.shuffle(perm.begin(), perm.end());
    if (!include_identity && is_identity(perm)) continue;
    if (!seen.insert(perm).second) continue;
    pool.mappings.push_back(permuted_mapping(task, perm, pool.mappings.size()));
  }
  return pool;
}

std::size_t draw_index(const MappingPool& pool, Rng& rng) {
  if (pool.mappings.empty()) throw ValidationError("cannot draw from an empty mapping pool");
  return static_cast<std::size_t>(rng.uniform_index(pool.mappings.size()));
}

const LabelMapping& draw_for_batch(const MappingPool& pool, Rng& rng) {
  return pool.mappings[draw_index(pool, rng)];
}

nlohmann::json to_json(const MappingPool& pool) {
  nlohmann::json perms = nlohmann::json::array();
  for (const auto& m : pool.mappings) perms.push_back(m.permutation);
  return {{"task_id", pool.task_id},
          {"seed", pool.seed},
          {"include_identity", pool.include_identity},
          {"permutations", perms}};
}

MappingPool pool_from_json(const nlohmann::json& j, const TaskSpec& task) {
  MappingPool pool;
  try {
    pool.task_id = j.at("task_id").get<std::string>();
    pool.seed = j.at("seed").get<std::uint64_t>();
    pool.include_identity = j.value("include_identity", true);
    if (pool.task_id != task.task_id) {
      throw ValidationError("pool is for task '" + pool.task_id + "'");
    }
    std::set<std::vector<std::size_t>> seen;
    for (const auto& p : j.at("permutations")) {
      auto perm = p.get<std::vector<std::size_t>>();
      if (!seen.insert(perm).second) throw ValidationError("pool repeats a permutation");
      pool.mappings.push_back(permuted_mapping(task, perm, pool.mappings.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mapping pool: ") + e.what());
  }
  return pool;
}

}  // namespace iclft
