#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>

#include "iclft/error.hpp"
#include "iclft/rng.hpp"
#include "iclft/task.hpp"
#include "iclft/text.hpp"

namespace iclft {
namespace {

constexpr std::array<const char*, 12> kClassNames = {
    "amber", "cobalt", "crimson", "jade", "ochre", "slate",
    "teal",  "violet", "indigo",  "coral", "olive", "umber"};

std::string class_name(std::size_t i) {
  if (i < kClassNames.size()) return kClassNames[i];
  return "class_" + std::to_string(i);
}

std::string vocab_word(std::size_t i) { return "w" + std::to_string(i); }

std::string definition_for(const std::vector<std::string>& triggers) {
  return "any mention of " + text::join(triggers, " or ");
}

Corpus generate_corpus(const TaskSpec& task, const std::vector<std::vector<std::string>>& triggers,
                       const std::vector<std::string>& fillers, std::size_t per_class,
                       std::size_t fillers_per_example, Split split, const std::string& prefix,
                       Rng& rng) {
  std::vector<Example> items;
  for (std::size_t c = 0; c < task.num_classes(); ++c) {
    for (std::size_t e = 0; e < per_class; ++e) {
      std::vector<std::string> toks = triggers[c];
      for (std::size_t f = 0; f < fillers_per_example; ++f) {
        toks.push_back(fillers[rng.uniform_index(fillers.size())]);
      }
      rng.shuffle(toks.begin(), toks.end());
      Example ex;
      ex.text = text::join(toks, " ");
      ex.labels = {task.label_space[c].name};
      items.push_back(std::move(ex));
    }
  }
  rng.shuffle(items.begin(), items.end());
  char buf[32];
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%04zu", i);
    items[i].id = prefix + buf;
  }
  return Corpus{task.task_id, split, std::move(items)};
}

std::vector<std::string> fillers_excluding(std::size_t vocab_size,
                                           const std::vector<std::vector<std::string>>& triggers) {
  std::set<std::string> used;
  for (const auto& t : triggers) used.insert(t.begin(), t.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    if (!used.count(vocab_word(i))) out.push_back(vocab_word(i));
  }
  return out;
}

void check_shape(std::size_t n_classes, std::size_t examples_per_class, std::size_t vocab_size,
                 const SyntheticOptions& opts) {
  if (n_classes < 2) throw ValidationError("synthetic task needs at least 2 classes");
  if (examples_per_class < 1) throw ValidationError("examples_per_class must be >= 1");
  if (vocab_size < n_classes * 4) {
    throw ValidationError("vocab_size must be >= 4 * n_classes");
  }
  if (opts.triggers_per_class < 1 || n_classes * opts.triggers_per_class >= vocab_size) {
    throw ValidationError("vocab_size leaves no filler tokens");
  }
}

std::size_t eval_count(std::size_t examples_per_class, const SyntheticOptions& opts) {
  return opts.eval_per_class ? opts.eval_per_class : std::max<std::size_t>(1, examples_per_class / 2);
}

}  // namespace

SyntheticTask make_synthetic_task(std::uint64_t seed, std::size_t n_classes,
                                  std::size_t examples_per_class, std::size_t vocab_size,
                                  const SyntheticOptions& opts) {
  check_shape(n_classes, examples_per_class, vocab_size, opts);
  Rng vocab_rng(derive_seed(seed, 1));
  std::vector<std::size_t> ids(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) ids[i] = i;
  vocab_rng.shuffle(ids.begin(), ids.end());

  SyntheticTask out;
  out.task.task_id = "synth" + std::to_string(seed);
  out.task.multi_label = false;
  out.task.metric = MetricKind::macro_f1;
  out.task.instruction =
      "Read the input and decide which class definition it matches.";
  out.task.guidelines = "Answer with exactly one class name.";
  std::size_t next = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::string> trig;
    for (std::size_t t = 0; t < opts.triggers_per_class; ++t) trig.push_back(vocab_word(ids[next++]));
    std::sort(trig.begin(), trig.end());
    out.task.label_space.push_back({class_name(c), definition_for(trig)});
    out.triggers.push_back(std::move(trig));
  }
  validate(out.task);
  const auto fillers = fillers_excluding(vocab_size, out.triggers);

  Rng train_rng(derive_seed(seed, 2));
  Rng eval_rng(derive_seed(seed, 3));
  out.train = generate_corpus(out.task, out.triggers, fillers, examples_per_class,
                              opts.fillers_per_example, Split::train, "train-", train_rng);
  out.eval = generate_corpus(out.task, out.triggers, fillers, eval_count(examples_per_class, opts),
                             opts.fillers_per_example, Split::eval, "eval-", eval_rng);
  return out;
}

SyntheticTask make_shuffled_task(const SyntheticTask& base, std::uint64_t seed,
                                 std::size_t examples_per_class, std::size_t vocab_size,
                                 const SyntheticOptions& opts) {
  const std::size_t n = base.task.num_classes();
  check_shape(n, examples_per_class, vocab_size, opts);
  Rng rng(derive_seed(seed, 11));
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  auto has_fixed_point = [&] {
    for (std::size_t i = 0; i < n; ++i)
      if (perm[i] == i) return true;
    return false;
  };
  do {
    rng.shuffle(perm.begin(), perm.end());
  } while (has_fixed_point());

  SyntheticTask out;
  out.task = base.task;
  out.task.task_id = base.task.task_id + "_shuffled";
  for (std::size_t i = 0; i < n; ++i) {
    out.task.label_space[i].definition = base.task.label_space[perm[i]].definition;
    out.triggers.push_back(base.triggers[perm[i]]);
  }
  validate(out.task);
  const auto fillers = fillers_excluding(vocab_size, out.triggers);
  Rng train_rng(derive_seed(seed, 12));
  Rng eval_rng(derive_seed(seed, 13));
  out.train = generate_corpus(out.task, out.triggers, fillers, examples_per_class,
                              opts.fillers_per_example, Split::train, "shuf-train-", train_rng);
  out.eval = generate_corpus(out.task, out.triggers, fillers, eval_count(examples_per_class, opts),
                             opts.fillers_per_example, Split::eval, "shuf-eval-", eval_rng);
  return out;
}

std::string decode_by_definition(const TaskSpec& task, std::string_view input) {
  const auto words = text::words(input);
  const std::set<std::string> present(words.begin(), words.end());
  std::size_t best = 0;
  std::size_t best_hits = 0;
  for (std::size_t c = 0; c < task.num_classes(); ++c) {
    std::size_t hits = 0;
    for (const auto& w : text::words(task.label_space[c].definition)) hits += present.count(w);
    if (hits > best_hits) {
      best_hits = hits;
      best = c;
    }
  }
  return task.label_space[best].name;
}

}  // namespace iclft
