#include "iclft/backend.hpp"

#include "iclft/error.hpp"
#include "iclft/text.hpp"

namespace iclft {

FinetuneOutput ModelBackend::finetune(const std::vector<TrainingItem>&, const toy::OptimConfig&,
                                      std::uint64_t) const {
  throw ConfigError("backend '" + name() + "' cannot be fine-tuned");
}

ToyBackend::ToyBackend(Vocab vocab, toy::ModelParams model, std::vector<toy::LoraAdapter> adapters,
                       toy::TrainableSet trainable, std::uint64_t seed)
    : vocab_(std::move(vocab)),
      model_(std::move(model)),
      adapters_(std::move(adapters)),
      trainable_(trainable),
      seed_(seed) {
  if (static_cast<std::size_t>(model_.vocab_size()) != vocab_.size()) {
    throw ValidationError("toy backend: model vocabulary size does not match the vocab");
  }
}

toy::RowVec<double> ToyBackend::logits(const PromptBundle& prompt) const {
  const auto enc = encode(prompt, vocab_);
  return toy::forward(model_, adapters_, enc.tokens, enc.slots);
}

std::string ToyBackend::generate(const TaskView& view, const PromptBundle& prompt) const {
  if (static_cast<Eigen::Index>(view.task.num_classes()) > model_.n_classes()) {
    throw ValidationError("toy backend: task has more classes than the model has heads");
  }
  return toy::predict(logits(prompt), view.task, view.mapping);
}

toy::Sample ToyBackend::to_sample(const TaskView& view, const PromptBundle& prompt) const {
  if (!prompt.target) throw ValidationError("training prompt " + prompt.query_id + " has no target");
  toy::Sample s;
  s.input = encode(prompt, vocab_);
  s.n_classes = static_cast<int>(view.task.num_classes());
  s.multi_label = view.task.multi_label;
  for (const auto& display : *prompt.target) {
    auto gold = gold_for_display(view.mapping, display);
    if (!gold) throw ValidationError("target '" + display + "' is not a display name of the mapping");
    s.target_slots.push_back(static_cast<int>(slot_of_gold(view.mapping, *gold)));
  }
  return s;
}

FinetuneOutput ToyBackend::finetune(const std::vector<TrainingItem>& items, const toy::OptimConfig& optim,
                                    std::uint64_t seed) const {
  std::vector<toy::Sample> samples;
  samples.reserve(items.size());
  for (const auto& item : items) samples.push_back(to_sample(*item.view, item.bundle));
  Rng rng(derive_seed(seed, 0x44));
  auto result = toy::train(model_, adapters_, samples, optim, trainable_, rng);
  FinetuneOutput out;
  out.backend = std::make_unique<ToyBackend>(vocab_, std::move(result.model), std::move(result.adapters),
                                             trainable_, seed);
  out.trace = std::move(result.trace);
  out.sample_losses = std::move(result.sample_losses);
  return out;
}

toy::Checkpoint ToyBackend::checkpoint() const { return {model_, adapters_, vocab_.hash(), seed_}; }

ToyBackend ToyBackend::from_checkpoint(Vocab vocab, toy::Checkpoint ckpt, toy::TrainableSet trainable) {
  if (ckpt.vocab_hash != vocab.hash()) {
    throw ValidationError("checkpoint vocabulary hash " + text::hex64(ckpt.vocab_hash) +
                          " does not match " + text::hex64(vocab.hash()));
  }
  return ToyBackend(std::move(vocab), std::move(ckpt.model), std::move(ckpt.adapters), trainable, ckpt.seed);
}

OracleBackend::OracleBackend(std::map<std::string, std::vector<std::string>> gold_by_id)
    : gold_(std::move(gold_by_id)) {}

OracleBackend OracleBackend::from_corpora(const std::vector<const Corpus*>& corpora) {
  std::map<std::string, std::vector<std::string>> gold;
  for (const auto* c : corpora) {
    for (const auto& ex : c->examples) gold[ex.id] = ex.labels;
  }
  return OracleBackend(std::move(gold));
}

std::string OracleBackend::generate(const TaskView& view, const PromptBundle& prompt) const {
  auto it = gold_.find(prompt.query_id);
  if (it == gold_.end()) return "";
  return text::join(remap_labels(view.mapping, it->second), ", ");
}

}  // namespace iclft
