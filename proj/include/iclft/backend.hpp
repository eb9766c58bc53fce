#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "iclft/prompt.hpp"
#include "iclft/toymodel.hpp"

namespace iclft {

/// One fine-tuning example: the view it was rendered under and the bundle
/// including its target.
struct TrainingItem {
  std::shared_ptr<const TaskView> view;
  PromptBundle bundle;
};

struct FinetuneOutput;

/// Model behind the harness. generate() must be deterministic for a given
/// backend state; finetune() returns a new backend and leaves this one as is.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual std::string name() const = 0;
  virtual bool can_finetune() const { return false; }

  /// Raw answer text for the prompt. `view` is the task view the prompt was
  /// assembled under.
  virtual std::string generate(const TaskView& view, const PromptBundle& prompt) const = 0;

  virtual FinetuneOutput finetune(const std::vector<TrainingItem>& items, const toy::OptimConfig& optim,
                                  std::uint64_t seed) const;
};

struct FinetuneOutput {
  std::unique_ptr<ModelBackend> backend;
  std::vector<toy::TraceRow> trace;
  std::vector<double> sample_losses;
};

/// Wraps the toy classifier. Output heads are bound to definition slots: the
/// answer is the display name of the winning slot under the prompt's mapping.
class ToyBackend final : public ModelBackend {
 public:
  ToyBackend(Vocab vocab, toy::ModelParams model, std::vector<toy::LoraAdapter> adapters,
             toy::TrainableSet trainable, std::uint64_t seed);

  std::string name() const override { return "toy"; }
  bool can_finetune() const override { return true; }
  std::string generate(const TaskView& view, const PromptBundle& prompt) const override;
  FinetuneOutput finetune(const std::vector<TrainingItem>& items, const toy::OptimConfig& optim,
                          std::uint64_t seed) const override;

  toy::RowVec<double> logits(const PromptBundle& prompt) const;
  toy::Sample to_sample(const TaskView& view, const PromptBundle& prompt) const;

  const Vocab& vocab() const noexcept { return vocab_; }
  const toy::ModelParams& model() const noexcept { return model_; }
  const std::vector<toy::LoraAdapter>& adapters() const noexcept { return adapters_; }
  toy::TrainableSet trainable() const noexcept { return trainable_; }
  std::uint64_t seed() const noexcept { return seed_; }

  toy::Checkpoint checkpoint() const;
  /// Throws ValidationError if the checkpoint was trained against another vocabulary.
  static ToyBackend from_checkpoint(Vocab vocab, toy::Checkpoint ckpt, toy::TrainableSet trainable);

 private:
  Vocab vocab_;
  toy::ModelParams model_;
  std::vector<toy::LoraAdapter> adapters_;
  toy::TrainableSet trainable_;
  std::uint64_t seed_;
};

/// Answers with the gold labels of the query, looked up by example id and
/// rendered under the prompt's mapping.
class OracleBackend final : public ModelBackend {
 public:
  explicit OracleBackend(std::map<std::string, std::vector<std::string>> gold_by_id);
  static OracleBackend from_corpora(const std::vector<const Corpus*>& corpora);

  std::string name() const override { return "oracle"; }
  std::string generate(const TaskView& view, const PromptBundle& prompt) const override;

 private:
  std::map<std::string, std::vector<std::string>> gold_;
};

/// Always returns the same answer.
class ConstantBackend final : public ModelBackend {
 public:
  explicit ConstantBackend(std::string answer) : answer_(std::move(answer)) {}

  std::string name() const override { return "constant:" + answer_; }
  std::string generate(const TaskView&, const PromptBundle&) const override { return answer_; }

 private:
  std::string answer_;
};

}  // namespace iclft
