#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "keat/adam.hpp"
#include "keat/checkpoint.hpp"
#include "keat/concept_kb.hpp"
#include "keat/corpus.hpp"
#include "keat/model.hpp"

namespace keat {

/// Training stopped because a batch produced a non-finite value.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(std::size_t epoch, std::size_t batch, const std::string& detail);
  std::size_t epoch;
  std::size_t batch;
};

/// -log softmax(logits)[label] + lambda * ||theta||^2 over regularized weights.
double cross_entropy_l2(const Tensor& logits, std::size_t label, const ParamStore& params,
                        double lambda);

struct BatchOutcome {
  double loss = 0.0;       // mean cross-entropy + lambda * ||theta||^2
  double data_loss = 0.0;  // mean cross-entropy
  std::size_t correct = 0;
  GradStore grads;
};

/// Loss and gradient of one batch. Documents are processed in order and their
/// gradients summed in that order. Document i of a training batch draws its
/// dropout mask from an RNG seeded with (dropout_seed, i).
BatchOutcome batch_loss_and_gradients(const ParamStore& params, const HyperParams& hp,
                                      std::span<const Example* const> batch, bool training,
                                      std::uint64_t dropout_seed);

/// Rescales `grads` so that its global norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(GradStore& grads, double max_norm);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean batch loss, weighted by batch size
  double accuracy = 0.0;  // over the training forward passes (dropout on)
  std::optional<double> eval_accuracy;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> history;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Builds the vocabulary (optionally IG-filtered), conceptualizes every
/// document and runs hp.epochs epochs of Adam on shuffled batches.
/// Deterministic for a fixed hp.seed.
TrainResult train(const Dataset& train_set, const ConceptLexicon& lexicon, const HyperParams& hp,
                  const Dataset* eval_set = nullptr, const EpochCallback& on_epoch = {});

/// Scores raw token sequences with a trained checkpoint.
class Classifier {
 public:
  /// `concepts` must use the checkpoint's concept ids (load the lexicon with
  /// the checkpoint's concept list).
  Classifier(const Checkpoint& ckpt, const ConceptSource& concepts);

  Example prepare(std::span<const std::string> tokens, std::size_t label = 0) const;
  std::vector<double> probabilities(const Example& ex) const;
  std::size_t predict(const Example& ex) const;

 private:
  const Checkpoint& ckpt_;
  const ConceptSource& concepts_;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<double> precision;  // per class; 0 when never predicted
  std::vector<double> recall;     // per class; 0 when absent
  std::vector<std::vector<std::size_t>> confusion;  // [actual][predicted]
};

/// Dropout off. Dataset labels are matched to checkpoint classes by name.
EvalReport evaluate(const Dataset& data, const Checkpoint& ckpt, const ConceptSource& concepts);

struct SweepRow {
  double gamma = 0.0;
  double accuracy = 0.0;
};

/// One train + evaluate run per gamma, all with hp.seed.
std::vector<SweepRow> gamma_sweep(const Dataset& train_set, const Dataset& eval_set,
                                  const ConceptLexicon& lexicon, const HyperParams& hp,
                                  std::span<const double> gammas);

}  // namespace keat
