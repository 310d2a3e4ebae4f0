#include "keat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "keat/errors.hpp"
#include "keat/ops.hpp"

namespace keat {

NumericalAbort::NumericalAbort(std::size_t epoch_, std::size_t batch_, const std::string& detail)
    : std::runtime_error("numerical abort in epoch " + std::to_string(epoch_) + ", batch " +
                         std::to_string(batch_) + ": " + detail),
      epoch(epoch_),
      batch(batch_) {}

namespace {

double log_softmax_at(const Tensor& logits, std::size_t label) {
  if (logits.numel() == 0) throw DimensionError("cross entropy over zero classes");
  if (label >= logits.numel()) {
    throw ContractError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(logits.numel()) + " classes");
  }
  double mx = logits[0];
  for (double v : logits.data()) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : logits.data()) s += std::exp(v - mx);
  return logits[label] - mx - std::log(s);
}

std::vector<double> softmax_of(const Tensor& logits) {
  double mx = logits[0];
  for (double v : logits.data()) mx = std::max(mx, v);
  std::vector<double> p(logits.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= s;
  return p;
}

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.numel(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

// Adds d(lambda * ||theta||^2)/d theta = 2 lambda theta over regularized entries.
void add_l2_gradient(const ParamStore& params, double lambda, GradStore& grads) {
  if (lambda == 0.0) return;
  for (const auto& [name, p] : params.entries()) {
    if (!p.regularized) continue;
    Tensor& g = grads.slot(name, p.value.shape());
    const auto& rows = p.unregularized_rows;
    const std::size_t cols = p.value.rank() == 2 ? p.value.cols() : p.value.numel();
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      if (!rows.empty() && std::find(rows.begin(), rows.end(), i / cols) != rows.end()) continue;
      g[i] += 2.0 * lambda * p.value[i];
    }
  }
}

std::mt19937_64 document_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

// Fisher-Yates with raw engine output so the order does not depend on the
// standard library's distribution implementations.
void shuffle_indices(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

std::vector<std::size_t> class_map(const Dataset& data, const std::vector<std::string>& classes) {
  std::vector<std::size_t> map(data.classes.size());
  for (std::size_t i = 0; i < data.classes.size(); ++i) {
    auto it = std::find(classes.begin(), classes.end(), data.classes[i]);
    if (it == classes.end()) {
      throw ContractError("class mismatch: label '" + data.classes[i] +
                          "' is not one of the model's classes");
    }
    map[i] = static_cast<std::size_t>(it - classes.begin());
  }
  return map;
}

std::vector<Example> make_examples(const Dataset& data, const std::vector<std::size_t>& labels,
                                   const Vocab& vocab, const ConceptSource& concepts,
                                   const HyperParams& hp) {
  std::vector<Example> out;
  out.reserve(data.docs.size());
  for (const Document& d : data.docs) {
    out.push_back(make_example(d.tokens, vocab, concepts, hp, labels.at(d.label)));
  }
  return out;
}

std::size_t predict_label(const ParamStore& params, const HyperParams& hp, const Example& ex) {
  Tape tape;
  return argmax(forward_logits(tape, params, hp, ex, false).value());
}

EvalReport score(const ParamStore& params, const HyperParams& hp, std::span<const Example> examples,
                 std::size_t classes) {
  if (examples.empty()) throw ContractError("evaluation set is empty");
  EvalReport r;
  r.total = examples.size();
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (const Example& ex : examples) {
    const std::size_t p = predict_label(params, hp, ex);
    ++r.confusion[ex.label][p];
    if (p == ex.label) ++r.correct;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      predicted += r.confusion[k][c];
      actual += r.confusion[c][k];
    }
    if (predicted) r.precision[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(predicted);
    if (actual) r.recall[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(actual);
  }
  return r;
}

}  // namespace

double cross_entropy_l2(const Tensor& logits, std::size_t label, const ParamStore& params,
                        double lambda) {
  return -log_softmax_at(logits, label) + lambda * params.l2_norm_sq();
}

BatchOutcome batch_loss_and_gradients(const ParamStore& params, const HyperParams& hp,
                                      std::span<const Example* const> batch, bool training,
                                      std::uint64_t dropout_seed) {
  if (batch.empty()) throw ContractError("empty batch");
  BatchOutcome out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double ce_total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = *batch[i];
    std::mt19937_64 rng = document_rng(dropout_seed, i);
    Tape tape;
    const Var logits = forward_logits(tape, params, hp, ex, training, &rng);
    if (argmax(logits.value()) == ex.label) ++out.correct;
    const Var loss = ops::scale(ops::cross_entropy(logits, ex.label), inv_b);
    ce_total += loss.value().item();
    tape.backward(loss);
    tape.accumulate_into(out.grads);
  }
  out.data_loss = ce_total;
  out.loss = ce_total + hp.lambda * params.l2_norm_sq();
  add_l2_gradient(params, hp.lambda, out.grads);
  if (!std::isfinite(out.loss)) throw NumericError("batch loss is not finite");
  return out;
}

double clip_global_norm(GradStore& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

TrainResult train(const Dataset& train_set, const ConceptLexicon& lexicon, const HyperParams& hp,
                  const Dataset* eval_set, const EpochCallback& on_epoch) {
  hp.validate();
  if (train_set.docs.empty()) throw ContractError("training set is empty");
  if (train_set.classes.size() < 2) throw ContractError("training needs at least 2 classes");

  std::vector<std::string> allowed;
  if (hp.ig_top_k > 0) allowed = select_top_k(information_gain_report(train_set.docs), hp.ig_top_k);
  const Vocab vocab = Vocab::build(train_set.docs, hp.min_count, allowed);

  std::vector<std::size_t> identity(train_set.classes.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  const std::vector<Example> examples = make_examples(train_set, identity, vocab, lexicon, hp);
  std::vector<Example> held_out;
  if (eval_set) {
    held_out = make_examples(*eval_set, class_map(*eval_set, train_set.classes), vocab, lexicon, hp);
  }

  std::mt19937_64 rng(hp.seed);
  ParamStore params = init_params(
      hp, ModelShape{vocab.size(), train_set.classes.size(), lexicon.concept_count()}, rng);
  AdamState adam;
  const AdamConfig adam_cfg{hp.lr, hp.beta1, hp.beta2, hp.eps};

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch) {
      ++batch_no;
      const std::size_t end = std::min(order.size(), start + hp.batch);
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[order[i]]);
      const std::uint64_t batch_seed = rng();
      try {
        BatchOutcome b = batch_loss_and_gradients(params, hp, batch, true, batch_seed);
        clip_global_norm(b.grads, hp.clip_norm);
        adam_step(params, b.grads, adam, adam_cfg);
        for (const auto& [name, p] : params.entries()) {
          if (!p.value.all_finite()) throw NumericError("parameter '" + name + "' became non-finite");
        }
        loss_sum += b.loss * static_cast<double>(batch.size());
        correct += b.correct;
      } catch (const NumericError& e) {
        throw NumericalAbort(epoch, batch_no, e.what());
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(examples.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
    if (eval_set) m.eval_accuracy = score(params, hp, held_out, train_set.classes.size()).accuracy;
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }

  result.checkpoint = Checkpoint::capture(hp, vocab, train_set.classes, lexicon.concepts(), params,
                                          adam, rng_text(rng));
  return result;
}

Classifier::Classifier(const Checkpoint& ckpt, const ConceptSource& concepts)
    : ckpt_(ckpt), concepts_(concepts) {
  if (concepts.concept_count() != ckpt.concepts.size()) {
    throw ContractError("lexicon has " + std::to_string(concepts.concept_count()) +
                        " concepts, model expects " + std::to_string(ckpt.concepts.size()));
  }
  for (std::size_t i = 0; i < ckpt.concepts.size(); ++i) {
    if (concepts.concept_name(i) != ckpt.concepts[i]) {
      throw ContractError("lexicon concept " + std::to_string(i) + " is '" +
                          concepts.concept_name(i) + "', model expects '" + ckpt.concepts[i] + "'");
    }
  }
}

Example Classifier::prepare(std::span<const std::string> tokens, std::size_t label) const {
  return make_example(tokens, ckpt_.vocab, concepts_, ckpt_.hp, label);
}

std::vector<double> Classifier::probabilities(const Example& ex) const {
  Tape tape;
  return softmax_of(forward_logits(tape, ckpt_.params, ckpt_.hp, ex, false).value());
}

std::size_t Classifier::predict(const Example& ex) const {
  return predict_label(ckpt_.params, ckpt_.hp, ex);
}

EvalReport evaluate(const Dataset& data, const Checkpoint& ckpt, const ConceptSource& concepts) {
  if (data.docs.empty()) throw ContractError("evaluation set is empty");
  const Classifier clf(ckpt, concepts);
  const auto examples = make_examples(data, class_map(data, ckpt.classes), ckpt.vocab, concepts, ckpt.hp);
  return score(ckpt.params, ckpt.hp, examples, ckpt.classes.size());
}

std::vector<SweepRow> gamma_sweep(const Dataset& train_set, const Dataset& eval_set,
                                  const ConceptLexicon& lexicon, const HyperParams& hp,
                                  std::span<const double> gammas) {
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gamma " + format_double(g) + " is outside [0,1]");
  }
  std::vector<SweepRow> rows;
  for (double g : gammas) {
    HyperParams run = hp;
    run.gamma = g;
    const TrainResult r = train(train_set, lexicon, run);
    rows.push_back({g, evaluate(eval_set, r.checkpoint, lexicon).accuracy});
  }
  return rows;
}

}  // namespace keat
