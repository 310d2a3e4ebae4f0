#include "keat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "keat/errors.hpp"
#include "keat/ops.hpp"
#include "keat/trainer.hpp"

namespace keat {

bool GradcheckReport::passed() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const TensorCheck& t) { return t.passed; });
}

std::vector<const TensorCheck*> GradcheckReport::failures() const {
  std::vector<const TensorCheck*> out;
  for (const auto& t : tensors) {
    if (!t.passed) out.push_back(&t);
  }
  return out;
}

GradcheckFixture make_gradcheck_fixture(LocalAttnUse local, WindowSource window) {
  GradcheckFixture fx;
  HyperParams& hp = fx.hp;
  hp.word_dim = 5;
  hp.char_dim = 3;
  hp.concept_dim = 3;
  hp.hidden = 4;
  hp.heads = 2;
  hp.kernel = 3;
  hp.attn_dim = 3;
  hp.max_word_chars = 6;
  hp.max_concepts = 3;
  hp.gamma = 0.4;
  hp.lambda = 1e-3;
  hp.dropout = 0.0;
  hp.init_std = 0.5;
  hp.seed = 11;
  hp.local_attn = local;
  hp.local_window = window;
  hp.omega = 2.0;
  hp.validate();

  fx.lexicon.add("apple", "company", 0.6);
  fx.lexicon.add("apple", "fruit", 0.4);
  fx.lexicon.add("iphone", "device", 0.9);
  fx.lexicon.add("steve jobs", "person", 0.8);
  fx.lexicon.add("jobs", "economy", 0.3);

  const std::vector<std::vector<std::string>> texts = {
      {"apple", "unveils", "new", "iphone"},
      {"steve", "jobs", "eats", "apple"},
  };
  std::vector<Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({i, texts[i], {}, {}});
  fx.vocab = Vocab::build(docs);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    fx.examples.push_back(make_example(texts[i], fx.vocab, fx.lexicon, hp, i));
  }
  std::mt19937_64 rng(hp.seed);
  fx.params = init_params(hp, ModelShape{fx.vocab.size(), 2, fx.lexicon.concept_count()}, rng);
  // Biases start at zero; move them off zero so their paths are exercised
  // away from symmetric points.
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& [name, p] : fx.params.entries()) {
    if (!p.regularized) {
      for (double& v : p.value.data()) v = normal(rng);
    }
  }
  return fx;
}

double fixture_loss(const GradcheckFixture& fx, const ParamStore& params) {
  double ce = 0.0;
  for (const Example& ex : fx.examples) {
    Tape tape;
    const Var logits = forward_logits(tape, params, fx.hp, ex, false);
    ce += ops::cross_entropy(logits, ex.label).value().item();
  }
  return ce / static_cast<double>(fx.examples.size()) + fx.hp.lambda * params.l2_norm_sq();
}

std::vector<TensorCheck> check_fixture(const GradcheckFixture& fx, const std::string& variant,
                                       const GradcheckOptions& opts) {
  if (!(opts.perturb > 0.0)) throw ConfigError("perturbation step must be positive");
  std::vector<const Example*> batch;
  for (const Example& ex : fx.examples) batch.push_back(&ex);
  BatchOutcome analytic = batch_loss_and_gradients(fx.params, fx.hp, batch, false, 0);
  if (opts.corrupt_backward) opts.corrupt_backward(analytic.grads);

  ParamStore probe = fx.params;
  std::vector<TensorCheck> out;
  for (const auto& [name, p] : fx.params.entries()) {
    TensorCheck tc;
    tc.variant = variant;
    tc.name = name;
    tc.entries = p.value.numel();
    const Tensor* g = analytic.grads.find(name);
    Tensor& theta = probe.value(name);
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + opts.perturb;
      const double up = fixture_loss(fx, probe);
      theta[i] = saved - opts.perturb;
      const double down = fixture_loss(fx, probe);
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.perturb);
      const double a = g ? (*g)[i] : 0.0;
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
      tc.max_rel_error = std::max(tc.max_rel_error, std::abs(a - numeric) / denom);
      tc.max_abs_grad = std::max(tc.max_abs_grad, std::abs(a));
    }
    tc.passed = tc.max_rel_error <= opts.tolerance;
    out.push_back(tc);
  }
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
  struct Variant {
    const char* label;
    LocalAttnUse local;
    WindowSource window;
  };
  const Variant variants[] = {
      {"multihead", LocalAttnUse::None, WindowSource::Learned},
      {"local-original", LocalAttnUse::Original, WindowSource::Learned},
      {"local-improved", LocalAttnUse::Improved, WindowSource::Learned},
      {"local-improved-frequency", LocalAttnUse::Improved, WindowSource::Frequency},
  };
  GradcheckReport report;
  for (const Variant& v : variants) {
    auto checks = check_fixture(make_gradcheck_fixture(v.local, v.window), v.label, opts);
    report.tensors.insert(report.tensors.end(), checks.begin(), checks.end());
  }
  return report;
}

}  // namespace keat
