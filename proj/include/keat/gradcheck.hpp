#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "keat/concept_kb.hpp"
#include "keat/hyperparams.hpp"
#include "keat/model.hpp"
#include "keat/tape.hpp"

namespace keat {

struct GradcheckOptions {
  double perturb = 1e-5;     // central-difference step
  double tolerance = 1e-4;   // max relative error per entry
  double abs_floor = 1e-6;   // denominator floor for near-zero gradients
  // Test hook: receives the analytic gradients before comparison so a
  // deliberately broken backward pass can be simulated.
  std::function<void(GradStore&)> corrupt_backward;
};

struct TensorCheck {
  std::string variant;  // model path under test
  std::string name;     // parameter tensor
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  bool passed() const;
  std::vector<const TensorCheck*> failures() const;
};

/// Small model plus two short documents whose loss is checked.
struct GradcheckFixture {
  HyperParams hp;
  ConceptLexicon lexicon;
  Vocab vocab;
  std::vector<Example> examples;
  ParamStore params;
};

/// The built-in fixture for one attention path: 2 documents of at most 4
/// tokens, at most 3 concepts each, u = 4, h = 2, dropout off, lambda > 0.
GradcheckFixture make_gradcheck_fixture(LocalAttnUse local, WindowSource window);

/// Mean cross-entropy over the fixture documents plus the L2 term.
double fixture_loss(const GradcheckFixture& fx, const ParamStore& params);

/// Compares every entry of every parameter tensor against central
/// differences, for the multi-head path and each local-attention mode.
GradcheckReport run_gradcheck(const GradcheckOptions& opts = {});

/// Same check for one fixture, labelled `variant`.
std::vector<TensorCheck> check_fixture(const GradcheckFixture& fx, const std::string& variant,
                                       const GradcheckOptions& opts);

}  // namespace keat
