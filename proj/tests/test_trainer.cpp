#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "keat/checkpoint.hpp"
#include "keat/errors.hpp"
#include "keat/trainer.hpp"
#include "test_util.hpp"

using namespace keat;
using keat::test::data_path;

namespace {

HyperParams tiny() {
  HyperParams hp;
  hp.word_dim = 8;
  hp.char_dim = 4;
  hp.concept_dim = 4;
  hp.hidden = 4;
  hp.heads = 2;
  hp.attn_dim = 4;
  hp.batch = 8;
  hp.epochs = 2;
  hp.seed = 5;
  return hp;
}

const Dataset& overfit() {
  static const Dataset ds = load_dataset(data_path("overfit.tsv"));
  return ds;
}

const ConceptLexicon& overfit_kb() {
  static const ConceptLexicon kb = ConceptLexicon::load(data_path("overfit_lexicon.tsv"));
  return kb;
}

// Sum of squares over every regularized entry, written out independently.
double l2_oracle(const ParamStore& params) {
  double s = 0.0;
  for (const auto& [name, p] : params.entries()) {
    const bool bias = name.ends_with(".bias") || name.ends_with(".b1") || name.ends_with(".b2") ||
                      name.find(".b_") != std::string::npos;
    if (bias) continue;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      if (name == "embed.word" && i < 2 * p.value.cols()) continue;
      s += p.value[i] * p.value[i];
    }
  }
  return s;
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("keat_test_" + name)).string();
}

}  // namespace

TEST_CASE("cross entropy with L2") {
  ParamStore params;
  params.add("w", Tensor::vector({1.0, 1.0}));
  params.add("layer.bias", Tensor::vector({5.0}), false);
  CHECK(std::abs(cross_entropy_l2(Tensor::vector({0, 0, 0, 0}), 1, params, 0.0) - std::log(4.0)) <= 1e-12);
  CHECK(std::abs(cross_entropy_l2(Tensor::vector({0, 0, 0, 0}), 1, params, 0.01) - (std::log(4.0) + 0.02)) <= 1e-12);
  CHECK(std::abs(cross_entropy_l2(Tensor::vector({1000, 0}), 0, params, 0.01) - 0.02) <= 1e-12);
  CHECK_THROWS_AS(cross_entropy_l2(Tensor::vector({0, 0}), 2, params, 0.0), ContractError);
}

TEST_CASE("regularization policy") {
  CHECK(is_regularized("gru.fwd.w_z"));
  CHECK_FALSE(is_regularized("gru.fwd.b_z"));
  CHECK_FALSE(is_regularized("classifier.bias"));
  CHECK_FALSE(is_regularized("fusion.b1"));
  CHECK_FALSE(is_regularized("fusion.b2"));
  CHECK(is_regularized("local.0.w_beta"));
  CHECK(is_regularized("embed.word"));

  std::mt19937_64 rng(1);
  const ParamStore params = init_params(tiny(), {6, 2, 3}, rng);
  CHECK(std::abs(params.l2_norm_sq() - l2_oracle(params)) <= 1e-12);
}

TEST_CASE("batch loss adds exactly lambda times the weight norm") {
  HyperParams hp = tiny();
  hp.dropout = 0.0;
  std::mt19937_64 rng(2);
  const Vocab vocab = Vocab::build(overfit().docs);
  const ParamStore params = init_params(hp, {vocab.size(), 2, overfit_kb().concept_count()}, rng);
  std::vector<Example> ex;
  for (const auto& d : overfit().docs) ex.push_back(make_example(d.tokens, vocab, overfit_kb(), hp, d.label));
  std::vector<const Example*> batch;
  for (const auto& e : ex) batch.push_back(&e);

  hp.lambda = 0.0;
  const BatchOutcome plain = batch_loss_and_gradients(params, hp, batch, false, 0);
  hp.lambda = 0.05;
  const BatchOutcome reg = batch_loss_and_gradients(params, hp, batch, false, 0);
  CHECK(reg.loss > plain.loss);
  CHECK(std::abs((reg.loss - plain.loss) - 0.05 * l2_oracle(params)) <= 1e-10);

  // Gradient of the penalty is 2 lambda theta on weights and nothing on biases.
  const Tensor& w0 = reg.grads.get("classifier.weight");
  const Tensor& w1 = plain.grads.get("classifier.weight");
  for (std::size_t i = 0; i < w0.numel(); ++i)
    CHECK(std::abs(w0[i] - w1[i] - 0.1 * params.value("classifier.weight")[i]) <= 1e-12);
  CHECK(max_abs_diff(reg.grads.get("classifier.bias"), plain.grads.get("classifier.bias")) == 0.0);
  const Tensor& e0 = reg.grads.get("embed.word");
  const Tensor& e1 = plain.grads.get("embed.word");
  for (std::size_t c = 0; c < e0.cols(); ++c) {
    CHECK(e0.at(0, c) == e1.at(0, c));
    CHECK(e0.at(1, c) == e1.at(1, c));
  }
}

TEST_CASE("adam") {
  const AdamConfig cfg;
  SUBCASE("zero gradient leaves parameters and decays moments") {
    ParamStore p;
    p.add("w", Tensor::vector({1.0, -2.0}));
    AdamState st;
    GradStore g;
    g.slot("w", {2});
    adam_step(p, g, st, cfg);
    CHECK(p.value("w") == Tensor::vector({1.0, -2.0}));
    st.m["w"] = Tensor::vector({0.5, 0.5});
    st.v["w"] = Tensor::vector({0.25, 0.25});
    GradStore none;
    adam_step(p, none, st, cfg);
    CHECK(st.m["w"][0] == 0.9 * 0.5);
    CHECK(st.v["w"][0] == 0.999 * 0.25);
  }
  SUBCASE("first step moves each entry by about lr against its gradient") {
    ParamStore p;
    p.add("w", Tensor::vector({0.0, 0.0}));
    AdamState st;
    GradStore g;
    g.slot("w", {2}) = Tensor::vector({0.3, -40.0});
    adam_step(p, g, st, cfg);
    CHECK(p.value("w")[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p.value("w")[1] == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(st.step == 1);
  }
  SUBCASE("five steps on a quadratic match a hand-rolled reference") {
    ParamStore p;
    p.add("x", Tensor::vector({0.5}));
    AdamState st;
    const AdamConfig c{0.1, 0.9, 0.999, 1e-8};
    double x = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 5; ++t) {
      GradStore g;
      g.slot("x", {1})[0] = 2.0 * (p.value("x")[0] - 3.0);
      adam_step(p, g, st, c);
      const double gr = 2.0 * (x - 3.0);
      m = 0.9 * m + 0.1 * gr;
      v = 0.999 * v + 0.001 * gr * gr;
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(std::abs(p.value("x")[0] - x) <= 1e-12);
    }
  }
  SUBCASE("contract violations") {
    ParamStore p;
    p.add("w", Tensor::vector({1.0}));
    AdamState st;
    GradStore wrong_shape;
    wrong_shape.slot("w", {2});
    CHECK_THROWS_AS(adam_step(p, wrong_shape, st, cfg), ContractError);
    GradStore unknown;
    unknown.slot("q", {1});
    CHECK_THROWS_AS(adam_step(p, unknown, st, cfg), ContractError);
  }
}

TEST_CASE("global norm clipping") {
  GradStore g;
  g.slot("a", {2}) = Tensor::vector({3.0, 0.0});
  g.slot("b", {1}) = Tensor::vector({4.0});
  CHECK(clip_global_norm(g, 10.0) == 5.0);
  CHECK(g.get("a")[0] == 3.0);
  CHECK(clip_global_norm(g, 1.0) == 5.0);
  CHECK(std::abs(g.global_norm() - 1.0) <= 1e-12);
}

TEST_CASE("training is deterministic under a seed") {
  const HyperParams hp = tiny();
  const TrainResult a = train(overfit(), overfit_kb(), hp);
  const TrainResult b = train(overfit(), overfit_kb(), hp);
  REQUIRE(a.history.size() == 2);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].accuracy == b.history[i].accuracy);
  }
  CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
  HyperParams other = hp;
  other.seed = 6;
  CHECK(train(overfit(), overfit_kb(), other).history[0].loss != a.history[0].loss);
}

TEST_CASE("training preconditions") {
  Dataset empty;
  empty.classes = {"a", "b"};
  CHECK_THROWS_AS(train(empty, overfit_kb(), tiny()), ContractError);
  Dataset one = overfit();
  one.classes = {"only"};
  for (auto& d : one.docs) d.label = 0;
  CHECK_THROWS_AS(train(one, overfit_kb(), tiny()), ContractError);
  HyperParams bad = tiny();
  bad.gamma = 2.0;
  CHECK_THROWS_AS(train(overfit(), overfit_kb(), bad), ConfigError);
}

TEST_CASE("information-gain vocabulary filter") {
  HyperParams hp = tiny();
  hp.epochs = 1;
  hp.ig_top_k = 4;
  const TrainResult r = train(overfit(), overfit_kb(), hp);
  CHECK(r.checkpoint.vocab.size() == 6);
  CHECK(r.checkpoint.params.value("embed.word").rows() == 6);
}

TEST_CASE("evaluation") {
  HyperParams hp = tiny();
  hp.epochs = 1;
  const TrainResult r = train(overfit(), overfit_kb(), hp);

  SUBCASE("empty evaluation set is an error") {
    Dataset empty;
    empty.classes = overfit().classes;
    CHECK_THROWS_AS(evaluate(empty, r.checkpoint, overfit_kb()), ContractError);
  }
  SUBCASE("unknown class is an error") {
    Dataset other = overfit();
    other.classes = {"sports", "cooking"};
    CHECK_THROWS_AS(evaluate(other, r.checkpoint, overfit_kb()), ContractError);
  }
  SUBCASE("lexicon must match the model's concepts") {
    ConceptLexicon kb;
    kb.add("x", "y", 1.0);
    CHECK_THROWS_AS(evaluate(overfit(), r.checkpoint, kb), ContractError);
  }
  SUBCASE("classes matched by name, not position") {
    Dataset swapped = overfit();
    std::swap(swapped.classes[0], swapped.classes[1]);
    for (auto& d : swapped.docs) d.label = 1 - d.label;
    const EvalReport a = evaluate(overfit(), r.checkpoint, overfit_kb());
    const EvalReport b = evaluate(swapped, r.checkpoint, overfit_kb());
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.confusion == b.confusion);
  }
  SUBCASE("probabilities form a distribution") {
    const Classifier clf(r.checkpoint, overfit_kb());
    const std::vector<std::string> tokens = {"football", "chip"};
    const auto p = clf.probabilities(clf.prepare(tokens));
    REQUIRE(p.size() == 2);
    CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-12);
    CHECK(clf.probabilities(clf.prepare({})).size() == 2);
  }
}

TEST_CASE("constant predictor on balanced four-class data scores the majority baseline") {
  Dataset ds;
  ds.classes = {"a", "b", "c", "d"};
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta"};
  for (std::size_t i = 0; i < 40; ++i) ds.docs.push_back({i % 4, {words[i % 4], "shared"}, {}, {}});
  HyperParams hp = tiny();
  hp.epochs = 1;
  TrainResult r = train(ds, overfit_kb(), hp);
  r.checkpoint.params.value("classifier.weight").fill(0.0);
  r.checkpoint.params.value("classifier.bias") = Tensor::vector({0.0, 0.0, 5.0, 0.0});
  const EvalReport e = evaluate(ds, r.checkpoint, overfit_kb());
  CHECK(e.accuracy == 0.25);
  CHECK(e.recall[2] == 1.0);
  CHECK(e.precision[2] == 0.25);
  CHECK(e.recall[0] == 0.0);
  CHECK(e.confusion[0][2] == 10);
}

TEST_CASE("checkpoint round trip") {
  HyperParams hp = tiny();
  hp.gamma = 0.25;
  const TrainResult r = train(overfit(), overfit_kb(), hp);
  const std::string path = temp_file("roundtrip.ckpt");
  save_checkpoint(r.checkpoint, path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.hp == r.checkpoint.hp);
  CHECK(loaded.vocab == r.checkpoint.vocab);
  CHECK(loaded.classes == r.checkpoint.classes);
  CHECK(loaded.concepts == r.checkpoint.concepts);
  CHECK(loaded.rng_state == r.checkpoint.rng_state);
  CHECK(loaded.adam.step == r.checkpoint.adam.step);
  for (const auto& [name, p] : r.checkpoint.params.entries()) {
    CHECK(loaded.params.value(name) == p.value);
    CHECK(loaded.params.get(name).regularized == p.regularized);
  }
  CHECK(serialize_checkpoint(loaded) == serialize_checkpoint(r.checkpoint));

  const EvalReport before = evaluate(overfit(), r.checkpoint, overfit_kb());
  const EvalReport after = evaluate(overfit(), loaded, overfit_kb());
  CHECK(before.accuracy == after.accuracy);
  CHECK(before.confusion == after.confusion);
  const Classifier c1(r.checkpoint, overfit_kb()), c2(loaded, overfit_kb());
  for (const auto& d : overfit().docs) CHECK(c1.probabilities(c1.prepare(d.tokens)) == c2.probabilities(c2.prepare(d.tokens)));
  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected") {
  HyperParams hp = tiny();
  hp.epochs = 1;
  const Checkpoint ckpt = train(overfit(), overfit_kb(), hp).checkpoint;
  const std::string good = serialize_checkpoint(ckpt);
  CHECK_NOTHROW(deserialize_checkpoint(good));

  SUBCASE("bad magic") {
    std::string b = good;
    b[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(b), FormatError);
  }
  SUBCASE("unsupported version") {
    std::string b = good;
    b[4] = 2;
    try {
      deserialize_checkpoint(b);
      FAIL("expected an error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("every truncation fails") {
    for (std::size_t len = 0; len < good.size(); len += 1 + len / 7)
      CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, len)), FormatError);
    CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, good.size() - 1)), FormatError);
  }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(deserialize_checkpoint(good + "x"), FormatError); }
  SUBCASE("tensor length field names the tensor") {
    // The data section is the tail: per tensor u64 length + 4 bytes per value.
    std::size_t data = 0;
    for (const auto& [name, p] : ckpt.params.entries()) data += 8 + 4 * p.value.numel();
    for (const auto& [name, t] : ckpt.adam.m) data += 8 + 4 * t.numel();
    for (const auto& [name, t] : ckpt.adam.v) data += 8 + 4 * t.numel();
    std::string b = good;
    const std::size_t at = b.size() - data;
    const std::string first = ckpt.params.entries().begin()->first;
    CHECK(static_cast<unsigned char>(b[at]) == 4 * ckpt.params.entries().begin()->second.value.numel());
    b[at] = static_cast<char>(b[at] + 4);
    try {
      deserialize_checkpoint(b);
      FAIL("expected an error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("param/" + first) != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(temp_file("does_not_exist.ckpt")), FormatError); }
}

TEST_CASE("gamma sweep") {
  HyperParams hp = tiny();
  hp.epochs = 1;
  const double gammas[] = {0.0, 0.5, 1.0};
  const auto rows = gamma_sweep(overfit(), overfit(), overfit_kb(), hp, gammas);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].gamma == 0.5);
  const auto again = gamma_sweep(overfit(), overfit(), overfit_kb(), hp, gammas);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rows[i].accuracy == again[i].accuracy);
  const double single[] = {0.25};
  CHECK(gamma_sweep(overfit(), overfit(), overfit_kb(), hp, single).size() == 1);
  const double bad[] = {1.5};
  CHECK_THROWS_AS(gamma_sweep(overfit(), overfit(), overfit_kb(), hp, bad), ConfigError);
}

TEST_CASE("settings") {
  std::istringstream in("# comment\ngamma = 0.25\n\nlocal_attn.mode = improved  # trailing\nlr=0.01\n");
  const auto pairs = parse_config(in, "cfg");
  HyperParams hp;
  for (const auto& [k, v] : pairs) hp.set(k, v);
  CHECK(hp.gamma == 0.25);
  CHECK(hp.local_attn == LocalAttnUse::Improved);
  CHECK(hp.lr == 0.01);
  CHECK(HyperParams::from_map(hp.to_map()) == hp);

  CHECK_THROWS_AS(hp.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(hp.set("gamma", "abc"), ConfigError);
  CHECK_THROWS_AS(hp.set("batch", "-3"), ConfigError);
  HyperParams bad;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = HyperParams{};
  bad.hidden = 3;  // 2u not divisible by heads
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  std::istringstream broken("gamma 0.5\n");
  CHECK_THROWS_AS(parse_config(broken, "cfg"), ConfigError);

  const HyperParams d;
  CHECK(d.word_dim == 300);
  CHECK(d.char_dim == 50);
  CHECK(d.concept_dim == 100);
  CHECK(d.dropout == 0.3);
  CHECK(d.batch == 50);
}
