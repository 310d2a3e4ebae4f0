#include "keat/model.hpp"

#include <algorithm>

#include "keat/errors.hpp"
#include "keat/ops.hpp"

namespace keat {

Example make_example(std::span<const std::string> tokens, const Vocab& vocab,
                     const ConceptSource& concepts, const HyperParams& hp, std::size_t label) {
  Example ex;
  ex.label = label;
  for (const auto& t : tokens) {
    ex.word_ids.push_back(vocab.index(t));
    ex.char_ids.push_back(char_ids(t, hp.max_word_chars));
  }
  if (ex.word_ids.empty()) {
    ex.word_ids.push_back(Vocab::kUnk);
    ex.char_ids.push_back({kCharUnk});
  }
  ex.concepts = conceptualize(tokens, concepts, hp.max_concepts);
  return ex;
}

bool is_regularized(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return !(leaf == "bias" || leaf == "b1" || leaf == "b2" || leaf.rfind("b_", 0) == 0);
}

void apply_regularization_policy(ParamStore& store) {
  for (auto& [name, p] : store.entries()) {
    p.regularized = is_regularized(name);
    p.unregularized_rows.clear();
    if (name == "embed.word") {
      for (std::size_t r : {Vocab::kUnk, Vocab::kPad}) {
        if (r < p.value.rows()) p.unregularized_rows.push_back(r);
      }
    }
  }
}

ParamStore init_params(const HyperParams& hp, const ModelShape& shape, std::mt19937_64& rng) {
  hp.validate();
  if (shape.vocab < 2) throw ConfigError("vocabulary must hold at least UNK and PAD");
  if (shape.classes < 2) throw ConfigError("need at least two classes");
  std::normal_distribution<double> normal(0.0, hp.init_std);
  ParamStore store;
  auto weight = [&](const std::string& name, Shape s) {
    Tensor t(std::move(s));
    for (double& v : t.data()) v = normal(rng);
    store.add(name, std::move(t));
  };
  auto zeros = [&](const std::string& name, Shape s) { store.add(name, Tensor(std::move(s))); };

  const std::size_t u = hp.hidden;
  const std::size_t d_model = 2 * u;
  const std::size_t in_dim = hp.word_dim + hp.char_dim;
  weight("embed.word", {shape.vocab, hp.word_dim});
  weight("embed.char", {kCharAlphabetSize, hp.char_dim});
  weight("char_cnn.weight", {hp.kernel * hp.char_dim, hp.char_dim});
  zeros("char_cnn.bias", {hp.char_dim});
  for (const char* dir : {"gru.fwd", "gru.bwd"}) {
    for (const char* gate : {"z", "r", "h"}) {
      const std::string p = std::string(dir);
      weight(p + ".w_" + gate, {in_dim, u});
      weight(p + ".u_" + gate, {u, u});
      zeros(p + ".b_" + gate, {u});
    }
  }
  if (hp.local_attn == LocalAttnUse::None) {
    for (const char* w : {"mha.w_q", "mha.w_k", "mha.w_v", "mha.w_o"}) weight(w, {d_model, d_model});
  } else {
    const std::size_t s = hp.attn_dim;
    const std::size_t d_head = d_model / hp.heads;
    for (std::size_t k = 0; k < hp.heads; ++k) {
      const std::string p = "local." + std::to_string(k);
      weight(p + ".w_e", {d_model, s});
      zeros(p + ".b_e", {s});
      weight(p + ".v_e", {s});
      store.add(p + ".w_beta", Tensor::scalar(1.0));
      weight(p + ".w_q", {d_model, s});
      weight(p + ".v_q", {s});
      weight(p + ".w_d", {d_model, s});
      weight(p + ".v_d", {s});
      weight(p + ".w_d_freq", {s});
      weight(p + ".u_d", {s});
      weight(p + ".w_v", {d_model, d_head});
    }
  }
  weight("concept.embed", {shape.concepts, hp.concept_dim});
  weight("fusion.w1", {hp.concept_dim + d_model, hp.attn_dim});
  zeros("fusion.b1", {1});
  weight("fusion.v1", {hp.attn_dim});
  weight("fusion.w2", {hp.concept_dim, hp.attn_dim});
  weight("fusion.v2", {hp.attn_dim});
  zeros("fusion.b2", {1});
  weight("classifier.weight", {d_model + hp.concept_dim, shape.classes});
  zeros("classifier.bias", {shape.classes});
  apply_regularization_policy(store);
  return store;
}

Var forward_logits(Tape& tape, const ParamStore& store, const HyperParams& hp, const Example& ex,
                   bool training, std::mt19937_64* rng, ForwardTrace* trace) {
  if (ex.word_ids.empty()) throw ContractError("forward: example has no tokens");
  ForwardTrace local_trace;
  ForwardTrace& tr = trace ? *trace : local_trace;

  tr.embedded = embed_tokens(tape, store, ex.word_ids, ex.char_ids, hp.kernel);
  if (training && hp.dropout > 0.0) {
    if (!rng) throw ContractError("forward: training with dropout needs an RNG");
    tr.embedded = ops::dropout(tr.embedded, hp.dropout, *rng);
  }
  tr.hidden = bigru_forward(tr.embedded, gru_weights(tape, store, "gru.fwd"),
                            gru_weights(tape, store, "gru.bwd"));

  if (hp.local_attn == LocalAttnUse::None) {
    MultiHeadWeights mw{tape.param(store, "mha.w_q"), tape.param(store, "mha.w_k"),
                        tape.param(store, "mha.w_v"), tape.param(store, "mha.w_o"), hp.heads};
    tr.multihead = multihead_self_attention(tr.hidden, mw);
    tr.token_weights = token_weights(tr.multihead.mean_weights);
    tr.pooled = attention_pool(tr.multihead.output, tr.token_weights);
    tr.text_feature = tr.pooled.pooled;
  } else {
    const LocalAttnMode mode = hp.local_mode();
    std::vector<Var> outputs;
    for (std::size_t k = 0; k < hp.heads; ++k) {
      const auto w = local_attn_weights(tape, store, "local." + std::to_string(k));
      tr.local.push_back(local_attention_layer(tr.hidden, w, mode));
      outputs.push_back(tr.local.back().output);
    }
    tr.text_feature = ops::concat(outputs, 0);
  }

  tr.concepts = embed_concepts(tape, store, "concept.embed", ex.concepts);
  tr.concept_attn = concept_attention(tr.text_feature, tr.concepts,
                                      fusion_weights(tape, store, "fusion"), hp.gamma,
                                      hp.use_raw_alpha);
  const Var features = ops::concat(tr.text_feature, tr.concept_attn.feature, 0);
  const std::size_t f = features.value().numel();
  const Var logits = ops::add_bias(
      ops::matmul(ops::reshape(features, {1, f}), tape.param(store, "classifier.weight")),
      tape.param(store, "classifier.bias"));
  tr.logits = ops::reshape(logits, {logits.value().cols()});
  return tr.logits;
}

}  // namespace keat
