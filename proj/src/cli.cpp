#include "keat/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "keat/checkpoint.hpp"
#include "keat/concept_kb.hpp"
#include "keat/corpus.hpp"
#include "keat/errors.hpp"
#include "keat/gradcheck.hpp"
#include "keat/hyperparams.hpp"
#include "keat/trainer.hpp"

namespace keat {

namespace {

// Raised for bad flags, missing files and similar operator mistakes.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Probabilities printed with 9 significant digits, always with '.'.
std::string format_prob(double p) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.9g", p);
  std::string s(buf, static_cast<std::size_t>(n));
  std::replace(s.begin(), s.end(), ',', '.');
  return s;
}

void require_file(const std::string& flag, const std::string& path) {
  std::error_code ec;
  if (path.empty()) throw UsageError(flag + " is required");
  if (!std::filesystem::is_regular_file(path, ec)) throw UsageError(flag + ": no such file: " + path);
}

// Options shared by every command that builds or trains a model.
struct HpFlags {
  std::string config;
  std::optional<std::string> seed, gamma, top_k, epochs, batch, lr, lambda, hidden, heads, local_attn;

  void add_to(CLI::App* cmd, bool with_gamma) {
    cmd->add_option("--config", config, "key = value settings file (falls back to $KEAT_CONFIG)");
    cmd->add_option("--seed", seed, "random seed");
    if (with_gamma) cmd->add_option("--gamma", gamma, "text/concept fusion weight in [0,1]");
    cmd->add_option("--top-k", top_k, "keep only the top-k information-gain tokens (0 = all)");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch", batch, "batch size");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--lambda", lambda, "L2 weight");
    cmd->add_option("--hidden", hidden, "GRU units per direction");
    cmd->add_option("--heads", heads, "attention heads");
    cmd->add_option("--local-attn", local_attn, "none | original | improved");
  }

  HyperParams resolve() const {
    HyperParams hp;
    std::string path = config;
    if (path.empty()) {
      if (const char* env = std::getenv("KEAT_CONFIG"); env && *env) path = env;
    }
    if (!path.empty()) {
      require_file("--config", path);
      for (const auto& [k, v] : read_config_file(path)) hp.set(k, v);
    }
    const std::pair<const char*, const std::optional<std::string>*> overrides[] = {
        {"seed", &seed},     {"gamma", &gamma},   {"ig_top_k", &top_k},
        {"epochs", &epochs}, {"batch", &batch},   {"lr", &lr},
        {"lambda", &lambda}, {"hidden", &hidden}, {"heads", &heads},
        {"local_attn.mode", &local_attn},
    };
    for (const auto& [key, value] : overrides) {
      if (*value) hp.set(key, **value);
    }
    hp.validate();
    return hp;
  }
};

void write_metrics_header(std::ostream& os, bool with_eval) {
  os << "epoch\tloss\taccuracy";
  if (with_eval) os << "\teval_accuracy";
  os << '\n';
}

void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
  os << m.epoch << '\t' << format_double(m.loss) << '\t' << format_double(m.accuracy);
  if (m.eval_accuracy) os << '\t' << format_double(*m.eval_accuracy);
  os << '\n';
  os.flush();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write " + path);
  return f;
}

void write_eval_report(std::ostream& os, const EvalReport& r, const std::vector<std::string>& classes) {
  os << "accuracy\t" << format_double(r.accuracy) << '\n';
  os << "correct\t" << r.correct << '\n';
  os << "total\t" << r.total << '\n';
  os << '\n' << "class\tprecision\trecall\n";
  for (std::size_t c = 0; c < classes.size(); ++c) {
    os << classes[c] << '\t' << format_double(r.precision[c]) << '\t' << format_double(r.recall[c]) << '\n';
  }
  os << '\n' << "actual\\predicted";
  for (const auto& c : classes) os << '\t' << c;
  os << '\n';
  for (std::size_t a = 0; a < classes.size(); ++a) {
    os << classes[a];
    for (std::size_t p = 0; p < classes.size(); ++p) os << '\t' << r.confusion[a][p];
    os << '\n';
  }
}

std::vector<double> parse_gammas(const std::string& text, std::ostream& err) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw UsageError("--gammas: empty entry in '" + text + "'");
    double g = 0.0;
    try {
      g = parse_double(item.substr(b, e - b + 1));
    } catch (const std::exception&) {
      throw UsageError("--gammas: '" + item + "' is not a number");
    }
    if (!(g >= 0.0 && g <= 1.0)) throw UsageError("--gammas: " + item + " is outside [0,1]");
    if (std::find(out.begin(), out.end(), g) != out.end()) {
      err << "warning: duplicate gamma " << format_double(g) << " ignored\n";
      continue;
    }
    out.push_back(g);
  }
  if (out.empty()) throw UsageError("--gammas: no values given");
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err, const CliHooks& hooks) {
  CLI::App app{"Knowledge-enhanced attention Bi-GRU short-text classifier", "keat"};
  app.require_subcommand(1);

  std::string train_path, eval_path, lexicon_path, out_path, model_path, metrics_path, input_path;
  std::string gammas = "0,0.25,0.5,0.75,1";
  std::optional<std::size_t> ig_top_k;
  double perturb = 1e-5;

  HpFlags train_hp, sweep_hp;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("--train", train_path, "training TSV (label<TAB>text)")->required();
  train_cmd->add_option("--lexicon", lexicon_path, "concept lexicon TSV (surface<TAB>concept<TAB>score)")->required();
  train_cmd->add_option("--out", out_path, "checkpoint to write")->required();
  train_cmd->add_option("--eval", eval_path, "held-out TSV scored after every epoch");
  train_cmd->add_option("--metrics", metrics_path, "write per-epoch metrics here instead of stdout");
  train_hp.add_to(train_cmd, true);

  auto* eval_cmd = app.add_subcommand("eval", "accuracy, per-class precision/recall and confusion matrix");
  eval_cmd->add_option("--model", model_path, "checkpoint")->required();
  eval_cmd->add_option("--eval", eval_path, "labelled TSV")->required();
  eval_cmd->add_option("--lexicon", lexicon_path, "concept lexicon TSV")->required();
  eval_cmd->add_option("--out", out_path, "write the report here instead of stdout");

  auto* predict_cmd = app.add_subcommand("predict", "label each input line");
  predict_cmd->add_option("--model", model_path, "checkpoint")->required();
  predict_cmd->add_option("--lexicon", lexicon_path, "concept lexicon TSV")->required();
  predict_cmd->add_option("--input", input_path, "text lines (default: stdin)");

  auto* ig_cmd = app.add_subcommand("ig", "information-gain ranking of the training tokens");
  ig_cmd->add_option("--train", train_path, "labelled TSV")->required();
  ig_cmd->add_option("--top-k", ig_top_k, "print only the first k rows");
  ig_cmd->add_option("--out", out_path, "write the report here instead of stdout");

  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  grad_cmd->add_option("--perturb", perturb, "finite-difference step");

  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate once per gamma");
  sweep_cmd->add_option("--train", train_path, "training TSV")->required();
  sweep_cmd->add_option("--eval", eval_path, "held-out TSV")->required();
  sweep_cmd->add_option("--lexicon", lexicon_path, "concept lexicon TSV")->required();
  sweep_cmd->add_option("--gammas", gammas, "comma-separated gamma values in [0,1]");
  sweep_cmd->add_option("--out", out_path, "write the table here instead of stdout");
  sweep_hp.add_to(sweep_cmd, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      require_file("--train", train_path);
      require_file("--lexicon", lexicon_path);
      if (!eval_path.empty()) require_file("--eval", eval_path);
      const HyperParams hp = train_hp.resolve();
      const Dataset train_set = load_dataset(train_path);
      const ConceptLexicon lexicon = ConceptLexicon::load(lexicon_path);
      std::optional<Dataset> eval_set;
      if (!eval_path.empty()) eval_set = load_dataset(eval_path, &train_set.classes);

      std::ofstream metrics_file;
      if (!metrics_path.empty()) metrics_file = open_output(metrics_path);
      std::ostream& mout = metrics_path.empty() ? out : metrics_file;
      write_metrics_header(mout, eval_set.has_value());
      const TrainResult result = train(train_set, lexicon, hp, eval_set ? &*eval_set : nullptr,
                                       [&](const EpochMetrics& m) { write_metrics_row(mout, m); });
      save_checkpoint(result.checkpoint, out_path);
      err << "wrote " << out_path << '\n';
      return kExitOk;
    }

    if (*eval_cmd) {
      require_file("--model", model_path);
      require_file("--eval", eval_path);
      require_file("--lexicon", lexicon_path);
      const Checkpoint ckpt = load_checkpoint(model_path);
      const ConceptLexicon lexicon = ConceptLexicon::load(lexicon_path, &ckpt.concepts);
      const Dataset data = load_dataset(eval_path, &ckpt.classes);
      const EvalReport report = evaluate(data, ckpt, lexicon);
      if (out_path.empty()) {
        write_eval_report(out, report, ckpt.classes);
      } else {
        auto f = open_output(out_path);
        write_eval_report(f, report, ckpt.classes);
      }
      return kExitOk;
    }

    if (*predict_cmd) {
      require_file("--model", model_path);
      require_file("--lexicon", lexicon_path);
      if (!input_path.empty()) require_file("--input", input_path);
      const Checkpoint ckpt = load_checkpoint(model_path);
      const ConceptLexicon lexicon = ConceptLexicon::load(lexicon_path, &ckpt.concepts);
      const Classifier clf(ckpt, lexicon);
      std::ifstream file;
      if (!input_path.empty()) file.open(input_path, std::ios::binary);
      std::istream& src = input_path.empty() ? in : file;
      std::string line;
      while (std::getline(src, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // A labelled line contributes only its text.
        const auto tab = line.find('\t');
        const std::string text = tab == std::string::npos ? line : line.substr(tab + 1);
        const auto tokens = tokenize(text);
        const auto probs = clf.probabilities(clf.prepare(tokens));
        const std::size_t best = static_cast<std::size_t>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        out << text << '\t' << ckpt.classes[best] << '\t';
        for (std::size_t c = 0; c < probs.size(); ++c) out << (c ? "," : "") << format_prob(probs[c]);
        out << '\n';
      }
      return kExitOk;
    }

    if (*ig_cmd) {
      require_file("--train", train_path);
      const Dataset data = load_dataset(train_path);
      const IgReport report = information_gain_report(data.docs);
      const std::size_t limit = ig_top_k ? *ig_top_k : static_cast<std::size_t>(-1);
      if (out_path.empty()) {
        write_ig_report(out, report, limit);
      } else {
        auto f = open_output(out_path);
        write_ig_report(f, report, limit);
      }
      return kExitOk;
    }

    if (*grad_cmd) {
      if (!(perturb > 0.0)) throw UsageError("--perturb must be positive");
      GradcheckOptions opts;
      opts.perturb = perturb;
      opts.corrupt_backward = hooks.corrupt_backward;
      const GradcheckReport report = run_gradcheck(opts);
      out << "variant\ttensor\tentries\tmax_rel_error\tstatus\n";
      for (const auto& t : report.tensors) {
        out << t.variant << '\t' << t.name << '\t' << t.entries << '\t' << format_double(t.max_rel_error)
            << '\t' << (t.passed ? "ok" : "FAIL") << '\n';
      }
      if (report.passed()) return kExitOk;
      err << "gradient check failed for:\n";
      for (const auto* t : report.failures()) {
        err << "  " << t->variant << ' ' << t->name << " (max relative error "
            << format_double(t->max_rel_error) << ")\n";
      }
      return kExitCheckFailed;
    }

    if (*sweep_cmd) {
      require_file("--train", train_path);
      require_file("--eval", eval_path);
      require_file("--lexicon", lexicon_path);
      const std::vector<double> gs = parse_gammas(gammas, err);
      const HyperParams hp = sweep_hp.resolve();
      const Dataset train_set = load_dataset(train_path);
      const Dataset eval_set = load_dataset(eval_path, &train_set.classes);
      const ConceptLexicon lexicon = ConceptLexicon::load(lexicon_path);
      std::ofstream file;
      if (!out_path.empty()) file = open_output(out_path);
      std::ostream& tout = out_path.empty() ? out : file;
      tout << "gamma\taccuracy\n";
      for (double g : gs) {
        const double one[] = {g};
        const auto rows = gamma_sweep(train_set, eval_set, lexicon, hp, one);
        tout << format_double(rows[0].gamma) << '\t' << format_double(rows[0].accuracy) << '\n';
        tout.flush();
      }
      return kExitOk;
    }
  } catch (const NumericalAbort& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace keat
