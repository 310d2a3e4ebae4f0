#include "keat/hyperparams.hpp"

#include <charconv>
#include <fstream>
#include <functional>

#include "keat/corpus.hpp"
#include "keat/errors.hpp"

namespace keat {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_unsigned(const std::string&, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string&, const std::string& value) {
  try {
    return parse_double(value);
  } catch (const std::invalid_argument&) {
    throw ConfigError("expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string&, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("expected true or false, got '" + value + "'");
}

const char* to_string(LocalAttnUse u) {
  switch (u) {
    case LocalAttnUse::Original:
      return "original";
    case LocalAttnUse::Improved:
      return "improved";
    default:
      return "none";
  }
}

}  // namespace

void HyperParams::set(const std::string& key, const std::string& value) {
  using Setter = std::function<void(HyperParams&, const std::string&)>;
  auto size_field = [](std::size_t HyperParams::*f) -> Setter {
    return [f](HyperParams& hp, const std::string& v) { hp.*f = parse_unsigned<std::size_t>("", v); };
  };
  auto real_field = [](double HyperParams::*f) -> Setter {
    return [f](HyperParams& hp, const std::string& v) { hp.*f = parse_real("", v); };
  };
  static const std::map<std::string, Setter> setters = {
      {"word_dim", size_field(&HyperParams::word_dim)},
      {"char_dim", size_field(&HyperParams::char_dim)},
      {"concept_dim", size_field(&HyperParams::concept_dim)},
      {"hidden", size_field(&HyperParams::hidden)},
      {"heads", size_field(&HyperParams::heads)},
      {"kernel", size_field(&HyperParams::kernel)},
      {"attn_dim", size_field(&HyperParams::attn_dim)},
      {"max_word_chars", size_field(&HyperParams::max_word_chars)},
      {"max_concepts", size_field(&HyperParams::max_concepts)},
      {"gamma", real_field(&HyperParams::gamma)},
      {"fusion.use_raw_alpha",
       [](HyperParams& hp, const std::string& v) { hp.use_raw_alpha = parse_bool("", v); }},
      {"lambda", real_field(&HyperParams::lambda)},
      {"dropout", real_field(&HyperParams::dropout)},
      {"batch", size_field(&HyperParams::batch)},
      {"lr", real_field(&HyperParams::lr)},
      {"beta1", real_field(&HyperParams::beta1)},
      {"beta2", real_field(&HyperParams::beta2)},
      {"eps", real_field(&HyperParams::eps)},
      {"clip_norm", real_field(&HyperParams::clip_norm)},
      {"init_std", real_field(&HyperParams::init_std)},
      {"epochs", size_field(&HyperParams::epochs)},
      {"seed",
       [](HyperParams& hp, const std::string& v) { hp.seed = parse_unsigned<std::uint64_t>("", v); }},
      {"ig_top_k", size_field(&HyperParams::ig_top_k)},
      {"min_count", size_field(&HyperParams::min_count)},
      {"local_attn.mode",
       [](HyperParams& hp, const std::string& v) {
         if (v == "none") {
           hp.local_attn = LocalAttnUse::None;
         } else if (v == "original") {
           hp.local_attn = LocalAttnUse::Original;
         } else if (v == "improved") {
           hp.local_attn = LocalAttnUse::Improved;
         } else {
           throw ConfigError("expected none, original or improved, got '" + v + "'");
         }
       }},
      {"local_attn.window",
       [](HyperParams& hp, const std::string& v) {
         if (v == "learned") {
           hp.local_window = WindowSource::Learned;
         } else if (v == "frequency") {
           hp.local_window = WindowSource::Frequency;
         } else {
           throw ConfigError("expected learned or frequency, got '" + v + "'");
         }
       }},
      {"local_attn.omega", real_field(&HyperParams::omega)},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown setting '" + key + "'");
  try {
    it->second(*this, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::map<std::string, std::string> HyperParams::to_map() const {
  auto u = [](std::uint64_t v) { return std::to_string(v); };
  return {
      {"word_dim", u(word_dim)},
      {"char_dim", u(char_dim)},
      {"concept_dim", u(concept_dim)},
      {"hidden", u(hidden)},
      {"heads", u(heads)},
      {"kernel", u(kernel)},
      {"attn_dim", u(attn_dim)},
      {"max_word_chars", u(max_word_chars)},
      {"max_concepts", u(max_concepts)},
      {"gamma", format_double(gamma)},
      {"fusion.use_raw_alpha", use_raw_alpha ? "true" : "false"},
      {"lambda", format_double(lambda)},
      {"dropout", format_double(dropout)},
      {"batch", u(batch)},
      {"lr", format_double(lr)},
      {"beta1", format_double(beta1)},
      {"beta2", format_double(beta2)},
      {"eps", format_double(eps)},
      {"clip_norm", format_double(clip_norm)},
      {"init_std", format_double(init_std)},
      {"epochs", u(epochs)},
      {"seed", u(seed)},
      {"ig_top_k", u(ig_top_k)},
      {"min_count", u(min_count)},
      {"local_attn.mode", to_string(local_attn)},
      {"local_attn.window", local_window == WindowSource::Frequency ? "frequency" : "learned"},
      {"local_attn.omega", format_double(omega)},
  };
}

HyperParams HyperParams::from_map(const std::map<std::string, std::string>& values) {
  HyperParams hp;
  for (const auto& [k, v] : values) hp.set(k, v);
  return hp;
}

void HyperParams::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(word_dim, "word_dim");
  positive(char_dim, "char_dim");
  positive(concept_dim, "concept_dim");
  positive(hidden, "hidden");
  positive(heads, "heads");
  positive(kernel, "kernel");
  positive(attn_dim, "attn_dim");
  positive(max_word_chars, "max_word_chars");
  positive(batch, "batch");
  positive(epochs, "epochs");
  if ((2 * hidden) % heads != 0) {
    throw ConfigError("2 * hidden (" + std::to_string(2 * hidden) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
  if (!(omega > 0.0)) throw ConfigError("local_attn.omega must be positive");
}

LocalAttnMode HyperParams::local_mode() const {
  LocalAttnMode m;
  m.score = local_attn == LocalAttnUse::Improved ? ScoreMode::ImprovedAbs : ScoreMode::Original;
  m.window = local_window;
  m.omega = omega;
  return m;
}

std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in,
                                                              const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, path);
}

}  // namespace keat
