#include "keat/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "keat/errors.hpp"

namespace keat {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (alnum) {
      current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::size_t> char_ids(std::string_view word, std::size_t cap) {
  std::vector<std::size_t> ids;
  ids.reserve(std::min(cap, word.size()));
  for (char ch : word.substr(0, cap)) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 'a' && c <= 'z') {
      ids.push_back(1 + (c - 'a'));
    } else if (c >= 'A' && c <= 'Z') {
      ids.push_back(1 + (c - 'A'));
    } else if (c >= '0' && c <= '9') {
      ids.push_back(27 + (c - '0'));
    } else {
      ids.push_back(kCharUnk);
    }
  }
  if (ids.empty()) ids.push_back(kCharUnk);
  return ids;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  add(std::string(kUnkToken), 0);
  add(std::string(kPadToken), 0);
}

std::size_t Vocab::add(const std::string& token, std::uint64_t count) {
  auto it = index_.find(token);
  if (it != index_.end()) {
    counts_[it->second] += count;
    return it->second;
  }
  const std::size_t idx = tokens_.size();
  tokens_.push_back(token);
  counts_.push_back(count);
  index_.emplace(token, idx);
  return idx;
}

Vocab Vocab::build(std::span<const Document> docs, std::size_t min_count,
                   std::span<const std::string> allowed) {
  std::map<std::string, std::uint64_t> freq;
  for (const auto& d : docs)
    for (const auto& t : d.tokens) ++freq[t];
  const std::set<std::string> keep(allowed.begin(), allowed.end());
  std::vector<std::pair<std::string, std::uint64_t>> items;
  for (auto& [tok, n] : freq) {
    if (n < min_count) continue;
    if (!keep.empty() && !keep.count(tok)) continue;
    if (tok == kUnkToken || tok == kPadToken) continue;
    items.emplace_back(tok, n);
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : items) v.add(tok, n);
  return v;
}

std::size_t Vocab::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

void Vocab::save(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write vocabulary to " + path);
  save(out);
}

Vocab Vocab::load(std::istream& in) {
  Vocab v;
  v.tokens_.clear();
  v.counts_.clear();
  v.index_.clear();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("vocabulary line " + std::to_string(line_no) + ": missing tab");
    }
    const std::string_view count_text = std::string_view(line).substr(tab + 1);
    std::uint64_t count = 0;
    auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
    if (ec != std::errc() || ptr != count_text.data() + count_text.size()) {
      throw FormatError("vocabulary line " + std::to_string(line_no) + ": bad count");
    }
    const std::string token = line.substr(0, tab);
    if (v.index_.count(token)) {
      throw FormatError("vocabulary line " + std::to_string(line_no) + ": duplicate token");
    }
    v.add(token, count);
  }
  if (v.size() < 2 || v.tokens_[kUnk] != kUnkToken || v.tokens_[kPad] != kPadToken) {
    throw FormatError("vocabulary must start with <unk> and <pad>");
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open vocabulary " + path);
  return load(in);
}

void index_documents(std::span<Document> docs, const Vocab& vocab, std::size_t max_word_chars) {
  for (auto& d : docs) {
    d.word_ids.clear();
    d.char_ids.clear();
    for (const auto& t : d.tokens) {
      d.word_ids.push_back(vocab.index(t));
      d.char_ids.push_back(char_ids(t, max_word_chars));
    }
  }
}

// ---------------------------------------------------------------------------
// Dataset

Dataset parse_dataset(std::istream& in, const std::string& source,
                      const std::vector<std::string>* fixed_classes) {
  Dataset ds;
  std::map<std::string, std::size_t> label_index;
  if (fixed_classes) {
    ds.classes = *fixed_classes;
    for (std::size_t i = 0; i < ds.classes.size(); ++i) label_index[ds.classes[i]] = i;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(where + ": expected <label>\\t<text>");
    const std::string label = line.substr(0, tab);
    if (label.empty()) throw FormatError(where + ": empty label");
    Document doc;
    doc.tokens = tokenize(std::string_view(line).substr(tab + 1));
    if (doc.tokens.empty()) throw FormatError(where + ": text has no tokens");
    auto it = label_index.find(label);
    if (it == label_index.end()) {
      if (fixed_classes) throw FormatError(where + ": unknown label '" + label + "'");
      it = label_index.emplace(label, ds.classes.size()).first;
      ds.classes.push_back(label);
    }
    doc.label = it->second;
    ds.docs.push_back(std::move(doc));
  }
  return ds;
}

Dataset load_dataset(const std::string& path, const std::vector<std::string>* fixed_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset " + path);
  return parse_dataset(in, path, fixed_classes);
}

// ---------------------------------------------------------------------------
// Information gain

double entropy(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ContractError("entropy: negative or NaN probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("entropy: probabilities do not sum to 1");
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

namespace {

// counts indexed by label; present[c] <= total[c]
double ig_from_counts(const std::vector<std::size_t>& total, const std::vector<std::size_t>& present) {
  std::size_t n = 0, n_present = 0;
  for (std::size_t c = 0; c < total.size(); ++c) {
    n += total[c];
    n_present += present[c];
  }
  const std::size_t n_absent = n - n_present;
  auto dist = [&](auto count_of, std::size_t denom) {
    std::vector<double> p(total.size());
    for (std::size_t c = 0; c < total.size(); ++c)
      p[c] = static_cast<double>(count_of(c)) / static_cast<double>(denom);
    return entropy(p);
  };
  const double h_c = dist([&](std::size_t c) { return total[c]; }, n);
  double h_cond = 0.0;
  if (n_present > 0) {
    h_cond += static_cast<double>(n_present) / static_cast<double>(n) *
              dist([&](std::size_t c) { return present[c]; }, n_present);
  }
  if (n_absent > 0) {
    h_cond += static_cast<double>(n_absent) / static_cast<double>(n) *
              dist([&](std::size_t c) { return total[c] - present[c]; }, n_absent);
  }
  return h_c - h_cond;
}

std::size_t label_count(std::span<const Document> docs) {
  std::size_t c = 0;
  for (const auto& d : docs) c = std::max(c, d.label + 1);
  return c;
}

}  // namespace

double information_gain(std::span<const Document> docs, std::string_view token) {
  if (docs.empty()) throw ContractError("information_gain: no documents");
  const std::size_t n_classes = label_count(docs);
  std::vector<std::size_t> total(n_classes, 0), present(n_classes, 0);
  for (const auto& d : docs) {
    ++total[d.label];
    if (std::find(d.tokens.begin(), d.tokens.end(), token) != d.tokens.end()) ++present[d.label];
  }
  return ig_from_counts(total, present);
}

IgReport information_gain_report(std::span<const Document> docs) {
  IgReport report;
  if (docs.empty()) return report;
  const std::size_t n_classes = label_count(docs);
  std::vector<std::size_t> total(n_classes, 0);
  std::map<std::string, std::vector<std::size_t>> presence;
  for (const auto& d : docs) {
    ++total[d.label];
    const std::set<std::string> uniq(d.tokens.begin(), d.tokens.end());
    for (const auto& t : uniq) {
      auto& counts = presence[t];
      if (counts.empty()) counts.assign(n_classes, 0);
      ++counts[d.label];
    }
  }
  for (const auto& [tok, counts] : presence) {
    IgEntry e;
    e.token = tok;
    for (std::size_t c : counts) e.doc_freq += c;
    e.ig_bits = ig_from_counts(total, counts);
    report.entries.push_back(std::move(e));
  }
  std::sort(report.entries.begin(), report.entries.end(), [](const IgEntry& a, const IgEntry& b) {
    if (a.ig_bits != b.ig_bits) return a.ig_bits > b.ig_bits;
    if (a.doc_freq != b.doc_freq) return a.doc_freq > b.doc_freq;
    return a.token < b.token;
  });
  for (std::size_t i = 0; i < report.entries.size(); ++i) report.entries[i].rank = i + 1;
  return report;
}

std::vector<std::string> select_top_k(const IgReport& report, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, report.entries.size()); ++i)
    out.push_back(report.entries[i].token);
  return out;
}

void write_ig_report(std::ostream& out, const IgReport& report, std::size_t limit) {
  out << "token\tdoc_freq\tig_bits\trank\n";
  for (std::size_t i = 0; i < std::min(limit, report.entries.size()); ++i) {
    const auto& e = report.entries[i];
    out << e.token << '\t' << e.doc_freq << '\t' << format_double(e.ig_bits) << '\t' << e.rank
        << '\n';
  }
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace keat
