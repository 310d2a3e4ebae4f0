#include "keat/concept_kb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "keat/corpus.hpp"
#include "keat/errors.hpp"

namespace keat {
namespace {

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace

std::size_t ConceptLexicon::concept_id(const std::string& name) {
  auto it = concept_index_.find(name);
  if (it != concept_index_.end()) return it->second;
  const std::size_t id = concepts_.size();
  concepts_.push_back(name);
  concept_index_.emplace(name, id);
  return id;
}

void ConceptLexicon::add(std::string_view surface, const std::string& concept_name, double score) {
  if (!(score >= 0.0) || !std::isfinite(score)) {
    throw ContractError("concept score must be a finite non-negative number");
  }
  const auto tokens = tokenize(surface);
  if (tokens.empty()) throw ContractError("surface form has no tokens");
  if (concept_name.empty()) throw ContractError("empty concept name");
  std::size_t id = 0;
  if (fixed_) {
    auto it = concept_index_.find(concept_name);
    if (it == concept_index_.end()) return;
    id = it->second;
  } else {
    id = concept_id(concept_name);
  }
  auto& list = entries_[join(tokens)];
  auto hit = std::find_if(list.begin(), list.end(), [&](const auto& c) { return c.id == id; });
  if (hit != list.end()) {
    hit->score += score;
  } else {
    list.push_back({id, score});
  }
  std::stable_sort(list.begin(), list.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  max_ngram_ = std::max(max_ngram_, tokens.size());
}

ConceptLexicon ConceptLexicon::parse(std::istream& in, const std::string& source,
                                     const std::vector<std::string>* fixed_concepts) {
  ConceptLexicon lex;
  if (fixed_concepts) {
    for (const auto& c : *fixed_concepts) lex.concept_id(c);
    lex.fixed_ = true;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw FormatError(where + ": expected surface<TAB>concept<TAB>score");
    }
    double score = 0.0;
    try {
      score = parse_double(std::string_view(line).substr(t2 + 1));
    } catch (const std::invalid_argument&) {
      throw FormatError(where + ": score is not a number");
    }
    try {
      lex.add(std::string_view(line).substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), score);
    } catch (const ContractError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return lex;
}

ConceptLexicon ConceptLexicon::load(const std::string& path,
                                    const std::vector<std::string>* fixed_concepts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open lexicon " + path);
  return parse(in, path, fixed_concepts);
}

std::span<const ScoredConcept> ConceptLexicon::lookup(std::string_view surface) const {
  auto it = entries_.find(std::string(surface));
  if (it == entries_.end()) {
    // accept un-normalized input as well
    const auto normalized = join(tokenize(surface));
    it = entries_.find(normalized);
    if (it == entries_.end()) return {};
  }
  return it->second;
}

void ConceptLexicon::save(std::ostream& out) const {
  for (const auto& [surface, list] : entries_) {
    for (const auto& c : list) {
      out << surface << '\t' << concepts_[c.id] << '\t' << format_double(c.score) << '\n';
    }
  }
}

bool ConceptLexicon::operator==(const ConceptLexicon& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [surface, list] : entries_) {
    auto it = other.entries_.find(surface);
    if (it == other.entries_.end() || it->second.size() != list.size()) return false;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (concepts_[list[i].id] != other.concepts_[it->second[i].id] ||
          list[i].score != it->second[i].score) {
        return false;
      }
    }
  }
  return true;
}

ConceptSet conceptualize(std::span<const std::string> tokens, const ConceptSource& source,
                         std::size_t max_concepts) {
  ConceptSet merged;
  const std::size_t n = tokens.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(source.max_ngram(), n - i); len >= 1; --len) {
      const std::string surface = join(tokens.subspan(i, len));
      const auto hits = source.lookup(surface);
      if (hits.empty()) continue;
      for (const auto& hit : hits) {
        auto it = std::find_if(merged.begin(), merged.end(),
                               [&](const auto& m) { return m.concept_id == hit.id; });
        if (it != merged.end()) {
          it->score += hit.score;
        } else {
          merged.push_back({hit.id, hit.score, surface});
        }
      }
      matched = len;
      break;
    }
    i += matched ? matched : 1;
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  if (merged.size() > max_concepts) merged.resize(max_concepts);
  return merged;
}

Var embed_concepts(Tape& tape, const ParamStore& store, const std::string& table,
                   const ConceptSet& concepts) {
  std::vector<std::size_t> ids;
  ids.reserve(concepts.size());
  for (const auto& c : concepts) ids.push_back(c.concept_id);
  return tape.gather_rows(store, table, ids);
}

}  // namespace keat
