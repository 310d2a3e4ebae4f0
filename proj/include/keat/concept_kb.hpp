#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "keat/tape.hpp"

namespace keat {

struct ScoredConcept {
  std::size_t id = 0;
  double score = 0.0;
  bool operator==(const ScoredConcept&) const = default;
};

/// Maps a normalized surface form (tokens joined by single spaces) to scored
/// concepts. A remote knowledge-base client can implement this in place of
/// the file-backed lexicon.
class ConceptSource {
 public:
  virtual ~ConceptSource() = default;
  virtual std::span<const ScoredConcept> lookup(std::string_view surface) const = 0;
  /// Longest surface form, in tokens.
  virtual std::size_t max_ngram() const = 0;
  virtual std::size_t concept_count() const = 0;
  virtual const std::string& concept_name(std::size_t id) const = 0;
};

/// File-backed stand-in for a concept graph: `surface<TAB>concept<TAB>score`.
class ConceptLexicon final : public ConceptSource {
 public:
  /// With `fixed_concepts`, concept ids follow that list and rows naming any
  /// other concept are skipped (used when a model already owns the ids).
  static ConceptLexicon load(const std::string& path,
                             const std::vector<std::string>* fixed_concepts = nullptr);
  static ConceptLexicon parse(std::istream& in, const std::string& source,
                              const std::vector<std::string>* fixed_concepts = nullptr);

  /// Adds a row. Surface is normalized with the corpus tokenizer; repeated
  /// (surface, concept) rows add their scores.
  void add(std::string_view surface, const std::string& concept_name, double score);

  std::span<const ScoredConcept> lookup(std::string_view surface) const override;
  std::size_t max_ngram() const override { return max_ngram_; }
  std::size_t concept_count() const override { return concepts_.size(); }
  const std::string& concept_name(std::size_t id) const override { return concepts_.at(id); }

  const std::vector<std::string>& concepts() const { return concepts_; }
  std::size_t surface_count() const { return entries_.size(); }

  /// Rows grouped by surface (sorted), each group by descending score.
  void save(std::ostream& out) const;

  /// Same surfaces mapping to the same (concept name, score) lists.
  bool operator==(const ConceptLexicon& other) const;

 private:
  std::size_t concept_id(const std::string& name);

  std::vector<std::string> concepts_;
  std::unordered_map<std::string, std::size_t> concept_index_;
  std::map<std::string, std::vector<ScoredConcept>> entries_;
  bool fixed_ = false;
  std::size_t max_ngram_ = 0;
};

struct ConceptMention {
  std::size_t concept_id = 0;
  double score = 0.0;     // summed over every match of this concept
  std::string surface;    // first surface form that produced it
};

/// At most `max_concepts` distinct concepts, highest merged score first.
using ConceptSet = std::vector<ConceptMention>;

inline constexpr std::size_t kDefaultMaxConcepts = 10;

/// Greedy left-to-right longest match of token n-grams against the source;
/// matches do not overlap. Duplicate concepts are merged by summing scores
/// and the top `max_concepts` by merged score are kept (ties: first seen).
ConceptSet conceptualize(std::span<const std::string> tokens, const ConceptSource& source,
                         std::size_t max_concepts = kDefaultMaxConcepts);

/// Rows of the concept embedding table for `concepts`, as an (m x d) value.
Var embed_concepts(Tape& tape, const ParamStore& store, const std::string& table,
                   const ConceptSet& concepts);

}  // namespace keat
