#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "keat/concept_kb.hpp"
#include "keat/corpus.hpp"
#include "keat/errors.hpp"
#include "keat/ops.hpp"

using namespace keat;

namespace {

ConceptLexicon parse(const std::string& text, const std::vector<std::string>* fixed = nullptr) {
  std::istringstream in(text);
  return ConceptLexicon::parse(in, "kb", fixed);
}

const char* kLexicon =
    "apple\tcompany\t0.6\n"
    "apple\tfruit\t0.4\n"
    "Steve  Jobs\tperson\t0.9\n"
    "jobs\teconomy\t0.2\n"
    "iphone\tdevice\t0.8\n"
    "iphone\tcompany\t0.1\n";

}  // namespace

TEST_CASE("lexicon parsing") {
  const ConceptLexicon kb = parse(kLexicon);
  CHECK(kb.concept_count() == 5);
  CHECK(kb.max_ngram() == 2);
  const auto apple = kb.lookup("apple");
  REQUIRE(apple.size() == 2);
  CHECK(kb.concept_name(apple[0].id) == "company");
  CHECK(apple[0].score == 0.6);
  CHECK(kb.lookup("STEVE jobs").size() == 1);
  CHECK(kb.lookup("banana").empty());

  CHECK_THROWS_AS(parse("apple\tfruit\n"), FormatError);
  CHECK_THROWS_AS(parse("apple\tfruit\thigh\n"), FormatError);
  CHECK_THROWS_AS(parse("apple\tfruit\t-1\n"), FormatError);
  CHECK_THROWS_AS(parse("!!\tfruit\t1\n"), FormatError);
  try {
    parse("apple\tfruit\t1\nx\ty\tz\n");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("kb:2") != std::string::npos);
  }
}

TEST_CASE("duplicate rows add their scores") {
  const ConceptLexicon kb = parse("apple\tfruit\t0.25\napple\tcompany\t0.5\napple\tfruit\t0.5\n");
  const auto apple = kb.lookup("apple");
  REQUIRE(apple.size() == 2);
  CHECK(kb.concept_name(apple[0].id) == "fruit");
  CHECK(apple[0].score == 0.75);
}

TEST_CASE("fixed concept ids") {
  const std::vector<std::string> fixed = {"device", "company"};
  const ConceptLexicon kb = parse(kLexicon, &fixed);
  CHECK(kb.concept_count() == 2);
  CHECK(kb.concepts() == fixed);
  CHECK(kb.lookup("apple").size() == 1);
  CHECK(kb.lookup("jobs").empty());
}

TEST_CASE("save and parse round trip") {
  const ConceptLexicon kb = parse(kLexicon);
  std::stringstream buf;
  kb.save(buf);
  CHECK(ConceptLexicon::parse(buf, "saved") == kb);
}

TEST_CASE("conceptualize") {
  const ConceptLexicon kb = parse(kLexicon);
  SUBCASE("longest match wins and matches do not overlap") {
    const auto cs = conceptualize(tokenize("steve jobs unveils iphone"), kb);
    REQUIRE(cs.size() == 3);
    CHECK(kb.concept_name(cs[0].concept_id) == "person");
    CHECK(cs[0].surface == "steve jobs");
    CHECK(kb.concept_name(cs[1].concept_id) == "device");
    CHECK(kb.concept_name(cs[2].concept_id) == "company");
    for (const auto& m : cs) CHECK(kb.concept_name(m.concept_id) != "economy");
  }
  SUBCASE("repeated concepts merge by summing scores") {
    const auto cs = conceptualize(tokenize("apple iphone apple"), kb);
    REQUIRE(cs.size() == 3);
    CHECK(kb.concept_name(cs[0].concept_id) == "company");
    CHECK(cs[0].score == doctest::Approx(1.3));
    CHECK(cs[0].surface == "apple");
  }
  SUBCASE("truncated to the top M") {
    const auto cs = conceptualize(tokenize("apple iphone apple"), kb, 1);
    REQUIRE(cs.size() == 1);
    CHECK(kb.concept_name(cs[0].concept_id) == "company");
  }
  SUBCASE("no matches") { CHECK(conceptualize(tokenize("nothing here"), kb).empty()); }
}

TEST_CASE("embed concepts") {
  ParamStore store;
  store.add("concept.embed", Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  Tape tape;
  ConceptSet cs = {{2, 1.0, "a"}, {0, 0.5, "b"}};
  CHECK(embed_concepts(tape, store, "concept.embed", cs).value() == Tensor::matrix({{5, 6}, {1, 2}}));
  const Var empty = embed_concepts(tape, store, "concept.embed", {});
  CHECK(empty.shape() == Shape{0, 2});
}
