#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace keat {

/// Lowercased maximal runs of ASCII letters and digits; every other byte
/// (including all non-ASCII UTF-8 bytes) separates tokens.
std::vector<std::string> tokenize(std::string_view text);

// Character alphabet: 0 = UNK, 1..26 = a..z, 27..36 = 0..9.
inline constexpr std::size_t kCharUnk = 0;
inline constexpr std::size_t kCharAlphabetSize = 37;
inline constexpr std::size_t kDefaultMaxWordChars = 16;

/// Character indices of a word, right-truncated to `cap` characters.
std::vector<std::size_t> char_ids(std::string_view word, std::size_t cap = kDefaultMaxWordChars);

struct Document {
  std::size_t label = 0;
  std::vector<std::string> tokens;
  std::vector<std::size_t> word_ids;
  std::vector<std::vector<std::size_t>> char_ids;
};

/// Token vocabulary with reserved UNK (0) and PAD (1) entries.
class Vocab {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kPad = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kPadToken = "<pad>";

  Vocab();

  /// Counts tokens over `docs`. Tokens below `min_count` are dropped; when
  /// `allowed` is non-empty only those tokens are kept. Indices are assigned
  /// by descending frequency, then token order.
  static Vocab build(std::span<const Document> docs, std::size_t min_count = 1,
                     std::span<const std::string> allowed = {});

  /// Appends a token (or bumps its count) and returns its index.
  std::size_t add(const std::string& token, std::uint64_t count = 1);

  std::size_t index(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::uint64_t count(std::size_t index) const { return counts_.at(index); }
  std::size_t size() const { return tokens_.size(); }

  // One `token<TAB>count` line per index.
  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static Vocab load(std::istream& in);
  static Vocab load(const std::string& path);

  bool operator==(const Vocab& other) const {
    return tokens_ == other.tokens_ && counts_ == other.counts_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Fills word_ids and char_ids of every document from its tokens.
void index_documents(std::span<Document> docs, const Vocab& vocab,
                     std::size_t max_word_chars = kDefaultMaxWordChars);

struct Dataset {
  std::vector<Document> docs;
  std::vector<std::string> classes;
};

/// Reads `label<TAB>text` records. The first tab splits; later tabs belong
/// to the text. Labels are interned in order of first appearance unless
/// `fixed_classes` is given, in which case an unknown label is an error.
/// Blank lines are skipped; a record with no tokens is an error.
Dataset load_dataset(const std::string& path,
                     const std::vector<std::string>* fixed_classes = nullptr);
Dataset parse_dataset(std::istream& in, const std::string& source,
                      const std::vector<std::string>* fixed_classes = nullptr);

/// Shannon entropy in bits with 0 log 0 = 0.
double entropy(std::span<const double> p);

/// IG(token) = H(C) - P(x) H(C|x) - P(!x) H(C|!x), from document presence.
double information_gain(std::span<const Document> docs, std::string_view token);

struct IgEntry {
  std::string token;
  std::size_t doc_freq = 0;
  double ig_bits = 0.0;
  std::size_t rank = 0;  // 1-based
};

/// Every distinct token ranked by IG desc, then doc_freq desc, then token.
struct IgReport {
  std::vector<IgEntry> entries;
};

IgReport information_gain_report(std::span<const Document> docs);
std::vector<std::string> select_top_k(const IgReport& report, std::size_t k);

/// `token<TAB>doc_freq<TAB>ig_bits<TAB>rank` with a header line.
void write_ig_report(std::ostream& out, const IgReport& report,
                     std::size_t limit = static_cast<std::size_t>(-1));

/// Shortest round-trip decimal text, independent of the C locale.
std::string format_double(double value);
/// Strict decimal parse of the full string; throws std::invalid_argument.
double parse_double(std::string_view text);

}  // namespace keat
