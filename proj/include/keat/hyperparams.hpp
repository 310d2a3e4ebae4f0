#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "keat/local_attention.hpp"

namespace keat {

enum class LocalAttnUse { None, Original, Improved };

/// Model, optimizer and run settings. Keys accepted by set() are the names
/// used in config files and checkpoint metadata.
struct HyperParams {
  // dimensions
  std::size_t word_dim = 300;
  std::size_t char_dim = 50;
  std::size_t concept_dim = 100;
  std::size_t hidden = 100;   // u, per GRU direction
  std::size_t heads = 4;
  std::size_t kernel = 3;     // char-CNN window
  std::size_t attn_dim = 64;  // d_a, d_b and local-attention scoring width
  std::size_t max_word_chars = 16;
  std::size_t max_concepts = 10;
  // fusion
  double gamma = 0.5;
  bool use_raw_alpha = false;
  // optimization
  double lambda = 1e-4;
  double dropout = 0.3;
  std::size_t batch = 50;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  double init_std = 0.1;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  // vocabulary
  std::size_t ig_top_k = 0;  // 0 keeps every token
  std::size_t min_count = 1;
  // local attention replaces the multi-head pooling path when enabled
  LocalAttnUse local_attn = LocalAttnUse::None;
  WindowSource local_window = WindowSource::Learned;
  double omega = 1.0;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  /// Sets one field from its textual form; throws ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Every field as key/value text, sorted by key.
  std::map<std::string, std::string> to_map() const;
  static HyperParams from_map(const std::map<std::string, std::string>& values);

  LocalAttnMode local_mode() const;

  bool operator==(const HyperParams&) const = default;
};

/// `key = value` lines; `#` starts a comment; blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in,
                                                              const std::string& source);
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace keat
