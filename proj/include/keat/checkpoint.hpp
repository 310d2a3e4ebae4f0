#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "keat/adam.hpp"
#include "keat/corpus.hpp"
#include "keat/hyperparams.hpp"
#include "keat/tape.hpp"

namespace keat {

inline constexpr char kCheckpointMagic[4] = {'K', 'E', 'A', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to evaluate, predict, or resume: settings, vocabularies,
/// parameters, optimizer moments and the RNG state. Tensor values are kept
/// at 32-bit precision so a checkpoint in memory equals its file image.
struct Checkpoint {
  HyperParams hp;
  Vocab vocab;
  std::vector<std::string> classes;
  std::vector<std::string> concepts;
  ParamStore params;
  AdamState adam;
  std::string rng_state;

  /// Copies a training state, rounding every tensor to float.
  static Checkpoint capture(const HyperParams& hp, const Vocab& vocab,
                            std::vector<std::string> classes, std::vector<std::string> concepts,
                            const ParamStore& params, const AdamState& adam,
                            const std::string& rng_state);
};

/// Layout (all integers little-endian):
///   "KEAT" u32:version
///   u32:n {str:key str:value}           settings and RNG state
///   u32:n {str:token u64:count}         vocabulary
///   u32:n {str}                         class names
///   u32:n {str}                         concept names
///   u32:n {str:name u32:rank u32:extent*rank}   tensor manifest
///   per tensor: u64:byte_length f32*count
/// where str is u32:length followed by bytes.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws FormatError on bad magic, unsupported version, truncation or any
/// inconsistency; nothing is returned unless the whole file parsed.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace keat
