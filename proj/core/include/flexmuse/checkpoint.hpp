#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "flexmuse/fusion.hpp"
#include "flexmuse/lm.hpp"
#include "flexmuse/rng.hpp"

namespace flexmuse {

// Versioned little-endian binary: "FMUS" magic, shape header, the resolved
// config text, the vocabulary, parameter blocks as contiguous f64 in
// declaration order, then the rng state. save(load(x)) is byte-identical.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_echo;
  Vocab vocab;
  FusionParams fusion;
  LMParams lm;
  std::array<std::uint64_t, 4> rng_state{};
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace flexmuse
