#pragma once

#include <cstdint>
#include <string>

#include "semsmooth/model.hpp"
#include "semsmooth/vocab.hpp"

namespace semsmooth {

/// Self-contained model snapshot: config echo, vocabulary, seed, epoch, and
/// every named tensor as raw little-endian doubles, so reloading restores
/// bit-identical eval-mode outputs.
struct Checkpoint {
  ModelParameters params;
  Vocabulary vocab;
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const std::string& path, const ModelParameters& params,
                     const Vocabulary& vocab, std::uint64_t seed, int epoch);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace semsmooth
