#pragma once

#include <string>

#include "sumn/corpus.hpp"
#include "sumn/model.hpp"

namespace sumn {

struct Checkpoint {
  ModelParams params;
  Vocabulary vocab;
};

// Binary layout: "SUMN1", u32 d, u32 N, u32 |V| (little-endian), every
// parameter tensor as little-endian f32 in ModelParams field order, the
// vocabulary block in its text format, then a CRC32 of all preceding bytes.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const Vocabulary& vocab);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sumn
