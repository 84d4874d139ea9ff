#pragma once

#include "simtforge/ir.hpp"
#include "simtforge/transform.hpp"
#include "simtforge/uniformity.hpp"

namespace simtforge {

struct ReconstructStats {
  PassStats pass;
  int duplicated_blocks = 0;  // clones beyond the original, merge blocks excluded
};

// Duplicates divergent CDG-leaf blocks that sit under two or more control
// dependences, one copy per CFG predecessor, rejoining through a merge block.
// Blocks whose controlling branches are all uniform are skipped, as are loop
// headers, preheaders, dedicated loop exits, and the function exit.
ReconstructStats reconstruct_cfg(Function& f, const UniformityMap& u);

}  // namespace simtforge
