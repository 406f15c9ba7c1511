#pragma once

#include "lkreg/network.hpp"

namespace lkreg {

// Checkpoint directory layout:
//   net.cfg       - network config as key=value text
//   manifest.txt  - one "param-name file-name" pair per line
//   *.tns         - one tensor file per named parameter
// The tensor files are bit-exact, so save -> load -> forward reproduces
// outputs bitwise.

void save_checkpoint(const std::string& dir, const Network<float>& net);
Network<float> load_checkpoint(const std::string& dir);

}  // namespace lkreg
