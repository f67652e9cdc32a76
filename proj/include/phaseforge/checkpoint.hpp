#pragma once

#include <string>

#include "phaseforge/arch.hpp"

namespace phaseforge::nn {

// Binary checkpoint container; layout documented in docs/checkpoint_format.md.
// save/load round-trips are bit-identical.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace phaseforge::nn
