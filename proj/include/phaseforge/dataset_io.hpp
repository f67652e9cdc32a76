#pragma once

#include <string>
#include <vector>

#include "phaseforge/synth.hpp"

namespace phaseforge::io {

// On-disk dataset layout: <dir>/manifest.json plus one <video_id>.jsonl per
// record, each line {"t": int, "phase": int, "features": [D doubles]}.
// Doubles are serialized with shortest round-trip precision, so a write/read
// cycle reproduces every value bit-for-bit.
void save_dataset(const std::vector<synth::SurgeryRecord>& records, int num_phases,
                  const std::string& dir);
std::vector<synth::SurgeryRecord> load_dataset(const std::string& dir, int* num_phases = nullptr);

}  // namespace phaseforge::io
