#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "phaseforge/common.hpp"

namespace phaseforge::nn {

// The six networks. "Updated" feeds elapsed time and the encoder-level
// progress estimate into the LSTM as two extra input features.
enum class Variant {
  PhaseEncoder,     // encoder + fc_phase_pre
  EndoN2NVanilla,   // encoder -> LSTM -> fc_phase
  EndoN2NUpdated,   // encoder (+ fc_prog_pre input feature) -> LSTM -> fc_phase
  ProgressEncoder,  // encoder + fc_prog_pre
  RsdProgress,      // encoder (+ fc_prog_pre input feature) -> LSTM -> fc_rsd, fc_prog
  TempCon,          // shared encoder x2 -> concat -> fc_pair
};

const char* variant_tag(Variant v);
Variant variant_from_tag(const std::string& tag);

struct ArchSpec {
  std::vector<int> encoder_widths;  // D, hidden..., F
  int lstm_hidden = 128;
  int num_phases = 7;
  double s_norm = 5.0;  // scales RSD targets and the elapsed-time input feature
  Variant variant = Variant::EndoN2NVanilla;

  int input_dim() const { return encoder_widths.front(); }
  int feature_dim() const { return encoder_widths.back(); }
  int encoder_layers() const { return static_cast<int>(encoder_widths.size()) - 1; }
  bool has_lstm() const;
  bool updated_inputs() const {
    return variant == Variant::EndoN2NUpdated || variant == Variant::RsdProgress;
  }
  // LSTM input width: F, plus elapsed time and predicted progress when updated.
  int lstm_input_dim() const { return feature_dim() + (updated_inputs() ? 2 : 0); }

  void validate() const;
  // Tensor names for this architecture, in canonical (sorted) order.
  std::vector<std::string> tensor_names() const;
};

struct ParamStore {
  ArchSpec spec;
  uint64_t seed = 0;
  std::string stage;     // pipeline stage that produced it
  int64_t iteration = 0; // optimizer steps taken
  TensorMap tensors;
  // Names initialized randomly rather than transferred; these get the higher
  // learning-rate multiplier during fine-tuning.
  std::set<std::string> fresh;

  std::string arch_tag() const { return variant_tag(spec.variant); }
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  size_t scalar_count() const;
};

// Fan-in scaled uniform init: U(-sqrt(3/fan_in), +sqrt(3/fan_in)), i.e. a
// target std of 1/sqrt(fan_in). Biases zero except the LSTM forget-gate block,
// which starts at 1. Streams are derived per tensor name, so two stores agree
// on every tensor they share regardless of creation order.
ParamStore init_params(const ArchSpec& spec, uint64_t seed);

TensorMap zeros_like(const ParamStore& params);
void check_same_shapes(const ParamStore& params, const TensorMap& other, const std::string& what);

}  // namespace phaseforge::nn
