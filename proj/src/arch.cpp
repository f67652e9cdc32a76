#include "phaseforge/arch.hpp"

#include <algorithm>
#include <cmath>

#include "phaseforge/rng.hpp"

namespace phaseforge::nn {

const char* variant_tag(Variant v) {
  switch (v) {
    case Variant::PhaseEncoder: return "phase-encoder";
    case Variant::EndoN2NVanilla: return "endon2n-vanilla";
    case Variant::EndoN2NUpdated: return "endon2n-updated";
    case Variant::ProgressEncoder: return "progress-encoder";
    case Variant::RsdProgress: return "rsd-progress";
    case Variant::TempCon: return "tempcon";
  }
  return "unknown";
}

Variant variant_from_tag(const std::string& tag) {
  for (Variant v : {Variant::PhaseEncoder, Variant::EndoN2NVanilla, Variant::EndoN2NUpdated,
                    Variant::ProgressEncoder, Variant::RsdProgress, Variant::TempCon}) {
    if (tag == variant_tag(v)) return v;
  }
  throw PhaseforgeError("unknown arch tag: " + tag);
}

bool ArchSpec::has_lstm() const {
  return variant == Variant::EndoN2NVanilla || variant == Variant::EndoN2NUpdated ||
         variant == Variant::RsdProgress;
}

void ArchSpec::validate() const {
  require(encoder_widths.size() >= 2, "ArchSpec: encoder needs input and output widths");
  for (int w : encoder_widths) require(w >= 1, "ArchSpec: widths >= 1");
  require(lstm_hidden >= 1, "ArchSpec: lstm_hidden >= 1");
  require(num_phases >= 2, "ArchSpec: num_phases >= 2");
  require(s_norm > 0.0, "ArchSpec: s_norm > 0");
}

std::vector<std::string> ArchSpec::tensor_names() const {
  std::vector<std::string> names;
  for (int l = 0; l < encoder_layers(); ++l) {
    names.push_back("enc" + std::to_string(l) + ".W");
    names.push_back("enc" + std::to_string(l) + ".b");
  }
  auto head = [&](const std::string& n) {
    names.push_back(n + ".W");
    names.push_back(n + ".b");
  };
  switch (variant) {
    case Variant::PhaseEncoder: head("fc_phase_pre"); break;
    case Variant::ProgressEncoder: head("fc_prog_pre"); break;
    case Variant::TempCon: head("fc_pair"); break;
    case Variant::EndoN2NVanilla:
      names.insert(names.end(), {"lstm.Wx", "lstm.Wh", "lstm.b"});
      head("fc_phase");
      break;
    case Variant::EndoN2NUpdated:
      head("fc_prog_pre");
      names.insert(names.end(), {"lstm.Wx", "lstm.Wh", "lstm.b"});
      head("fc_phase");
      break;
    case Variant::RsdProgress:
      head("fc_prog_pre");
      names.insert(names.end(), {"lstm.Wx", "lstm.Wh", "lstm.b"});
      head("fc_rsd");
      head("fc_prog");
      break;
  }
  std::sort(names.begin(), names.end());
  return names;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = tensors.find(name);
  require(it != tensors.end(), "ParamStore: missing tensor " + name);
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = tensors.find(name);
  require(it != tensors.end(), "ParamStore: missing tensor " + name);
  return it->second;
}

size_t ParamStore::scalar_count() const {
  size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.size();
  return n;
}

namespace {

struct Shape {
  int rows, cols;
  int fan_in;
  bool is_bias;
};

Shape tensor_shape(const ArchSpec& spec, const std::string& name) {
  const int F = spec.feature_dim();
  const int H = spec.lstm_hidden;
  const int M = spec.num_phases;
  auto strip = [&](const std::string& base) { return name.substr(0, base.size()) == base; };
  if (strip("enc")) {
    size_t dot = name.find('.');
    int l = std::stoi(name.substr(3, dot - 3));
    int in = spec.encoder_widths[l], out = spec.encoder_widths[l + 1];
    if (name.back() == 'W') return {out, in, in, false};
    return {out, 1, in, true};
  }
  if (strip("lstm.Wx")) return {4 * H, spec.lstm_input_dim(), spec.lstm_input_dim(), false};
  if (strip("lstm.Wh")) return {4 * H, H, H, false};
  if (strip("lstm.b")) return {4 * H, 1, H, true};
  if (strip("fc_phase_pre")) return name.back() == 'W' ? Shape{M, F, F, false} : Shape{M, 1, F, true};
  if (strip("fc_prog_pre")) return name.back() == 'W' ? Shape{1, F, F, false} : Shape{1, 1, F, true};
  if (strip("fc_phase")) return name.back() == 'W' ? Shape{M, H, H, false} : Shape{M, 1, H, true};
  if (strip("fc_rsd")) return name.back() == 'W' ? Shape{1, H, H, false} : Shape{1, 1, H, true};
  if (strip("fc_prog")) return name.back() == 'W' ? Shape{1, H, H, false} : Shape{1, 1, H, true};
  if (strip("fc_pair")) return name.back() == 'W' ? Shape{2, 2 * F, 2 * F, false} : Shape{2, 1, 2 * F, true};
  throw PhaseforgeError("tensor_shape: unknown tensor " + name);
}

}  // namespace

ParamStore init_params(const ArchSpec& spec, uint64_t seed) {
  spec.validate();
  ParamStore store;
  store.spec = spec;
  store.seed = seed;
  store.stage = "init";
  for (const std::string& name : spec.tensor_names()) {
    Shape sh = tensor_shape(spec, name);
    Matrix t(sh.rows, sh.cols);
    if (sh.is_bias) {
      if (name == "lstm.b") {
        // forget-gate block [H, 2H) starts open
        const int H = spec.lstm_hidden;
        for (int r = H; r < 2 * H; ++r) t.data[r] = 1.0;
      }
    } else {
      Rng rng(derive_seed(seed, name));
      double bound = std::sqrt(3.0 / sh.fan_in);
      for (double& v : t.data) v = rng.uniform(-bound, bound);
    }
    store.tensors.emplace(name, std::move(t));
    store.fresh.insert(name);
  }
  return store;
}

TensorMap zeros_like(const ParamStore& params) {
  TensorMap out;
  for (const auto& [name, t] : params.tensors) out.emplace(name, Matrix(t.rows, t.cols));
  return out;
}

void check_same_shapes(const ParamStore& params, const TensorMap& other, const std::string& what) {
  require(params.tensors.size() == other.size(), what + ": tensor-count mismatch");
  for (const auto& [name, t] : params.tensors) {
    auto it = other.find(name);
    require(it != other.end(), what + ": missing " + name);
    require(t.same_shape(it->second), what + ": shape mismatch for " + name);
  }
}

}  // namespace phaseforge::nn
