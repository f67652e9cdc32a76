#include "phaseforge/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace phaseforge::nn {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
  json header;
  header["arch_tag"] = params.arch_tag();
  header["spec"] = {{"encoder_widths", params.spec.encoder_widths},
                    {"lstm_hidden", params.spec.lstm_hidden},
                    {"num_phases", params.spec.num_phases},
                    {"s_norm", params.spec.s_norm}};
  header["seed"] = params.seed;
  header["stage"] = params.stage;
  header["iteration"] = params.iteration;
  header["fresh"] = std::vector<std::string>(params.fresh.begin(), params.fresh.end());
  json tensors = json::array();
  for (const auto& [name, t] : params.tensors)
    tensors.push_back({{"name", name}, {"shape", {t.rows, t.cols}}});
  header["tensors"] = tensors;

  std::string head = header.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  uint64_t len = head.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : params.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  require(out.good(), "save_checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
          "load_checkpoint: bad magic in " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  json header = json::parse(head);

  ParamStore params;
  params.spec.encoder_widths = header["spec"]["encoder_widths"].get<std::vector<int>>();
  params.spec.lstm_hidden = header["spec"]["lstm_hidden"].get<int>();
  params.spec.num_phases = header["spec"]["num_phases"].get<int>();
  params.spec.s_norm = header["spec"]["s_norm"].get<double>();
  params.spec.variant = variant_from_tag(header["arch_tag"].get<std::string>());
  params.seed = header["seed"].get<uint64_t>();
  params.stage = header["stage"].get<std::string>();
  params.iteration = header["iteration"].get<int64_t>();
  for (const auto& n : header["fresh"]) params.fresh.insert(n.get<std::string>());
  for (const auto& t : header["tensors"]) {
    std::string name = t["name"].get<std::string>();
    int rows = t["shape"][0].get<int>();
    int cols = t["shape"][1].get<int>();
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    params.tensors.emplace(std::move(name), std::move(m));
  }
  require(in.good(), "load_checkpoint: truncated file " + path);
  return params;
}

}  // namespace phaseforge::nn
