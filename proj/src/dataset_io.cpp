#include "phaseforge/dataset_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace phaseforge::io {

using nlohmann::json;
namespace fs = std::filesystem;

void save_dataset(const std::vector<synth::SurgeryRecord>& records, int num_phases,
                  const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["num_phases"] = num_phases;
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.video_id);
  manifest["video_ids"] = ids;
  require(!records.empty(), "save_dataset: empty dataset");
  manifest["fps"] = records.front().fps;
  manifest["feature_dim"] = records.front().frames.cols;
  std::ofstream mf(dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";

  for (const auto& rec : records) {
    std::ofstream out(dir + "/" + rec.video_id + ".jsonl");
    require(out.good(), "save_dataset: cannot write " + rec.video_id);
    auto phases = rec.phases();
    const int D = rec.frames.cols;
    for (int t = 0; t < rec.num_frames(); ++t) {
      json line;
      line["t"] = t;
      line["phase"] = phases[t];
      line["features"] = std::vector<double>(rec.frames.row(t), rec.frames.row(t) + D);
      out << line.dump() << "\n";
    }
  }
}

std::vector<synth::SurgeryRecord> load_dataset(const std::string& dir, int* num_phases) {
  std::ifstream mf(dir + "/manifest.json");
  require(mf.good(), "load_dataset: missing manifest in " + dir);
  json manifest = json::parse(mf);
  if (num_phases) *num_phases = manifest["num_phases"].get<int>();
  double fps = manifest["fps"].get<double>();
  int D = manifest["feature_dim"].get<int>();

  std::vector<synth::SurgeryRecord> records;
  for (const auto& idj : manifest["video_ids"]) {
    std::string id = idj.get<std::string>();
    std::ifstream in(dir + "/" + id + ".jsonl");
    require(in.good(), "load_dataset: missing record " + id);
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) lines.push_back(json::parse(line));
    }
    synth::SurgeryRecord rec;
    rec.video_id = id;
    rec.fps = fps;
    rec.frames = Matrix(static_cast<int>(lines.size()), D);
    std::vector<int> labels(lines.size());
    for (size_t t = 0; t < lines.size(); ++t) {
      require(lines[t]["t"].get<int>() == static_cast<int>(t), "load_dataset: frame order in " + id);
      labels[t] = lines[t]["phase"].get<int>();
      auto feats = lines[t]["features"].get<std::vector<double>>();
      require(static_cast<int>(feats.size()) == D, "load_dataset: feature dim in " + id);
      std::copy(feats.begin(), feats.end(), rec.frames.row(static_cast<int>(t)));
    }
    rec.set_phases(std::move(labels));
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace phaseforge::io
