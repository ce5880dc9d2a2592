#pragma once

// JSON artifacts: per-run metrics, center trajectories and run summaries.

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "madlab/eval.hpp"
#include "madlab/trainer.hpp"

namespace madlab {

inline constexpr const char* kVersion = "0.1.0";

inline nlohmann::json stats_json(const ReplicateStats& s) {
  return {{"mean", s.mean}, {"std", s.std_dev}, {"half_width", s.half_width}, {"n", s.values.size()},
          {"single_replicate", s.single}};
}

// One record per (replicate, split). Deterministic in (config, seed).
inline nlohmann::json metrics_json(const ExperimentResult& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rep : r.replicates) {
    for (const char* split : {"val", "test"}) {
      const bool val = std::string(split) == "val";
      records.push_back({{"replicate", rep.replicate},
                         {"seed", rep.seed},
                         {"split", split},
                         {"auc", val ? rep.val_auc : rep.test_auc},
                         {"auc_knn", val ? rep.val_auc_knn : rep.test_auc_knn},
                         {"epoch_auc", rep.epoch_auc},
                         {"live_centers", rep.live_centers}});
      if (!val) records.back()["auc_untrained"] = rep.untrained_test_auc;
    }
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& [idx, msg] : r.failures) failures.push_back({{"replicate", idx}, {"error", msg}});
  return {{"config_hash", r.config_hash},
          {"replicates", r.replicates.size()},
          {"records", records},
          {"aggregate", {{"val", stats_json(r.val)}, {"test", stats_json(r.test)}}},
          {"failures", failures}};
}

// AUC values of one split, in replicate order.
inline std::vector<double> split_aucs(const nlohmann::json& metrics, const std::string& split) {
  std::vector<double> out;
  if (!metrics.contains("records") || !metrics["records"].is_array()) {
    throw SchemaError("metrics file has no 'records' array");
  }
  for (const auto& rec : metrics["records"]) {
    if (rec.value("split", "") == split) out.push_back(rec.at("auc").get<double>());
  }
  return out;
}

// `{"epoch":e,"live":L,"counts":[...]}` per fine-tuning epoch.
inline std::string center_trajectory_jsonl(const FinetuneState& s) {
  std::string out;
  for (std::size_t e = 0; e < s.live_centers.size(); ++e) {
    nlohmann::json line = {{"epoch", e + 1}, {"live", s.live_centers[e]}, {"counts", s.counts[e]}};
    out += line.dump() + "\n";
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SchemaError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

}  // namespace madlab
