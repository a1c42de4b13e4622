#pragma once

#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

#include "espsim/adversarial.hpp"
#include "espsim/detector.hpp"
#include "espsim/policy.hpp"
#include "espsim/ppo.hpp"

namespace espsim {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline constexpr const char* kCheckpointFormat = "espsim-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Checkpoints are JSON documents:
//   {format, version, kind, architecture, params, optimizer: {step, m, v}}
// The optimizer block is optional on load.
Json checkpoint_json(const ActorCritic& model, const nn::Adam* optimizer = nullptr);
Json checkpoint_json(const Detector& detector, const nn::Adam* optimizer = nullptr);
Json checkpoint_json(const GatingModel& gating, const nn::Adam* optimizer = nullptr);

ActorCritic actor_critic_from_json(const Json& j, nn::Adam* optimizer = nullptr);
Detector detector_from_json(const Json& j, nn::Adam* optimizer = nullptr);
GatingModel gating_from_json(const Json& j, nn::Adam* optimizer = nullptr);

// Whole-file helpers; load throws MissingArtifact when the file is absent.
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path, const std::string& producing_stage);
void write_text(const std::filesystem::path& path, const std::string& text);

// One dataset record per line, fields in the order
//   env, label, seed, actions, rewards, length, return, encoded_detector_input
OrderedJson episode_record_json(const EpisodeRecord& episode);
DetectorSample detector_sample_from_json(const Json& j);
void write_jsonl(const std::filesystem::path& path, const std::vector<OrderedJson>& rows);
std::vector<DetectorSample> read_dataset(const std::filesystem::path& path, const std::string& producing_stage);

// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& row(const std::vector<std::string>& cells);
  std::string str() const { return text_; }
  std::size_t columns() const { return columns_; }

 private:
  std::size_t columns_;
  std::string text_;
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text);

std::string curve_csv(const std::vector<CurvePoint>& curve);
std::string detector_curve_csv(const std::vector<DetectorEpoch>& curve);
std::string history_csv(const std::vector<IterationMetrics>& history);

// Detector image of a Gridworld episode as one flat CSV row.
std::string detector_image_row(const DetectorImageGrid& image);

}  // namespace espsim
