#include "espsim/serialization.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "espsim/errors.hpp"

namespace espsim {

namespace {

Json optimizer_json(const nn::Adam& adam) {
  return {{"step", adam.steps()},
          {"learning_rate", adam.config().learning_rate},
          {"beta1", adam.config().beta1},
          {"beta2", adam.config().beta2},
          {"m", adam.first_moment()},
          {"v", adam.second_moment()}};
}

void load_optimizer(const Json& j, std::size_t n, nn::Adam* optimizer) {
  if (!optimizer) return;
  if (!j.contains("optimizer")) {
    *optimizer = nn::Adam(n, optimizer->config());
    return;
  }
  const auto& o = j.at("optimizer");
  nn::AdamConfig cfg{o.at("learning_rate").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                     1e-8};
  nn::Adam adam(n, cfg);
  adam.first_moment() = o.at("m").get<std::vector<double>>();
  adam.second_moment() = o.at("v").get<std::vector<double>>();
  adam.set_steps(o.at("step").get<long>());
  if (adam.first_moment().size() != n || adam.second_moment().size() != n)
    throw ConfigError("checkpoint optimizer moments do not match the parameter count");
  *optimizer = std::move(adam);
}

Json envelope(const char* kind, Json architecture, std::span<const double> params, const nn::Adam* optimizer) {
  Json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["kind"] = kind;
  j["architecture"] = std::move(architecture);
  j["params"] = std::vector<double>(params.begin(), params.end());
  if (optimizer) j["optimizer"] = optimizer_json(*optimizer);
  return j;
}

void check_envelope(const Json& j, const char* kind) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw ConfigError("not an espsim checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
  if (j.at("kind").get<std::string>() != kind)
    throw ConfigError("expected a " + std::string(kind) + " checkpoint, got " + j.at("kind").get<std::string>());
}

void load_params(const Json& j, std::span<double> params) {
  const auto values = j.at("params").get<std::vector<double>>();
  if (values.size() != params.size()) throw ConfigError("checkpoint parameter count does not match its architecture");
  std::copy(values.begin(), values.end(), params.begin());
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

Json checkpoint_json(const ActorCritic& model, const nn::Adam* optimizer) {
  const auto& a = model.architecture();
  return envelope("actor_critic", {{"input_width", a.input_width}, {"num_actions", a.num_actions}, {"hidden", a.hidden}},
                  model.params(), optimizer);
}

Json checkpoint_json(const Detector& detector, const nn::Adam* optimizer) {
  Json arch{{"variant", to_string(detector.variant())},
            {"input_width", detector.input_width()},
            {"hidden", detector.hidden()},
            {"center", detector.center()},
            {"scale", detector.scale()}};
  return envelope("detector", std::move(arch), detector.params(), optimizer);
}

Json checkpoint_json(const GatingModel& gating, const nn::Adam* optimizer) {
  return envelope("gating", {{"input_width", gating.input_width()}, {"hidden", gating.hidden()}}, gating.params(),
                  optimizer);
}

ActorCritic actor_critic_from_json(const Json& j, nn::Adam* optimizer) {
  check_envelope(j, "actor_critic");
  const auto& a = j.at("architecture");
  ActorCritic model(PolicyArchitecture{a.at("input_width").get<int>(), a.at("num_actions").get<int>(),
                                       a.at("hidden").get<std::vector<int>>()});
  load_params(j, model.params());
  load_optimizer(j, model.params().size(), optimizer);
  return model;
}

Detector detector_from_json(const Json& j, nn::Adam* optimizer) {
  check_envelope(j, "detector");
  const auto& a = j.at("architecture");
  const auto variant = parse_detector_variant(a.at("variant").get<std::string>());
  Detector d = variant == DetectorVariant::trajectory
                   ? Detector::trajectory(a.at("input_width").get<std::size_t>(), a.at("hidden").get<std::vector<int>>())
                   : Detector::logistic(variant, 0.0, 1.0);
  d.set_standardization(a.at("center").get<double>(), a.at("scale").get<double>());
  load_params(j, d.params());
  load_optimizer(j, d.params().size(), optimizer);
  return d;
}

GatingModel gating_from_json(const Json& j, nn::Adam* optimizer) {
  check_envelope(j, "gating");
  const auto& a = j.at("architecture");
  GatingModel g(a.at("input_width").get<std::size_t>(), a.at("hidden").get<std::vector<int>>());
  load_params(j, g.params());
  load_optimizer(j, g.params().size(), optimizer);
  return g;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(1) + "\n"); }

Json read_json(const std::filesystem::path& path, const std::string& producing_stage) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact(path.string() + " not found; run the '" + producing_stage + "' stage first", producing_stage);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

OrderedJson episode_record_json(const EpisodeRecord& episode) {
  OrderedJson j;
  j["env"] = to_string(episode.env);
  j["label"] = static_cast<int>(episode.label);
  j["seed"] = episode.seed;
  j["actions"] = episode.actions;
  j["rewards"] = episode.rewards;
  j["length"] = episode.length;
  j["return"] = episode.total_return;
  j["encoded_detector_input"] = episode.length > 0 ? encode_detector(episode) : std::vector<double>{};
  return j;
}

DetectorSample detector_sample_from_json(const Json& j) {
  DetectorSample s;
  s.input = j.at("encoded_detector_input").get<std::vector<double>>();
  s.length = j.at("length").get<double>();
  s.reward = j.at("return").get<double>();
  s.label = j.at("label").get<int>();
  if (s.label != 0 && s.label != 1) throw ConfigError("dataset label must be 0 or 1");
  return s;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<OrderedJson>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text(path, text);
}

std::vector<DetectorSample> read_dataset(const std::filesystem::path& path, const std::string& producing_stage) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact(path.string() + " not found; run the '" + producing_stage + "' stage first", producing_stage);
  std::vector<DetectorSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(detector_sample_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw ContractViolation("CSV row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += csv_escape(cells[i]);
  }
  text_ += '\n';
  return *this;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(cell));
      cell.clear();
    } else if (ch == '\n') {
      row.push_back(std::move(cell));
      cell.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  if (!cell.empty() || !row.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  CsvWriter csv({"step", "reward", "length", "loss", "policy_loss", "value_loss", "entropy", "clip_fraction"});
  for (const auto& p : curve) {
    csv.row({std::to_string(p.step), format_number(p.reward), format_number(p.length), format_number(p.losses.total),
             format_number(p.losses.policy), format_number(p.losses.value), format_number(p.losses.entropy),
             format_number(p.losses.clip_fraction)});
  }
  return csv.str();
}

std::string detector_curve_csv(const std::vector<DetectorEpoch>& curve) {
  CsvWriter csv({"epoch", "train_loss", "valid_loss", "valid_ap", "valid_auroc"});
  for (const auto& e : curve) {
    csv.row({std::to_string(e.epoch), format_number(e.train_loss), format_number(e.valid.loss),
             format_number(e.valid.ap), format_number(e.valid.auroc)});
  }
  return csv.str();
}

std::string history_csv(const std::vector<IterationMetrics>& history) {
  CsvWriter csv({"iteration", "avg_reward", "avg_length", "avg_shaped_return", "mean_score", "mean_omega", "ap", "auroc",
                 "detector_loss", "ppo_loss", "policy_loss", "value_loss", "entropy", "clip_fraction"});
  for (const auto& m : history) {
    csv.row({std::to_string(m.iteration), format_number(m.avg_reward), format_number(m.avg_length),
             format_number(m.avg_shaped_return), format_number(m.mean_score), format_number(m.mean_omega),
             format_number(m.ap), format_number(m.auroc), format_number(m.detector_loss), format_number(m.ppo.total),
             format_number(m.ppo.policy), format_number(m.ppo.value), format_number(m.ppo.entropy),
             format_number(m.ppo.clip_fraction)});
  }
  return csv.str();
}

std::string detector_image_row(const DetectorImageGrid& image) {
  std::string out;
  for (double v : image.flatten()) {
    if (!out.empty()) out += ',';
    out += format_number(v);
  }
  return out;
}

}  // namespace espsim
