#include <fstream>
#include <sstream>

#include "iclft/error.hpp"
#include "iclft/harness.hpp"

namespace iclft {

using nlohmann::json;

json to_json(const RunRecord& r) {
  json scores = json::array();
  for (const auto& s : r.scores) scores.push_back(s ? json(*s) : json(nullptr));
  json j = {{"type", "run"},
            {"name", r.name},
            {"eval_task", r.eval_task},
            {"ft_task", r.ft_task ? json(*r.ft_task) : json(nullptr)},
            {"strategy", std::string(to_string(r.strategy))},
            {"seed", r.seed},
            {"config_hash", r.config_hash},
            {"schedule_hash", r.schedule_hash},
            {"schedule_path", r.schedule_path},
            {"checkpoint", r.checkpoint},
            {"scores", scores},
            {"error", r.error}};
  if (r.timestamp) j["timestamp"] = *r.timestamp;
  return j;
}

RunRecord run_record_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("type", "") != "run") throw ParseError("not a run record");
    RunRecord r;
    r.name = j.value("name", "");
    r.eval_task = j.at("eval_task").get<std::string>();
    if (!j.at("ft_task").is_null()) r.ft_task = j.at("ft_task").get<std::string>();
    r.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.value("config_hash", "");
    r.schedule_hash = j.value("schedule_hash", "");
    r.schedule_path = j.value("schedule_path", "");
    r.checkpoint = j.value("checkpoint", "");
    r.error = j.value("error", "");
    const auto& scores = j.at("scores");
    if (!scores.is_array() || scores.size() != kNumShotColumns) throw ParseError("scores must have six entries");
    for (std::size_t i = 0; i < kNumShotColumns; ++i) {
      if (scores[i].is_null()) continue;
      const double v = scores[i].get<double>();
      if (!(v >= 0.0 && v <= 1.0)) throw ParseError("score outside [0, 1]");
      r.scores[i] = v;
    }
    if (j.contains("timestamp")) r.timestamp = j.at("timestamp").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
}

void persist_run(const std::filesystem::path& path, const RunRecord& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open run log " + path.string());
  out << to_json(record).dump() << '\n';
  if (!out) throw IoError("failed writing run log " + path.string());
}

void write_runs(std::ostream& out, const std::vector<RunRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<RunRecord> read_runs(std::istream& in, std::vector<std::string>* warnings) {
  std::vector<RunRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(run_record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back("line " + std::to_string(lineno) + " skipped: " + e.what());
    }
  }
  return records;
}

std::vector<RunRecord> load_run(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run log " + path.string());
  return read_runs(in, warnings);
}

}  // namespace iclft
