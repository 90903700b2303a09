#include "lossdyn/trajectory_log.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "lossdyn/error.hpp"

namespace lossdyn {

namespace {

using nlohmann::json;

json meta_to_json(const RunMeta& m, const std::vector<std::string>& uids, int num_classes) {
  json j;
  j["record"] = "meta";
  j["run_id"] = m.run_id;
  j["method"] = std::string(to_string(m.method));
  j["rank"] = m.rank;
  j["alpha"] = m.alpha;
  j["seed"] = m.seed;
  j["dataset"] = m.dataset;
  j["schedule"] = m.schedule.steps();
  j["epoch_steps"] = m.epoch_steps;
  j["uids"] = uids;
  if (num_classes > 0) j["num_classes"] = num_classes;
  if (!m.tags.empty()) j["tags"] = m.tags;
  return j;
}

RunMeta meta_from_json(const json& j) {
  try {
    RunMeta m;
    m.run_id = j.at("run_id").get<std::string>();
    m.method = parse_method(j.at("method").get<std::string>());
    m.rank = j.at("rank").get<int>();
    m.alpha = j.at("alpha").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.dataset = j.at("dataset").get<std::string>();
    m.schedule = CheckpointSchedule(j.at("schedule").get<std::vector<std::int64_t>>());
    if (j.contains("epoch_steps")) m.epoch_steps = j["epoch_steps"].get<std::vector<std::int64_t>>();
    if (j.contains("tags")) m.tags = j["tags"].get<std::map<std::string, std::string>>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::header, std::string("malformed meta record: ") + e.what());
  }
}

}  // namespace

std::vector<std::string> RunLog::uids() const {
  std::vector<std::string> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) out.push_back(t.uid);
  return out;
}

bool operator==(const RunLog& a, const RunLog& b) {
  return a.meta == b.meta && a.trajectories == b.trajectories && a.gradient_norms == b.gradient_norms &&
         a.group_cosines == b.group_cosines;
}

void write_run_log(std::ostream& out, const RunLog& log) {
  const auto& steps = log.meta.schedule.steps();
  const auto T = static_cast<Eigen::Index>(steps.size());
  int num_classes = 0;
  for (const auto& t : log.trajectories) {
    if (t.losses.size() != T) {
      throw Error(Errc::alignment, "trajectory '" + t.uid + "' length does not match the schedule");
    }
    if (t.pred_dists) num_classes = static_cast<int>(t.pred_dists->cols());
  }
  out << meta_to_json(log.meta, log.uids(), num_classes).dump() << '\n';
  for (Eigen::Index i = 0; i < T; ++i) {
    json rec;
    rec["record"] = "checkpoint";
    rec["step"] = steps[static_cast<std::size_t>(i)];
    json losses = json::object();
    json gold = json::object();
    json dists = json::object();
    for (const auto& t : log.trajectories) {
      losses[t.uid] = t.losses(i);
      if (t.gold_probs) gold[t.uid] = (*t.gold_probs)(i);
      if (t.pred_dists) {
        std::vector<double> row(static_cast<std::size_t>(t.pred_dists->cols()));
        for (Eigen::Index c = 0; c < t.pred_dists->cols(); ++c) row[static_cast<std::size_t>(c)] = (*t.pred_dists)(i, c);
        dists[t.uid] = row;
      }
    }
    rec["losses"] = std::move(losses);
    if (!gold.empty()) rec["gold_probs"] = std::move(gold);
    if (!dists.empty()) rec["pred_dists"] = std::move(dists);
    out << rec.dump() << '\n';
  }
  for (const auto& g : log.gradient_norms) {
    json rec;
    rec["record"] = "grad_norms";
    rec["step"] = g.step;
    rec["norms"] = g.norms;
    out << rec.dump() << '\n';
  }
  for (const auto& c : log.group_cosines) {
    json rec;
    rec["record"] = "group_cosine";
    rec["step"] = c.step;
    rec["cosine_clean_vs_contested"] = c.cosine ? json(*c.cosine) : json(nullptr);
    out << rec.dump() << '\n';
  }
}

RunLog read_run_log(std::istream& in) {
  RunLog log;
  bool have_meta = false;
  std::vector<std::string> uids;
  std::unordered_map<std::string, std::size_t> uid_index;
  std::vector<bool> seen_step;
  bool have_gold = false;
  bool have_dists = false;
  int num_classes = 0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, "line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    const std::string kind = rec.value("record", std::string{});
    if (kind == "meta") {
      if (have_meta) throw Error(Errc::header, "line " + std::to_string(line_no) + ": second meta record");
      log.meta = meta_from_json(rec);
      have_meta = true;
      if (rec.contains("uids")) uids = rec["uids"].get<std::vector<std::string>>();
      num_classes = rec.value("num_classes", 0);
      seen_step.assign(log.meta.schedule.size(), false);
      continue;
    }
    if (!have_meta) throw Error(Errc::header, "line " + std::to_string(line_no) + ": first record must be the meta record");

    if (kind == "checkpoint") {
      const auto step = rec.at("step").get<std::int64_t>();
      const auto idx = log.meta.schedule.index_of(step);
      if (!idx) throw Error(Errc::alignment, "checkpoint step " + std::to_string(step) + " is not in the schedule");
      if (seen_step[*idx]) throw Error(Errc::alignment, "checkpoint step " + std::to_string(step) + " logged twice");
      seen_step[*idx] = true;
      const auto& losses = rec.at("losses");
      if (log.trajectories.empty()) {
        if (uids.empty()) {
          for (auto it = losses.begin(); it != losses.end(); ++it) uids.push_back(it.key());
        }
        const auto T = static_cast<Eigen::Index>(log.meta.schedule.size());
        have_gold = rec.contains("gold_probs");
        have_dists = rec.contains("pred_dists");
        for (const auto& u : uids) {
          if (!uid_index.emplace(u, log.trajectories.size()).second) throw Error(Errc::header, "duplicate uid '" + u + "' in meta");
          LossTrajectory t;
          t.uid = u;
          t.losses = Eigen::VectorXd::Zero(T);
          if (have_gold) t.gold_probs = Eigen::VectorXd::Zero(T);
          if (have_dists) {
            if (num_classes <= 0) num_classes = static_cast<int>(rec["pred_dists"].begin()->size());
            t.pred_dists = Eigen::MatrixXd::Zero(T, num_classes);
          }
          log.trajectories.push_back(std::move(t));
        }
      }
      if (losses.size() != uids.size()) {
        for (auto it = losses.begin(); it != losses.end(); ++it) {
          if (!uid_index.count(it.key())) {
            throw Error(Errc::alignment, "uid '" + it.key() + "' at step " + std::to_string(step) + " is not tracked");
          }
        }
      }
      const auto i = static_cast<Eigen::Index>(*idx);
      for (auto& t : log.trajectories) {
        auto it = losses.find(t.uid);
        if (it == losses.end() || !it->is_number()) {
          throw Error(Errc::alignment, "uid '" + t.uid + "' is missing at step " + std::to_string(step));
        }
        t.losses(i) = it->get<double>();
        if (have_gold) {
          const auto& g = rec.at("gold_probs");
          auto git = g.find(t.uid);
          if (git == g.end()) throw Error(Errc::alignment, "gold_prob of '" + t.uid + "' missing at step " + std::to_string(step));
          (*t.gold_probs)(i) = git->get<double>();
        }
        if (have_dists) {
          const auto& d = rec.at("pred_dists");
          auto dit = d.find(t.uid);
          if (dit == d.end() || static_cast<int>(dit->size()) != num_classes) {
            throw Error(Errc::alignment, "pred_dist of '" + t.uid + "' missing at step " + std::to_string(step));
          }
          for (int c = 0; c < num_classes; ++c) (*t.pred_dists)(i, c) = (*dit)[static_cast<std::size_t>(c)].get<double>();
        }
      }
    } else if (kind == "grad_norms") {
      GradientNormRecord g;
      g.step = rec.at("step").get<std::int64_t>();
      g.norms = rec.at("norms").get<std::map<std::string, double>>();
      log.gradient_norms.push_back(std::move(g));
    } else if (kind == "group_cosine") {
      GroupCosineRecord c;
      c.step = rec.at("step").get<std::int64_t>();
      const auto& v = rec.at("cosine_clean_vs_contested");
      if (!v.is_null()) c.cosine = v.get<double>();
      log.group_cosines.push_back(c);
    } else {
      throw Error(Errc::parse, "line " + std::to_string(line_no) + ": unknown record type '" + kind + "'");
    }
  }
  if (!have_meta) throw Error(Errc::header, "trajectory log has no meta record");
  for (std::size_t i = 0; i < seen_step.size(); ++i) {
    if (!seen_step[i]) {
      throw Error(Errc::alignment, "checkpoint step " + std::to_string(log.meta.schedule.steps()[i]) + " is missing");
    }
  }
  for (const auto& t : log.trajectories) t.validate();
  return log;
}

RunLog ingest_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open trajectory log '" + path.string() + "'");
  return read_run_log(in);
}

void emit_log(const std::filesystem::path& path, const RunLog& log) {
  std::ostringstream os;
  write_run_log(os, log);
  write_file_atomic(path, os.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code dir_ec;
    std::filesystem::create_directories(path.parent_path(), dir_ec);
    if (dir_ec) throw Error(Errc::io, "cannot create directory '" + path.parent_path().string() + "': " + dir_ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw Error(Errc::io, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot rename '" + tmp.string() + "': " + ec.message());
}

}  // namespace lossdyn
