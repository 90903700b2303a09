#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lossdyn/error.hpp"
#include "lossdyn/protocols.hpp"

using namespace lossdyn;
namespace fs = std::filesystem;

namespace {

ToyConfig quick_config() {
  ToyConfig c;
  c.probe_size = 90;
  c.bulk_size = 600;
  c.hidden_dim = 16;
  c.epochs = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Errc manifest_error(const std::string& text, std::string* message = nullptr) {
  try {
    parse_manifest(text);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  ADD_FAILURE() << "manifest accepted: " << text;
  return Errc::io;
}

}  // namespace

TEST(Protocols, NoiseAtZeroFractionMatchesBaseline) {
  LabCache labs;
  const ToyConfig c = quick_config();
  const ToyLab& lab = labs.get(c);
  std::size_t selected = 99;
  EXPECT_TRUE(noise_overrides(lab, 0.0, &selected).empty());
  EXPECT_EQ(selected, 0u);
  const auto base = finetune(lab, c);
  const auto result = noise_injection(c, {0.0, 0.5}, {c.seed}, labs);
  ASSERT_EQ(result.runs.size(), 2u);
  EXPECT_TRUE(result.runs[0].log.trajectories == base.log.trajectories);
  EXPECT_TRUE(result.rows[0].wilcoxon.degenerate);
  EXPECT_GT(result.rows[1].selected, 0u);
  EXPECT_TRUE(result.rows[1].cohens_d.has_value());
}

TEST(Protocols, NoiseOverridesOnlyTouchCleanTrackedExamples) {
  LabCache labs;
  const ToyLab& lab = labs.get(quick_config());
  std::size_t selected = 0;
  const auto o = noise_overrides(lab, 0.6, &selected);
  EXPECT_EQ(o.size(), selected);
  std::size_t clean = 0;
  for (auto i : lab.split.train) clean += lab.data.probe[i].tier == EntropyCategory::Clean ? 1 : 0;
  EXPECT_EQ(selected, static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(clean))));
  for (const auto& [uid, label] : o) {
    const auto it = std::find_if(lab.data.probe.begin(), lab.data.probe.end(), [&](const auto& e) { return e.uid == uid; });
    ASSERT_NE(it, lab.data.probe.end());
    EXPECT_EQ(it->tier, EntropyCategory::Clean);
    EXPECT_GE(label, 0);
    EXPECT_LT(label, 3);
  }
  EXPECT_THROW(noise_overrides(lab, 1.5), Error);
}

TEST(Protocols, CompositionAllIsBitIdenticalToBaseline) {
  LabCache labs;
  const ToyConfig c = quick_config();
  const auto base = finetune(labs.get(c), c);
  const auto result = composition_ablation(c, {Composition::All, Composition::LowOnly}, labs);
  ASSERT_EQ(result.runs.size(), 2u);
  EXPECT_TRUE(result.runs[0].log.trajectories == base.log.trajectories);
  EXPECT_GE(result.spread, 0.0);
}

TEST(Protocols, LowOnlyNeverTrainsOnContested) {
  LabCache labs;
  const ToyConfig c = quick_config();
  const ToyLab& lab = labs.get(c);
  FinetuneOptions o;
  o.composition = Composition::LowOnly;
  const auto r = finetune(lab, c, o);
  for (std::size_t k = 0; k < r.tracked.size(); ++k) {
    const auto& e = lab.data.probe[r.tracked[k]];
    const auto presence = r.training_presence.at(e.uid);
    if (e.tier == EntropyCategory::Clean) {
      EXPECT_EQ(presence, c.epochs);
    } else {
      EXPECT_EQ(presence, 0);
    }
  }
  EXPECT_EQ(r.log.trajectories.size(), lab.split.train.size());
}

TEST(Protocols, SoftLabelRunsDiffer) {
  LabCache labs;
  const auto r = soft_label_run(quick_config(), labs);
  EXPECT_FALSE(r.hard.log.trajectories == r.soft.log.trajectories);
  EXPECT_NE(r.hard.log.meta.run_id, r.soft.log.meta.run_id);
}

TEST(Protocols, RankSweepRequiresIncreasingRanks) {
  LabCache labs;
  EXPECT_THROW(rank_sweep(quick_config(), {2, 1}, labs), Error);
  const auto r = rank_sweep(quick_config(), {1, 2}, labs);
  ASSERT_EQ(r.rhos.size(), 2u);
  ASSERT_TRUE(r.monotonicity.has_value());
  EXPECT_TRUE(*r.monotonicity == 1.0 || *r.monotonicity == -1.0);
}

TEST(Protocols, MatrixAppliesCorrectionsAcrossConditions) {
  LabCache labs;
  const auto m = condition_matrix(quick_config(), {{Method::LowRank, 1, {42, 7}}, {Method::Scaling, 0, {42, 7}}}, 0.05,
                                  0.05, labs);
  ASSERT_EQ(m.conditions.size(), 2u);
  ASSERT_TRUE(m.verdicts.has_value());
  EXPECT_DOUBLE_EQ(m.verdicts->bonferroni_threshold, 0.025);
  EXPECT_EQ(m.verdicts->bonferroni.size(), 2u);
  for (const auto& c : m.conditions) {
    ASSERT_TRUE(c.aggregate.has_value());
    EXPECT_EQ(c.runs.size(), 2u);
    EXPECT_FALSE(c.aggregate->reduced_seeds);
  }
}

TEST(Manifest, SchemaErrorsNameTheFieldPath) {
  std::string msg;
  EXPECT_EQ(manifest_error(R"({"protocol": "train", "sed": 1})", &msg), Errc::config);
  EXPECT_NE(msg.find("manifest.sed"), std::string::npos);
  EXPECT_EQ(manifest_error(R"({"protocol": "dance"})", &msg), Errc::config);
  EXPECT_NE(msg.find("protocol"), std::string::npos);
  EXPECT_EQ(manifest_error(R"({"protocol": "train", "config": {"lr": "fast"}})", &msg), Errc::config);
  EXPECT_NE(msg.find("lr"), std::string::npos);
  EXPECT_EQ(manifest_error(R"({"protocol": "matrix"})", &msg), Errc::config);
  EXPECT_EQ(manifest_error(R"({"protocol": "matrix", "conditions": [{"rank": 2}]})", &msg), Errc::config);
  EXPECT_NE(msg.find("conditions[0].method"), std::string::npos);
  EXPECT_EQ(exit_code_for(manifest_error("{not json")), 2);
}

TEST(Manifest, DefaultsAndSeeds) {
  const auto m = parse_manifest(R"({"protocol": "sweep", "seed": 7})");
  EXPECT_EQ(m.seeds, (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(m.ranks, (std::vector<int>{1, 2, 4, 8}));
  const auto d = parse_manifest(R"({"protocol": "train"})");
  EXPECT_EQ(d.seeds, (std::vector<std::uint64_t>{42}));
}

TEST(Manifest, TrainWritesOneLogAndReportAndRerunsIdentically) {
  const fs::path dir = fs::temp_directory_path() / "lossdyn_manifest_test";
  fs::remove_all(dir);
  const auto m = parse_manifest(
      R"({"protocol": "train", "seed": 42, "config": {"probe_size": 90, "bulk_size": 600, "hidden_dim": 16, "epochs": 2}})");
  const auto first = run_manifest(m, dir / "a");
  const auto second = run_manifest(m, dir / "b");
  EXPECT_FALSE(first.failed);
  ASSERT_EQ(first.summary.size(), 1u);
  std::size_t logs = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    if (rel.begin()->string() == "logs") ++logs;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
  }
  EXPECT_EQ(logs, 1u);
  EXPECT_TRUE(fs::exists(dir / "a" / "reports" / "train.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "index.json"));
  fs::remove_all(dir);
}
