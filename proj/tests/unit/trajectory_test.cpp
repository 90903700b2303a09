#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "lossdyn/error.hpp"
#include "lossdyn/trajectory.hpp"
#include "lossdyn/trajectory_log.hpp"

using namespace lossdyn;

namespace {

LossTrajectory traj(std::string uid, std::vector<double> losses) {
  LossTrajectory t;
  t.uid = std::move(uid);
  t.losses = Eigen::Map<Eigen::VectorXd>(losses.data(), static_cast<Eigen::Index>(losses.size()));
  return t;
}

RunLog sample_log() {
  RunLog log;
  log.meta.run_id = "r";
  log.meta.method = Method::LowRank;
  log.meta.rank = 2;
  log.meta.alpha = 4.0;
  log.meta.seed = 7;
  log.meta.dataset = "toy";
  log.meta.schedule = CheckpointSchedule({10, 20, 30});
  log.meta.epoch_steps = {20, 30};
  log.meta.tags = {{"loss", "hard"}};
  auto a = traj("a", {1.0, 0.5, 0.25});
  a.gold_probs = Eigen::Vector3d(0.4, 0.6, 0.8);
  a.pred_dists = Eigen::MatrixXd(3, 3);
  *a.pred_dists << 0.4, 0.3, 0.3, 0.6, 0.2, 0.2, 0.8, 0.1, 0.1;
  auto b = traj("b", {0.1, 0.2, 0.3 + 1e-17});
  b.gold_probs = Eigen::Vector3d(0.9, 0.8, 0.7);
  b.pred_dists = Eigen::MatrixXd(3, 3);
  *b.pred_dists << 0.05, 0.9, 0.05, 0.1, 0.8, 0.1, 0.2, 0.7, 0.1;
  log.trajectories = {a, b};
  log.gradient_norms = {{10, {{"a", 1.5}, {"b", 0.25}}}};
  log.group_cosines = {{10, 0.5}, {20, std::nullopt}};
  return log;
}

}  // namespace

TEST(Trajectory, AulcIsMeanLoss) {
  EXPECT_DOUBLE_EQ(aulc(traj("a", {1, 2, 3, 6})), 3.0);
}

TEST(Trajectory, DeltaIsLastMinusFirst) {
  EXPECT_DOUBLE_EQ(delta_loss(traj("a", {1.0, 0.2, 1.5})), 0.5);
  EXPECT_DOUBLE_EQ(delta_loss(traj("a", {2.0, 0.5})), -1.5);
}

TEST(Trajectory, SingleCheckpointHasNoDelta) {
  try {
    delta_loss(traj("a", {1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_checkpoints);
  }
}

TEST(Trajectory, RejectsNegativeOrNonFiniteLoss) {
  EXPECT_THROW(aulc(traj("a", {1.0, -0.1})), Error);
  EXPECT_THROW(aulc(traj("a", {1.0, std::nan("")})), Error);
}

TEST(Trajectory, CartographyUsesEpochCheckpoints) {
  auto t = traj("a", {1, 1, 1, 1});
  t.gold_probs = Eigen::Vector4d(0.1, 0.2, 0.5, 0.9);
  const std::vector<std::size_t> idx{1, 3};
  const auto c = cartography_stats(t, idx);
  EXPECT_DOUBLE_EQ(c.confidence, 0.55);
  EXPECT_NEAR(c.variability, 0.35, 1e-15);
}

TEST(Schedule, MustBeStrictlyIncreasing) {
  EXPECT_THROW(CheckpointSchedule({10, 10}), Error);
  EXPECT_THROW(CheckpointSchedule({20, 10}), Error);
  const CheckpointSchedule s({5, 9, 12});
  EXPECT_EQ(s.index_of(9), 1u);
  EXPECT_FALSE(s.index_of(10).has_value());
}

TEST(Join, DropsUnmatchedOnBothSides) {
  std::vector<AnnotationRecord> recs{make_record("a", {10, 0, 0}), make_record("b", {1, 1, 1}),
                                     make_record("z", {5, 5, 0})};
  std::vector<LossTrajectory> trajs{traj("a", {1, 0.5}), traj("b", {0.5, 1}), traj("q", {1, 1})};
  const auto table = join(recs, trajs);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.dropped_annotations, 1u);
  EXPECT_EQ(table.dropped_trajectories, 1u);
  EXPECT_EQ(table.rows[1].category, EntropyCategory::Contested);
  EXPECT_DOUBLE_EQ(table.rows[1].delta, 0.5);
}

TEST(Join, NoOverlapIsAnError) {
  std::vector<AnnotationRecord> recs{make_record("a", {10, 0, 0})};
  std::vector<LossTrajectory> trajs{traj("b", {1, 0.5})};
  try {
    join(recs, trajs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::join);
  }
}

TEST(RunLog, StreamRoundTripIsIdentity) {
  const RunLog log = sample_log();
  std::ostringstream out;
  write_run_log(out, log);
  std::istringstream in(out.str());
  const RunLog back = read_run_log(in);
  EXPECT_TRUE(back == log);
  std::ostringstream again;
  write_run_log(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(RunLog, FileRoundTripIsIdentity) {
  const auto dir = std::filesystem::temp_directory_path() / "lossdyn_traj_test";
  std::filesystem::remove_all(dir);
  const RunLog log = sample_log();
  emit_log(dir / "nested" / "r.jsonl", log);
  EXPECT_TRUE(ingest_log(dir / "nested" / "r.jsonl") == log);
  EXPECT_FALSE(std::filesystem::exists(dir / "nested" / "r.jsonl.tmp"));
  std::filesystem::remove_all(dir);
}

TEST(RunLog, MissingCheckpointIsAlignmentError) {
  std::ostringstream out;
  write_run_log(out, sample_log());
  std::string text = out.str();
  const auto second = text.find("\"step\":20");
  const auto start = text.rfind('\n', second) + 1;
  const auto end = text.find('\n', second) + 1;
  text.erase(start, end - start);
  std::istringstream in(text);
  try {
    read_run_log(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::alignment);
  }
}

TEST(RunLog, MalformedLineReportsLineNumber) {
  std::ostringstream out;
  write_run_log(out, sample_log());
  std::istringstream in(out.str() + "{broken\n");
  try {
    read_run_log(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse);
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
}

TEST(RunLog, MissingFileIsIoError) {
  try {
    ingest_log("/nonexistent/dir/log.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
    EXPECT_EQ(exit_code_for(e.code()), 2);
  }
}
