#include <doctest.h>

#include <random>

#include <json.hpp>

#include "deskcell/errors.hpp"
#include "deskcell/evaluation.hpp"
#include "helpers.hpp"

using namespace deskcell;

namespace {

std::unique_ptr<Workcell> offline(const std::string& name) {
  BuildOptions o;
  o.listen = false;
  return Workcell::build(testutil::shipped(name), o);
}

PolicyContext context_of(const Workcell& wc) { return PolicyContext::from_config(wc.config(), wc.kinematics()); }

// Top face of a 4 cm block resting at (x, y) plus a patch of table.
PointCloud block_cloud(double x, double y) {
  PointCloud c;
  c.camera_ids = {"synthetic"};
  for (int i = -4; i <= 4; ++i)
    for (int j = -4; j <= 4; ++j) {
      c.points.emplace_back(x + i * 0.004, y + j * 0.004, 0.04);
      c.points.emplace_back(x + 0.2 + i * 0.01, y + j * 0.01, 0.0);
    }
  c.source.assign(c.points.size(), 0);
  return c;
}

Observation observe(const Vec3& ee, double gripper, const PointCloud& cloud, int dof = 6) {
  Observation o;
  o.state.q.assign(static_cast<std::size_t>(dof), 0.0);
  o.state.qd.assign(static_cast<std::size_t>(dof), 0.0);
  o.state.ee_pose = {ee.x(), ee.y(), ee.z(), 0, 1, 0, 0};
  o.state.gripper = gripper;
  o.cloud = cloud;
  return o;
}

class Plunge final : public Policy {
 public:
  explicit Plunge(PolicyContext ctx) : ctx_(std::move(ctx)) {}
  std::string id() const override { return "plunge"; }
  ActionSpace action_space() const override { return ctx_.action_space; }
  Action act(const Observation& obs) override {
    Twist down;
    down.linear = Vec3(0, 0, -0.1);
    if (ctx_.action_space == ActionSpace::ee_twist) return {down, GripperAction::open};
    const JointVector q = Eigen::Map<const JointVector>(obs.state.q.data(), static_cast<Eigen::Index>(obs.state.q.size()));
    return {twist_to_joints(*ctx_.kinematics, q, down, ctx_.dls_lambda), GripperAction::open};
  }

 private:
  PolicyContext ctx_;
};

class WrongSpace final : public Policy {
 public:
  explicit WrongSpace(ActionSpace s) : s_(s) {}
  std::string id() const override { return "wrong"; }
  ActionSpace action_space() const override { return s_; }
  Action act(const Observation&) override { return {Twist{}, GripperAction::hold}; }

 private:
  ActionSpace s_;
};

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("scripted phases advance on their predicates") {
    auto wc = offline("ur5_kinect4");
    const auto ctx = context_of(*wc);
    const auto cloud = block_cloud(0.5, 0.1);
    const double tol = ctx.params.position_tolerance;
    const double grasp_z = ctx.table_height + ctx.block_half_extents.z() - ctx.grasp.offset.z();

    ScriptedState st;
    auto [a0, s0] = scripted_grasp_lift(observe({0.3, 0.0, 0.3}, 1.0, cloud), st, ctx);
    CHECK(s0.phase == GraspPhase::approach);
    REQUIRE(s0.block);
    CHECK(s0.block->x() == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(a0.gripper == GripperAction::open);
    CHECK(std::get<Twist>(a0.command).linear.x() > 0);

    auto [a1, s1] = scripted_grasp_lift(observe({0.5, 0.1, ctx.params.approach_height}, 1.0, cloud), s0, ctx);
    CHECK(s1.phase == GraspPhase::descend);
    CHECK(std::get<Twist>(a1.command).linear.z() < 0);

    auto [a2, s2] = scripted_grasp_lift(observe({0.5, 0.1, grasp_z + 0.5 * tol}, 1.0, cloud), s1, ctx);
    CHECK(s2.phase == GraspPhase::grasp);
    CHECK(a2.gripper == GripperAction::close);
    CHECK(std::get<Twist>(a2.command).linear.norm() == 0.0);

    auto [a3, s3] = scripted_grasp_lift(observe({0.5, 0.1, grasp_z}, 0.9, cloud), s2, ctx);
    CHECK(s3.phase == GraspPhase::grasp);

    auto [a4, s4] = scripted_grasp_lift(observe({0.5, 0.1, grasp_z}, 0.3, cloud), s3, ctx);
    CHECK(s4.phase == GraspPhase::lift);
    CHECK(std::get<Twist>(a4.command).linear.z() > 0);
    CHECK(a4.gripper == GripperAction::close);

    auto [a5, s5] = scripted_grasp_lift(observe({0.5, 0.1, ctx.params.lift_height}, 0.0, cloud), s4, ctx);
    CHECK(s5.phase == GraspPhase::done);
    CHECK(std::get<Twist>(a5.command).linear.norm() == 0.0);
  }

  TEST_CASE("without any target the scripted policy waits with the gripper open") {
    auto wc = offline("bimanual_rs3");
    const auto [a, s] = scripted_grasp_lift(observe({0.3, 0.3, 0.3}, 1.0, {}, 12), {}, context_of(*wc));
    CHECK(!s.block);
    CHECK(std::get<Twist>(a.command).linear.norm() == 0.0);
    CHECK(a.gripper == GripperAction::open);
  }

  TEST_CASE("scripted twists never exceed the configured gains") {
    std::mt19937_64 g(8);
    std::uniform_real_distribution<double> u(-1, 1);
    for (const auto* name : {"ur5_kinect4", "bimanual_rs3"}) {
      auto wc = offline(name);
      const auto ctx = context_of(*wc);
      for (int i = 0; i < 500; ++i) {
        ScriptedState st;
        st.phase = static_cast<GraspPhase>(g() % 5);
        st.hold_orientation = testutil::random_quat(g);
        st.lift_from = Vec3(u(g), u(g), u(g));
        auto obs = observe({u(g), u(g), u(g)}, 0.5 * (1 + u(g)), block_cloud(u(g), u(g)));
        const Quat q = testutil::random_quat(g);
        obs.state.ee_pose[3] = q.w();
        obs.state.ee_pose[4] = q.x();
        obs.state.ee_pose[5] = q.y();
        obs.state.ee_pose[6] = q.z();
        const auto [a, s] = scripted_grasp_lift(obs, st, ctx);
        const auto& t = std::get<Twist>(a.command);
        CHECK(t.linear.norm() <= ctx.limits.v_max + 1e-12);
        CHECK(t.angular.norm() <= ctx.limits.w_max + 1e-12);
      }
    }
  }

  TEST_CASE("policies follow the workcell action space") {
    auto ur5 = offline("ur5_kinect4");
    auto bi = offline("bimanual_rs3");
    CHECK(make_policy("scripted", context_of(*ur5))->action_space() == ActionSpace::joint_velocity);
    CHECK(make_policy("scripted", context_of(*bi))->action_space() == ActionSpace::ee_twist);
    CHECK_THROWS_AS(make_policy("random", context_of(*ur5)), std::invalid_argument);
  }
}

TEST_SUITE("policy_eval") {
  TEST_CASE("mismatched action space is rejected") {
    auto ur5 = offline("ur5_kinect4");
    WrongSpace p(ActionSpace::ee_twist);
    CHECK_THROWS_AS(run_rollout(*ur5, p, 0, 1.0), ActionSpaceError);
    auto bi = offline("bimanual_rs3");
    WrongSpace q(ActionSpace::joint_velocity);
    CHECK_THROWS_AS(PolicyDriver(*bi, q), ActionSpaceError);
  }

  TEST_CASE("a null policy never grasps") {
    for (const auto* name : {"ur5_kinect4", "bimanual_rs3"}) {
      auto wc = offline(name);
      auto p = make_policy("null", context_of(*wc));
      const auto r = run_rollout(*wc, *p, 3, 2.0);
      CHECK(!r.success);
      CHECK(r.failure_mode == FailureMode::no_grasp);
      CHECK(r.duration_s == doctest::Approx(2.0).epsilon(0.01));
    }
  }

  TEST_CASE("driving through the table is a collision") {
    for (const auto* name : {"ur5_kinect4", "bimanual_rs3"}) {
      auto wc = offline(name);
      Plunge p(context_of(*wc));
      const auto r = run_rollout(*wc, p, 5, 20.0);
      CHECK(r.failure_mode == FailureMode::collision);
      CHECK(r.duration_s < 10.0);
    }
  }

  TEST_CASE("rollouts are deterministic and success means no failure") {
    for (const auto* name : {"ur5_kinect4", "bimanual_rs3"}) {
      auto wc = offline(name);
      auto p = make_policy("scripted", context_of(*wc));
      const auto a = run_rollout(*wc, *p, 11, 20.0);
      const auto b = run_rollout(*wc, *p, 11, 20.0);
      CHECK(a.success);
      CHECK(a.failure_mode == FailureMode::none);
      CHECK(a.duration_s == b.duration_s);
      REQUIRE(a.trace.size() == b.trace.size());
      for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].command == b.trace[i].command);
        CHECK(a.trace[i].ee_position == b.trace[i].ee_position);
      }
    }
  }

  TEST_CASE("reports are identical for identical runs") {
    auto wc = offline("bimanual_rs3");
    auto p = make_policy("scripted", context_of(*wc));
    const auto a = report_to_json(evaluate(*wc, *p, 3, 7));
    const auto b = report_to_json(evaluate(*wc, *p, 3, 7));
    CHECK(a == b);
    const auto doc = nlohmann::json::parse(a);
    CHECK(doc["n_trials"] == 3);
    CHECK(doc["trials"].size() == 3);
    for (const auto& t : doc["trials"]) {
      const std::string m = t["failure_mode"];
      CHECK((m == "none" || m == "no_grasp" || m == "dropped" || m == "collision" || m == "timeout"));
      CHECK((t["success"] == true) == (m == "none"));
    }
    CHECK_THROWS_AS(evaluate(*wc, *p, 0, 7), std::invalid_argument);
  }

  TEST_CASE("the scripted policy lifts the block from 100 spawns") {
    auto wc = offline("ur5_kinect4");
    auto p = make_policy("scripted", context_of(*wc));
    int ok = 0;
    for (std::uint64_t s = 1000; s < 1100; ++s) ok += run_rollout(*wc, *p, s, 20.0).success;
    CHECK(ok == 100);
  }
}
