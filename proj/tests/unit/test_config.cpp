#include <doctest.h>

#include <fstream>
#include <functional>
#include <random>

#include <json.hpp>

#include "deskcell/errors.hpp"
#include "deskcell/workcell.hpp"
#include "helpers.hpp"

using namespace deskcell;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json shipped_doc(const std::string& name) { return json::parse(read_text(testutil::configs_dir() / (name + ".json"))); }

json shipped_calib(const std::string& name) {
  return json::parse(read_text(testutil::configs_dir() / "calib" / (name + ".calib.json")));
}

std::vector<std::string> violations(const json& doc) {
  try {
    parse_and_validate(doc.dump());
  } catch (const ValidationError& e) {
    return e.violations;
  }
  return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

void collect_numbers(const json& j, const json::json_pointer& at, std::vector<json::json_pointer>& out) {
  if (j.is_number_float()) out.push_back(at);
  if (j.is_object())
    for (const auto& [k, v] : j.items()) collect_numbers(v, at / k, out);
  if (j.is_array())
    for (std::size_t i = 0; i < j.size(); ++i) collect_numbers(j[i], at / i, out);
}

std::string shuffled_text(const json& j, std::mt19937_64& g, int indent) {
  std::function<nlohmann::ordered_json(const json&)> rebuild = [&](const json& v) -> nlohmann::ordered_json {
    if (v.is_array()) {
      auto out = nlohmann::ordered_json::array();
      for (const auto& e : v) out.push_back(rebuild(e));
      return out;
    }
    if (!v.is_object()) return nlohmann::ordered_json::parse(v.dump());
    std::vector<std::string> keys;
    for (const auto& [k, e] : v.items()) keys.push_back(k);
    std::shuffle(keys.begin(), keys.end(), g);
    auto out = nlohmann::ordered_json::object();
    for (const auto& k : keys) out[k] = rebuild(v.at(k));
    return out;
  };
  return rebuild(j).dump(indent);
}

}  // namespace

TEST_SUITE("workcell_config") {
  TEST_CASE("shipped configs load and differ") {
    const auto a = testutil::shipped("ur5_kinect4");
    const auto b = testutil::shipped("bimanual_rs3");
    CHECK(a.robot.type == "ur5_sim");
    CHECK(a.robot.dof == 6);
    CHECK(a.cameras.size() == 4);
    CHECK(b.robot.type == "bimanual_sim");
    CHECK(b.robot.dof == 12);
    CHECK(b.cameras.size() == 3);
    CHECK(b.robot.action_space == ActionSpace::ee_twist);
    REQUIRE(a.calibration);
    REQUIRE(b.calibration);
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a).size() == 16);
  }

  TEST_CASE("every violation is reported at once") {
    auto doc = shipped_doc("ur5_kinect4");
    doc["cameras"][1]["role"] = "master";
    doc["cameras"][2]["type"] = "lidar_3000";
    doc["robot"]["dof"] = 7;
    doc["input"]["v_max"] = -1.0;
    doc["unexpected"] = 1;
    const auto v = violations(doc);
    CHECK(v.size() >= 5);
    CHECK(mentions(v, "master"));
    CHECK(mentions(v, "lidar_3000"));
    CHECK(mentions(v, "dof"));
    CHECK(mentions(v, "v_max"));
    CHECK(mentions(v, "unexpected"));
  }

  TEST_CASE("individual rejections") {
    const auto base = shipped_doc("ur5_kinect4");
    SUBCASE("no master") {
      auto d = base;
      d["cameras"][0]["role"] = "subordinate";
      CHECK(mentions(violations(d), "master"));
    }
    SUBCASE("unknown robot type") {
      auto d = base;
      d["robot"]["type"] = "ur99";
      CHECK(mentions(violations(d), "ur99"));
    }
    SUBCASE("duplicate camera id") {
      auto d = base;
      d["cameras"][1]["id"] = "kinect0";
      CHECK(!violations(d).empty());
    }
    SUBCASE("home outside limits") {
      auto d = base;
      d["robot"]["home"][0] = 10.0;
      CHECK(mentions(violations(d), "home"));
    }
    SUBCASE("bad action space") {
      auto d = base;
      d["robot"]["action_space"] = "torque";
      CHECK(mentions(violations(d), "action_space"));
    }
    SUBCASE("bimanual without follower map") {
      auto d = shipped_doc("bimanual_rs3");
      d["robot"].erase("follower_map");
      CHECK(mentions(violations(d), "follower_map"));
    }
    SUBCASE("not JSON") { CHECK_THROWS_AS(parse_and_validate("{\"name\": "), ValidationError); }
  }

  TEST_CASE("inline calibration must cover every camera") {
    auto doc = shipped_doc("ur5_kinect4");
    auto calib = shipped_calib("ur5_kinect4");
    calib["cameras"].erase("kinect2");
    calib["cameras"].erase("kinect3");
    doc.erase("calibration_path");
    doc["calibration"] = calib;
    const auto v = violations(doc);
    CHECK(mentions(v, "kinect2"));
    CHECK(mentions(v, "kinect3"));
    CHECK(!mentions(v, "kinect0"));

    auto full = shipped_doc("ur5_kinect4");
    full.erase("calibration_path");
    full["calibration"] = shipped_calib("ur5_kinect4");
    CHECK(violations(full).empty());
  }

  TEST_CASE("fnv-1a reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
    CHECK(fnv1a64("workcell") == oracle::fnv1a("workcell"));
  }

  TEST_CASE("hash ignores key order and whitespace") {
    std::mt19937_64 g(3);
    for (const auto* name : {"ur5_kinect4", "bimanual_rs3"}) {
      const auto doc = shipped_doc(name);
      const auto h = config_hash(parse_and_validate(doc.dump()));
      for (int i = 0; i < 20; ++i) {
        const auto text = shuffled_text(doc, g, i % 3 == 0 ? -1 : i % 5);
        CHECK(config_hash(parse_and_validate(text)) == h);
      }
    }
  }

  TEST_CASE("hash changes under any numeric mutation") {
    std::mt19937_64 g(4);
    const auto doc = shipped_doc("ur5_kinect4");
    const auto h = config_hash(parse_and_validate(doc.dump()));
    std::vector<json::json_pointer> leaves;
    collect_numbers(doc, json::json_pointer{}, leaves);
    REQUIRE(leaves.size() > 100);
    int valid = 0, tried = 0;
    while (valid < 100 && tried < 1000) {
      ++tried;
      auto d = doc;
      auto& leaf = d[leaves[g() % leaves.size()]];
      const double x = leaf.get<double>();
      leaf = x == 0.0 ? 1e-6 : x * (1 + 1e-6);
      try {
        const auto cfg = parse_and_validate(d.dump());
        ++valid;
        CHECK(config_hash(cfg) != h);
      } catch (const ValidationError&) {
      }
    }
    CHECK(valid == 100);
  }

  TEST_CASE("rebuilding from the same document gives the same hash") {
    BuildOptions o;
    o.listen = false;
    const auto a = Workcell::build(testutil::shipped("bimanual_rs3"), o);
    const auto b = Workcell::build(testutil::shipped("bimanual_rs3"), o);
    CHECK(a->hash() == b->hash());
    CHECK(a->hash() == config_hash(testutil::shipped("bimanual_rs3")));
  }

  TEST_CASE("missing calibration file fails startup naming the path") {
    testutil::TempDir tmp("nocalib");
    {
      std::ofstream out(tmp.path / "cell.json");
      out << shipped_doc("ur5_kinect4").dump(2);
    }
    auto cfg = load_workcell_config(tmp.path / "cell.json");
    CHECK(!cfg.calibration);
    BuildOptions o;
    o.listen = false;
    try {
      Workcell::build(cfg, o);
      FAIL("expected StartupError");
    } catch (const StartupError& e) {
      CHECK(std::string(e.what()).find("ur5_kinect4.calib.json") != std::string::npos);
    }
  }

  TEST_CASE("calibration file missing an entry is a validation error") {
    testutil::TempDir tmp("partialcalib");
    fs::create_directories(tmp.path / "calib");
    auto calib = shipped_calib("bimanual_rs3");
    calib["cameras"].erase(calib["cameras"].begin());
    {
      std::ofstream out(tmp.path / "calib" / "bimanual_rs3.calib.json");
      out << calib.dump();
      std::ofstream cfg(tmp.path / "cell.json");
      cfg << shipped_doc("bimanual_rs3").dump();
    }
    CHECK_THROWS_AS(load_workcell_config(tmp.path / "cell.json"), ValidationError);
  }

  TEST_CASE("a port already in use fails startup") {
    BuildOptions o;
    o.port = 0;
    const auto first = Workcell::build(testutil::shipped("ur5_kinect4"), o);
    REQUIRE(first->rtde_port() > 0);
    o.port = first->rtde_port();
    CHECK_THROWS_AS(Workcell::build(testutil::shipped("ur5_kinect4"), o), StartupError);
  }

  TEST_CASE("the registry knows both robot types") {
    const auto names = robot_type_names();
    CHECK(std::find(names.begin(), names.end(), "ur5_sim") != names.end());
    CHECK(std::find(names.begin(), names.end(), "bimanual_sim") != names.end());
    CHECK(find_robot_type("nope") == nullptr);
  }
}
