#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kData = APG_DATA_DIR;
const std::string kCli = APG_CLI;

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("apg_cli_test_" + std::to_string(::getpid()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
};

int apg(const std::string& args, const fs::path& out) {
  const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kConfig = " --config \"" + kData + "/run.json\"";
const std::string kOpen = "\"" + kData + "/instructions/open_the_door.tree\"";
const std::string kDrive = "\"" + kData + "/instructions/drive_to_the_door.tree\"";

}  // namespace

TEST_CASE("run writes artifacts and exits 0 on completion") {
  TempDir tmp;
  const auto out = tmp.path / "stdout";
  REQUIRE(apg("run " + kOpen + kConfig + " --out-dir \"" + (tmp.path / "run").string() + "\"", out) == 0);
  for (const char* f : {"world.json", "metrics.json", "trace.json", "trace.log"}) CHECK(fs::exists(tmp.path / "run" / f));
  const auto world = nlohmann::json::parse(slurp(tmp.path / "run" / "world.json"));
  CHECK(world["objects"].size() == 2);
  const auto trace = nlohmann::json::parse(slurp(tmp.path / "run" / "trace.json"));
  CHECK(trace.back()["state"] == "COMPLETE");
  CHECK(slurp(tmp.path / "run" / "trace.log").find("PUSHING") != std::string::npos);
}

TEST_CASE("exit codes by stage") {
  TempDir tmp;
  const auto out = tmp.path / "stdout";
  CHECK(apg("run " + kOpen + kConfig + " --drop-detector door_handle", out) == 4);
  CHECK(slurp(out).find("execution") != std::string::npos);
  // No noun, no detectors: nothing to perceive.
  CHECK(apg("run \"(VP (VB look))\"" + kConfig, out) == 3);
  CHECK(apg("run \"(VP (VB open) (NP (DT the) (NN door))\"" + kConfig, out) == 1);
  CHECK(apg("run \"" + (tmp.path / "missing.tree").string() + "\"" + kConfig, out) == 1);

  std::ofstream(tmp.path / "broken.json") << R"({"symbols": "nope.json"})";
  CHECK(apg("run " + kOpen + " --config \"" + (tmp.path / "broken.json").string() + "\"", out) == 1);
}

TEST_CASE("ground prints the detector set") {
  TempDir tmp;
  const auto out = tmp.path / "stdout";
  REQUIRE(apg("ground " + kOpen + kConfig + " --json", out) == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["detectors"] == nlohmann::json::array({"door", "door_handle"}));
}

TEST_CASE("trained model files drive a run") {
  TempDir tmp;
  const auto out = tmp.path / "stdout";
  const std::string symbols = " --symbols \"" + kData + "/symbols.json\"";
  REQUIRE(apg("train \"" + kData + "/perception_corpus.json\" --kind perception" + symbols + " -o \"" +
                  (tmp.path / "p.json").string() + "\"",
              out) == 0);
  REQUIRE(apg("train \"" + kData + "/behavior_corpus.json\" --kind behavior" + symbols + " -o \"" +
                  (tmp.path / "b.json").string() + "\"",
              out) == 0);
  CHECK(slurp(out).find("objective") != std::string::npos);
  // Kind mismatch is rejected before training.
  CHECK(apg("train \"" + kData + "/behavior_corpus.json\" --kind perception" + symbols + " -o \"" +
                (tmp.path / "x.json").string() + "\"",
            out) == 1);

  const nlohmann::json cfg{{"symbols", kData + "/symbols.json"},
                           {"detectors", kData + "/detectors.json"},
                           {"scene", kData + "/door_scene.json"},
                           {"perception_model", (tmp.path / "p.json").string()},
                           {"behavior_model", (tmp.path / "b.json").string()}};
  std::ofstream(tmp.path / "cfg.json") << cfg.dump();
  CHECK(apg("run " + kDrive + " --config \"" + (tmp.path / "cfg.json").string() + "\"", out) == 0);
}

TEST_CASE("perceive and exhaustive runs") {
  TempDir tmp;
  const auto out = tmp.path / "stdout";
  REQUIRE(apg("perceive --detector door" + kConfig + " --json", out) == 0);
  auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["metrics"]["avg_period"].get<double>() == doctest::Approx(0.092));
  REQUIRE(apg("run " + kDrive + kConfig + " --exhaustive --json", out) == 0);
  j = nlohmann::json::parse(slurp(out));
  CHECK(j["active_detectors"].size() == 5);
  CHECK(j["metrics"]["avg_period"].get<double>() >= 10 * 0.092);
}
