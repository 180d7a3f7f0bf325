#include "rddpm/commands.hpp"
#include "test_util.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <sys/wait.h>

using namespace rddpm;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = RDDPM_SOURCE_DIR;
const fs::path kCli = RDDPM_CLI_PATH;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rddpm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Drops the trailing wall_seconds column.
std::string without_last_column(const std::string& csv) {
  std::string out;
  for (const auto& line : lines_of(csv)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

const char* kTinySphere = R"(
manifold = sphere
sphere.n = 3
run.seed = 11
schedule.T = 1
schedule.N = 10
schedule.gamma_min = 0.1
schedule.gamma_max = 1
dataset.source = uniform
dataset.count = 60
model.hidden_width = 8
model.hidden_layers = 2
train.batch_size = 16
train.epochs = 3
train.refresh_every = 2
train.validate_every = 2
train.val_paths_per_point = 2
train.nll_paths_per_point = 2
generate.count = 7
)";

RunConfig tiny(const fs::path& out, std::vector<std::string> extra = {}) {
  extra.push_back("run.out_dir = " + out.string());
  return parse_config_text(kTinySphere, extra);
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + kCli.string() + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("family defaults") {
  const RunConfig s = default_config("sphere");
  CHECK(s.schedule.T == 4.0);
  CHECK(s.schedule.N == 400);
  CHECK(s.schedule.gamma_min == 0.01);
  CHECK(s.schedule.gamma_max == 1.0);
  CHECK(s.refresh_every == 1);
  CHECK(s.model_hidden_width == 512);
  CHECK(s.model_hidden_layers == 5);

  const RunConfig so = default_config("so");
  CHECK(so.schedule.T == 1.0);
  CHECK(so.schedule.N == 500);
  CHECK(so.schedule.gamma_min == 0.2);
  CHECK(so.schedule.gamma_max == 2.0);
  CHECK(so.refresh_every == 100);
  CHECK(so.model_hidden_layers == 3);

  const RunConfig d = default_config("dihedral");
  CHECK(d.schedule.T == 0.1);
  CHECK(d.schedule.N == 200);
  CHECK(d.schedule.gamma_min == 1.0);
  CHECK(d.schedule.gamma_max == 1.0);
  CHECK(d.refresh_every == 100);
  CHECK(d.drift_kind == "rmsd");
  CHECK(d.model_equivariant);

  CHECK_THROWS_AS(default_config("torus"), ConfigError);
}

TEST_CASE("parser: overrides, comments and rejections") {
  const RunConfig c = parse_config_text("manifold = so  # comment\nschedule.N = 20\n", {"schedule.N=30"});
  CHECK(c.manifold == "so");
  CHECK(c.schedule.N == 30);
  CHECK(c.schedule.T == 1.0);

  CHECK_THROWS_AS(parse_config_text("no.such.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("schedule.N = 3\nschedule.N = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("schedule.N = three\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("schedule.T = nan\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just some words\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("run.threads = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("model.equivariant = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("", {"bogus = 1"}), ConfigError);
  CHECK_THROWS_AS(parse_config(kSource / "does_not_exist.conf"), IoError);
}

TEST_CASE("resolved snapshot parses back to the same settings") {
  for (const char* family : {"sphere", "so", "dihedral"}) {
    const RunConfig a = parse_config_text(std::string("manifold = ") + family + "\nschedule.gamma_min = 0.123456789\n");
    const std::string text = a.to_text();
    const RunConfig b = parse_config_text(text);
    CHECK(b.to_text() == text);
  }
}

TEST_CASE("every preset parses and validates") {
  int found = 0;
  for (const auto& entry : fs::directory_iterator(kSource / "presets")) {
    if (entry.path().extension() != ".conf") continue;
    ++found;
    INFO(entry.path().string());
    const RunConfig c = parse_config(entry.path());
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(build_manifold(c));
    CHECK(parse_config_text(c.to_text()).to_text() == c.to_text());
  }
  CHECK(found >= 5);
}

TEST_CASE("train writes metrics, checkpoints and failures") {
  const fs::path out = scratch("train");
  const RunConfig cfg = tiny(out);
  cmd_train(cfg);
  for (const char* f : {"metrics.csv", "ckpt_best.txt", "ckpt_last.txt", "failures.csv", "config.resolved"})
    CHECK(fs::exists(out / f));
  const auto rows = lines_of(slurp(out / "metrics.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "epoch,train_loss,val_nll,ema_flag,wall_seconds");
  CHECK(parse_config_text(slurp(out / "config.resolved")).to_text() == cfg.to_text());
  CHECK(lines_of(slurp(out / "failures.csv"))[0] == "chain,attempts,discarded,percent");
}

TEST_CASE("identical seeds give bit-identical metrics") {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  const fs::path c = scratch("det_c");
  cmd_train(tiny(a, {"run.threads = 1"}));
  cmd_train(tiny(b, {"run.threads = 1"}));
  cmd_train(tiny(c, {"run.threads = 2"}));
  const std::string reference = without_last_column(slurp(a / "metrics.csv"));
  CHECK(reference == without_last_column(slurp(b / "metrics.csv")));
  CHECK(reference == without_last_column(slurp(c / "metrics.csv")));
  CHECK(slurp(a / "ckpt_best.txt") == slurp(b / "ckpt_best.txt"));
  CHECK(slurp(a / "ckpt_best.txt") == slurp(c / "ckpt_best.txt"));
}

TEST_CASE("nll with zero steps equals the negative prior log density") {
  const fs::path out = scratch("nll0");
  const RunConfig base = tiny(out);
  const LevelSetManifold m = build_manifold(base);
  const ScoreNet net = initial_network(base, m);
  save_checkpoint(out / "init.txt", net, AdamState::for_net(net));

  const RunConfig cfg = tiny(out, {"schedule.N = 0", "eval.checkpoint = " + (out / "init.txt").string()});
  const NllEstimate est = cmd_nll(cfg);
  const double log_area = std::log(4.0 * std::numbers::pi);
  REQUIRE_FALSE(est.per_point.empty());
  for (double v : est.per_point) CHECK(v == doctest::Approx(log_area).epsilon(1e-14));
  CHECK(lines_of(slurp(out / "nll.csv"))[0] == "point_index,nll,paths_used");
}

TEST_CASE("generate: samples on the manifold and an empty request") {
  const fs::path out = scratch("gen");
  cmd_train(tiny(out));
  cmd_generate(tiny(out, {"generate.record_steps = 0,5"}));
  const auto samples = read_points_csv(out / "samples.csv");
  CHECK(samples.size() == 7);
  for (const Vec& x : samples) CHECK(std::abs(x.norm() - 1.0) < 1e-8);
  CHECK(read_points_csv(out / "samples_step5.csv").size() == 7);

  const fs::path empty = scratch("gen0");
  fs::copy_file(out / "ckpt_best.txt", empty / "ckpt_best.txt");
  cmd_generate(tiny(empty, {"generate.count = 0"}));
  const auto rows = lines_of(slurp(empty / "samples.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0] == "x0,x1,x2");
}

TEST_CASE("forward and stats commands") {
  const fs::path out = scratch("fwd");
  cmd_forward(tiny(out, {"forward.count = 3"}));
  for (int i = 0; i < 3; ++i) {
    const auto rows = lines_of(slurp(out / ("forward_" + std::to_string(i) + ".csv")));
    CHECK(rows.size() == 12);
    CHECK(rows[0] == "step_index,x0,x1,x2");
  }
  write_points_csv(out / "pts.csv", prepare_data(tiny(out), build_manifold(tiny(out))).train, 3);
  cmd_stats(tiny(out), out / "pts.csv", "latlon");
  int hists = 0;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().filename().string().rfind("hist_", 0) == 0) ++hists;
  CHECK(hists >= 2);
}

TEST_CASE("guarded maps errors to exit codes") {
  CHECK(guarded([] {}) == kExitOk);
  CHECK(guarded([] { throw ConfigError("x"); }) == kExitConfig);
  CHECK(guarded([] { throw IoError("x"); }) == kExitIo);
  CHECK(guarded([] { throw AbortTooManyFailures("x"); }) == kExitNumerical);
  CHECK(guarded([] { throw std::runtime_error("x"); }) == kExitFailure);
}

TEST_CASE("command line exit codes") {
  const fs::path out = scratch("exit");
  const fs::path conf = out / "tiny.conf";
  std::ofstream(conf) << kTinySphere << "run.out_dir = " << out.string() << "\n";

  CHECK(run_cli("") == kExitConfig);
  CHECK(run_cli("bogus -c " + conf.string()) == kExitConfig);
  CHECK(run_cli("train -c " + conf.string() + " --set \"no.such = 1\"") == kExitConfig);
  CHECK(run_cli("train -c " + (out / "missing.conf").string()) == kExitIo);
  CHECK(run_cli("nll -c " + conf.string() + " --ckpt " + (out / "none.txt").string()) == kExitIo);
  CHECK(run_cli("train -c " + conf.string()) == kExitOk);
  CHECK(run_cli("generate -c " + conf.string() + " --count 2") == kExitOk);

  const fs::path so_conf = out / "so.conf";
  std::ofstream(so_conf) << "manifold = so\nschedule.N = 5\ndataset.count = 20\nmodel.hidden_width = 4\n"
                         << "train.epochs = 1\ntrain.max_attempts = 2\nnewton.max_steps = 1\nnewton.tol = 1e-12\n"
                         << "run.out_dir = " << (out / "so").string() << "\n";
  CHECK(run_cli("train -c " + so_conf.string()) == kExitNumerical);
}
