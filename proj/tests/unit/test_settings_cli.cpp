#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <sstream>
#include <sys/wait.h>

#include "chsnet/ablate.hpp"
#include "chsnet/error.hpp"
#include "chsnet/plot.hpp"
#include "chsnet/settings.hpp"
#include "train_fixtures.hpp"

using namespace chsnet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int status;
  std::string out, err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(CHSNET_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

// Settings for a seconds-long run on the tiny dataset.
std::string tiny_flags(const fs::path& data) {
  return "--set dataset.dir=" + data.string() +
         " --set model.channels=16 --set model.encoder_stride=8 --set model.conv_head.n_blocks=2"
         " --set model.tran_head.n_layers=1 --set model.tran_head.n_heads=2 --set train.crop_size=64"
         " --set train.batch_size=2 --set train.max_epochs=1 --set train.learning_rate=1e-3";
}

}  // namespace

TEST_SUITE("settings_cli") {
  TEST_CASE("config files, overrides and unknown keys") {
    testing::TempDir dir("settings");
    const auto conf = dir.path / "a.conf";
    std::ofstream(conf) << "# comment\n\ntrain.learning_rate = 0.002  # trailing\nmodel.channels=32\n"
                           "ablate.delta_max = 0, 0.1 ,0.3\nscene.background = flat\n";
    Settings s;
    s.apply_file(conf);
    CHECK(s.train.learning_rate == 0.002);
    CHECK(s.model.channels == 32);
    CHECK(s.ablation.delta_max == std::vector<double>{0.0, 0.1, 0.3});
    CHECK(s.scene.background == BackgroundTexture::flat);
    s.apply_override("seed=9");
    CHECK(s.train.seed == 9);
    CHECK(s.scene.seed == 9);
    CHECK(s.noise.seed == 9);

    CHECK_THROWS_AS(s.apply_override("train.learnin_rate=1"), Error);
    CHECK_THROWS_AS(s.apply_override("train.learning_rate"), Error);
    CHECK_THROWS_AS(s.apply_override("model.channels=abc"), Error);
    CHECK_THROWS_AS(s.apply_override("train.loss=other"), Error);
    std::ofstream(conf, std::ios::app) << "bogus.key = 1\n";
    try {
      Settings t;
      t.apply_file(conf);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
      CHECK(std::string(e.what()).find("a.conf:7:") != std::string::npos);
    }
    // Every dumped key can be set back.
    Settings u;
    for (const auto& [k, v] : s.dump()) CHECK_NOTHROW(u.set(k, v));
    CHECK(u.dump() == s.dump());
  }

  TEST_CASE("cli reports failures as one categorised line") {
    testing::TempDir dir("cli");
    auto r = run_cli("train --set no.such.key=1", dir.path);
    CHECK(r.status == exit_code(ErrorKind::config));
    CHECK(r.err.rfind("error[config]: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    r = run_cli("eval --set eval.checkpoint=" + (dir.path / "none.ckpt").string(), dir.path);
    CHECK(r.status == exit_code(ErrorKind::io));
    CHECK(r.err.rfind("error[io]: ", 0) == 0);
    r = run_cli("frobnicate", dir.path);
    CHECK(r.status != 0);
  }

  TEST_CASE("cli end to end: synth-gen, train, eval, predict, plot") {
    testing::TempDir dir("cli");
    const auto data = dir.path / "data";
    auto r = run_cli("synth-gen --out " + data.string() +
                         " --set scene.image_size=64 --set scene.count_min=3 --set scene.count_max=9"
                         " --set dataset.n_train=4 --set dataset.n_val=3 --seed 2",
                     dir.path);
    REQUIRE(r.status == 0);
    r = run_cli("train --quiet --deterministic " + tiny_flags(data) + " --out " + (dir.path / "run").string(), dir.path);
    INFO(r.err);
    REQUIRE(r.status == 0);
    const auto ckpt = dir.path / "run" / "last.ckpt";
    REQUIRE(fs::exists(ckpt));

    r = run_cli("eval --set eval.checkpoint=" + ckpt.string() + " --set dataset.dir=" + data.string() +
                    " --set eval.head=conv --out " + (dir.path / "eval").string(),
                dir.path);
    REQUIRE(r.status == 0);
    const auto report = nlohmann::json::parse(slurp(dir.path / "eval" / "eval_conv.json"));
    CHECK(report["counts"].size() == 3);

    const auto image = data / "images" / "0004.png";
    REQUIRE(fs::exists(image));
    r = run_cli("predict --set eval.checkpoint=" + ckpt.string() + " --set predict.image=" + image.string() +
                    " --out " + (dir.path / "pred").string(),
                dir.path);
    REQUIRE(r.status == 0);
    const auto counts = nlohmann::json::parse(slurp(dir.path / "pred" / "counts.json"));
    const DensityMap conv = read_density_map(dir.path / "pred" / "conv.dmap");
    const DensityMap tran = read_density_map(dir.path / "pred" / "tran.dmap");
    const DensityMap avg = read_density_map(dir.path / "pred" / "average.dmap");
    CHECK(conv.height == 16);
    CHECK(conv.same_shape(tran));
    CHECK(counts["conv"].get<double>() == total_count(conv));
    CHECK(counts["average"].get<double>() == doctest::Approx(0.5 * (total_count(conv) + total_count(tran))).epsilon(1e-12));
    CHECK(total_count(avg) == doctest::Approx(counts["average"].get<double>()).epsilon(1e-12));
    // Eval on the same image agrees with predict (image 0004 is the first validation image).
    CHECK(report["counts"][0][0].get<double>() == doctest::Approx(total_count(conv)).epsilon(1e-9));

    r = run_cli("plot --set eval.checkpoint=" + ckpt.string() + " --set dataset.dir=" + data.string() +
                    " --set plot.count=2 --out " + (dir.path / "plots").string(),
                dir.path);
    REQUIRE(r.status == 0);
    CHECK(fs::exists(dir.path / "plots" / "0004.png"));
    CHECK(fs::exists(dir.path / "plots" / "0005.png"));
    std::ifstream captions(dir.path / "plots" / "captions.csv");
    std::string line;
    std::getline(captions, line);
    int rows = 0;
    while (std::getline(captions, line)) {
      ++rows;
      if (line.rfind("0004,conv,", 0) == 0) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", total_count(conv));
        CHECK(line.find(std::string(",") + buf + ",") != std::string::npos);
      }
    }
    CHECK(rows == 10);
  }

  TEST_CASE("plot panels") {
    testing::TempDir dir("plot");
    cv::Mat img(32, 32, CV_8UC3, cv::Scalar(10, 20, 30));
    const DensityMap zero(4, 4, 8);
    DensityMap some(4, 4, 8);
    some.at(1, 2) = 2.25;
    const auto panels = make_panels(img, 3.0, {{"GT", zero}, {"pred", some}});
    REQUIRE(panels.size() == 3);
    CHECK(caption(panels[2].label, panels[2].count) == "pred 2.2");
    CHECK(caption("x", 0.05) == "x 0.1");
    CHECK(panels[1].image.size() == img.size());
    const auto path = write_panel_set(dir.path, "set0", panels);
    CHECK(fs::exists(path));
    CHECK(cv::imread(path.string()).cols == 96);
  }

  TEST_CASE("ablation table cardinality, degenerate sweep and reproducibility") {
    testing::TempDir dir("ablate");
    testing::make_tiny_dataset(dir.path / "data");
    Settings s;
    for (const auto& kv : {"model.channels=16", "model.encoder_stride=8", "model.conv_head.n_blocks=2",
                           "model.tran_head.n_layers=1", "model.tran_head.n_heads=2", "train.crop_size=64",
                           "train.batch_size=2", "train.max_epochs=2", "train.learning_rate=1e-3"})
      s.apply_override(kv);
    s.dataset_dir = dir.path / "data";
    s.ablation.delta_max = {0.0, 0.3};
    s.ablation.seeds = 2;
    const auto table = run_ablation(s, dir.path / "a");
    CHECK(table.rows.size() == 12);
    CHECK(table.means.size() == 6);
    write_ablation(table, dir.path / "a");
    const auto again = run_ablation(s, dir.path / "b");
    write_ablation(again, dir.path / "b");
    CHECK(slurp(dir.path / "a" / "ablation.csv") == slurp(dir.path / "b" / "ablation.csv"));
    CHECK(slurp(dir.path / "a" / "ablation.txt") == slurp(dir.path / "b" / "ablation.txt"));

    // A single-cell sweep equals one plain training run with that seed.
    s.ablation.delta_max = {0.0};
    s.ablation.seeds = 1;
    const auto single = run_ablation(s, dir.path / "c");
    REQUIRE(single.rows.size() == 3);
    TrainConfig cfg = s.train;
    cfg.delta_max = 0.0;
    cfg.seed = ablation_seed(s.ablation.master_seed, 0);
    const auto run = train(s.model, cfg, load_dataset(s.dataset_dir), dir.path / "d");
    ChsNet model = load_model(run.last_checkpoint);
    const auto reports = evaluate_model(model, load_dataset(s.dataset_dir).val);
    for (std::size_t h = 0; h < 3; ++h) {
      CHECK(single.rows[h].mae == reports[h].mae);
      CHECK(single.rows[h].mse == reports[h].mse);
    }

    s.ablation.delta_max = {0.1, 1.5};
    CHECK_THROWS_AS(run_ablation(s, dir.path / "e"), Error);
  }
}
