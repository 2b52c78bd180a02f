#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "chsnet/error.hpp"
#include "train_fixtures.hpp"

using namespace chsnet;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("train_eval") {
  TEST_CASE("count error arithmetic") {
    const std::vector<double> pred{10, 12}, truth{11, 11};
    const auto e = count_errors(pred, truth);
    CHECK(e.mae == 1.0);
    CHECK(e.mse == 1.0);
    const auto perfect = count_errors(truth, truth);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.mse == 0.0);
    const std::vector<double> p2{0, 4}, t2{0, 0};
    CHECK(count_errors(p2, t2).mae == 2.0);
    CHECK(count_errors(p2, t2).mse == doctest::Approx(std::sqrt(8.0)));
    CHECK_THROWS_AS(count_errors({}, {}), Error);
  }

  TEST_CASE("easy/hard split is a partition at the median count") {
    const std::vector<double> counts{5, 40, 12, 40, 7, 30, 12};
    const auto hard = hard_split(counts);
    CHECK(hard == std::vector<bool>{false, true, false, true, false, true, false});
    for (std::size_t n = 0; n < 12; ++n) {
      std::vector<double> c(n);
      for (std::size_t i = 0; i < n; ++i) c[i] = static_cast<double>((i * 7) % 5);
      const auto h = hard_split(c);
      const auto n_hard = static_cast<std::size_t>(std::count(h.begin(), h.end(), true));
      CHECK(n_hard == n / 2);
      double min_hard = 1e9, max_easy = -1e9;
      for (std::size_t i = 0; i < n; ++i) {
        if (h[i])
          min_hard = std::min(min_hard, c[i]);
        else
          max_easy = std::max(max_easy, c[i]);
      }
      if (n >= 2) CHECK(min_hard >= max_easy);
    }
    const auto r = make_report(EvalHead::conv, std::vector<double>{6, 38, 12, 41, 7, 30, 13}, counts);
    CHECK(r.n_easy + r.n_hard == 7);
    CHECK(r.hard_mae == doctest::Approx((2.0 + 1.0 + 0.0) / 3.0));
    CHECK(r.easy_mae == doctest::Approx((1.0 + 0.0 + 0.0 + 1.0) / 4.0));
  }

  TEST_CASE("training writes logs and a loadable checkpoint") {
    testing::TempDir dir("train");
    testing::make_tiny_dataset(dir.path / "data");
    const Dataset data = load_dataset(dir.path / "data");
    const auto result = train(testing::toy_config(), testing::tiny_train_config(1), data, dir.path / "run");
    REQUIRE(result.epochs.size() == 1);
    CHECK(result.step_losses.size() == 2);
    const auto metrics = lines(dir.path / "run" / "metrics.jsonl");
    REQUIRE(metrics.size() == 1);
    const auto rec = nlohmann::json::parse(metrics[0]);
    for (const char* key : {"epoch", "delta_i", "alpha_i", "train_loss", "val_mae", "val_mse"}) CHECK(rec.contains(key));
    CHECK(rec["delta_i"] == 0.1);
    CHECK(lines(dir.path / "run" / "supervision.jsonl").size() == 1);
    ChsNet model = load_model(result.last_checkpoint);
    CHECK(model.config() == testing::toy_config());
    CHECK(fs::exists(result.best_checkpoint));
    const auto report = evaluate(result.last_checkpoint, dir.path / "data", EvalHead::average);
    CHECK(report.counts.size() == 3);
  }

  TEST_CASE("zero noise ratio or zero blend reproduces plain dual regression") {
    testing::TempDir dir("train");
    testing::make_tiny_dataset(dir.path / "data");
    const Dataset data = load_dataset(dir.path / "data");
    TrainConfig plain = testing::tiny_train_config(3);
    plain.loss = LossMode::plain;
    const auto ref = train(testing::toy_config(), plain, data, dir.path / "plain");
    for (auto [dmax, amax] : {std::pair{0.0, 1.0}, std::pair{0.3, 0.0}}) {
      TrainConfig c = testing::tiny_train_config(3);
      c.delta_max = dmax;
      c.alpha_max = amax;
      const auto run = train(testing::toy_config(), c, data, dir.path / "chs");
      REQUIRE(run.step_losses.size() == ref.step_losses.size());
      for (std::size_t i = 0; i < ref.step_losses.size(); ++i)
        CHECK(std::abs(run.step_losses[i] - ref.step_losses[i]) <= 1e-9);
    }
  }

  TEST_CASE("resuming reproduces the uninterrupted run and repeated runs are identical") {
    testing::TempDir dir("train");
    testing::make_tiny_dataset(dir.path / "data");
    const Dataset data = load_dataset(dir.path / "data");
    const TrainConfig cfg = testing::tiny_train_config(4);
    const auto full = train(testing::toy_config(), cfg, data, dir.path / "full");
    const auto again = train(testing::toy_config(), cfg, data, dir.path / "again");
    CHECK(slurp(dir.path / "full" / "metrics.jsonl") == slurp(dir.path / "again" / "metrics.jsonl"));
    CHECK(slurp(dir.path / "full" / "steps.jsonl") == slurp(dir.path / "again" / "steps.jsonl"));

    TrainOptions first;
    first.stop_after_epoch = 2;
    const auto part = train(testing::toy_config(), cfg, data, dir.path / "part", first);
    CHECK(part.epochs.size() == 2);
    TrainOptions second;
    second.resume_from = part.last_checkpoint;
    const auto rest = train(testing::toy_config(), cfg, data, dir.path / "part", second);
    REQUIRE(rest.epochs.size() == 2);
    CHECK(rest.epochs[0].epoch == 3);
    CHECK(std::abs(rest.epochs[0].train_loss - full.epochs[2].train_loss) <= 1e-6);
    CHECK(std::abs(rest.epochs[1].train_loss - full.epochs[3].train_loss) <= 1e-6);
    CHECK(lines(dir.path / "part" / "metrics.jsonl").size() == 4);

    TrainConfig other = cfg;
    other.max_epochs = 6;
    CHECK_THROWS_AS(train(testing::toy_config(), other, data, dir.path / "part", second), Error);
  }

  TEST_CASE("evaluation: average head is the mean of both heads and batch size does not matter") {
    testing::TempDir dir("eval");
    testing::make_tiny_dataset(dir.path / "data", 2, 5);
    const Dataset data = load_dataset(dir.path / "data");
    ChsNet model(testing::toy_config(), 3);
    const auto r1 = evaluate_model(model, data.val, 1);
    const auto r3 = evaluate_model(model, data.val, 3);
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t i = 0; i < data.val.size(); ++i)
        CHECK(r1[h].counts[i].first == doctest::Approx(r3[h].counts[i].first).epsilon(1e-12));
    for (std::size_t i = 0; i < data.val.size(); ++i) {
      CHECK(r1[2].counts[i].first ==
            doctest::Approx(0.5 * (r1[0].counts[i].first + r1[1].counts[i].first)).epsilon(1e-12));
      CHECK(r1[0].counts[i].second == static_cast<double>(data.val[i].annotations.count()));
    }
    CHECK_THROWS_AS(evaluate_model(model, std::span<const Sample>{}), Error);
  }

  TEST_CASE("non-finite loss aborts with the batch and schedule state") {
    testing::TempDir dir("train");
    testing::make_tiny_dataset(dir.path / "data");
    const Dataset data = load_dataset(dir.path / "data");
    TrainConfig c = testing::tiny_train_config(3);
    c.learning_rate = 1e300;
    try {
      train(testing::toy_config(), c, data, dir.path / "run");
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::numeric);
      const std::string msg = e.what();
      CHECK(msg.find("batch") != std::string::npos);
      CHECK(msg.find("delta_i") != std::string::npos);
    }
  }

  TEST_CASE("config validation") {
    TrainConfig c = testing::tiny_train_config(1);
    c.crop_size = 60;
    CHECK_THROWS_AS(c.validate(testing::toy_config()), Error);
    c = testing::tiny_train_config(1);
    c.hflip_prob = 1.5;
    CHECK_THROWS_AS(c.validate(testing::toy_config()), Error);
    c = testing::tiny_train_config(1);
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(testing::toy_config()), Error);
  }
}
