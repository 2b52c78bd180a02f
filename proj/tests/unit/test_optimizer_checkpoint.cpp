#include <doctest.h>

#include <fstream>

#include "chsnet/checkpoint.hpp"
#include "chsnet/error.hpp"
#include "chsnet/optimizer.hpp"
#include "model_fixtures.hpp"

using namespace chsnet;

TEST_SUITE("optimizer_checkpoint") {
  TEST_CASE("one AdamW step by hand") {
    Param w("w", {2});
    w.value.storage() = {1.0, -2.0};
    w.grad.storage() = {0.5, -0.25};
    Param b("b", {1}, false);
    b.value.storage() = {3.0};
    b.grad.storage() = {0.0};
    AdamW opt({&w, &b}, {.weight_decay = 0.01});
    opt.step(0.1);
    // Bias-corrected first step moves by lr * g / (|g| + eps), plus decoupled
    // decay lr * wd * value on decayed parameters only.
    CHECK(w.value[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.001 * 1.0).epsilon(1e-14));
    CHECK(w.value[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8) + 0.001 * 2.0).epsilon(1e-14));
    CHECK(b.value[0] == 3.0);
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("AdamW minimises a quadratic") {
    Param w("w", {3});
    w.value.storage() = {4.0, -3.0, 0.5};
    AdamW opt({&w}, {});
    for (int i = 0; i < 2000; ++i) {
      for (std::size_t k = 0; k < 3; ++k) w.grad[k] = 2.0 * (w.value[k] - static_cast<double>(k));
      opt.step(0.05);
    }
    for (std::size_t k = 0; k < 3; ++k) CHECK(w.value[k] == doctest::Approx(static_cast<double>(k)).epsilon(1e-3));
  }

  TEST_CASE("cosine learning rate") {
    CHECK(learning_rate_at(LrSchedule::cosine, 1.0, 1, 10) == 1.0);
    CHECK(learning_rate_at(LrSchedule::cosine, 1.0, 6, 10) == doctest::Approx(0.5));
    CHECK(learning_rate_at(LrSchedule::cosine, 1.0, 10, 10) > 0.0);
    CHECK(learning_rate_at(LrSchedule::constant, 0.3, 7, 10) == 0.3);
    double prev = 2.0;
    for (int e = 1; e <= 50; ++e) {
      const double lr = learning_rate_at(LrSchedule::cosine, 1.0, e, 50);
      CHECK(lr < prev);
      prev = lr;
    }
  }

  TEST_CASE("checkpoint round-trip restores identical predictions") {
    testing::TempDir dir("ckpt");
    const ModelConfig cfg = testing::toy_config();
    ChsNet a(cfg, 1);
    AdamW opt(a.params(), {.weight_decay = 1e-4});
    // A couple of training-mode passes move the batch-norm statistics.
    const Tensor x = testing::random_tensor({2, 3, 32, 32}, 2);
    for (int i = 0; i < 2; ++i) {
      a.zero_grad();
      const Prediction p = a.forward(x, Mode::train);
      a.backward(p.conv, p.tran);
      opt.step(1e-3);
    }
    TrainingState state;
    state.epoch = 3;
    state.total_epochs = 10;
    state.delta = 0.03;
    state.train_config = {{"seed", 5}};
    save_checkpoint(dir.path / "a.ckpt", capture_checkpoint(a, &opt, state));
    const Checkpoint loaded = load_checkpoint(dir.path / "a.ckpt");
    CHECK(loaded.model_config == cfg);
    CHECK(loaded.state.epoch == 3);
    CHECK(loaded.state.delta == 0.03);
    CHECK(loaded.state.optimizer_steps == 2);
    CHECK(loaded.state.train_config["seed"] == 5);

    ChsNet b(cfg, 99);
    AdamW opt_b(b.params(), {.weight_decay = 1e-4});
    restore_checkpoint(loaded, b, &opt_b);
    CHECK(opt_b.steps() == 2);
    const Tensor y = testing::random_tensor({1, 3, 32, 32}, 3);
    CHECK(a.forward(y, Mode::eval).conv.storage() == b.forward(y, Mode::eval).conv.storage());
    CHECK(a.forward(y, Mode::eval).tran.storage() == b.forward(y, Mode::eval).tran.storage());
    for (std::size_t k = 0; k < opt.first_moments().size(); ++k) {
      CHECK(opt.first_moments()[k].storage() == opt_b.first_moments()[k].storage());
      CHECK(opt.second_moments()[k].storage() == opt_b.second_moments()[k].storage());
    }
  }

  TEST_CASE("damaged checkpoints are rejected") {
    testing::TempDir dir("ckpt");
    ChsNet model(testing::toy_config(), 1);
    const auto path = dir.path / "m.ckpt";
    save_checkpoint(path, capture_checkpoint(model, nullptr, {}));
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& content) {
      std::ofstream(dir.path / "bad.ckpt", std::ios::binary) << content;
      return dir.path / "bad.ckpt";
    };
    CHECK_THROWS_AS(load_checkpoint(write(bytes.substr(0, bytes.size() - 8))), Error);
    CHECK_THROWS_AS(load_checkpoint(write(bytes + "x")), Error);
    CHECK_THROWS_AS(load_checkpoint(write("NOTACKPT" + bytes.substr(8))), Error);
    std::string edited = bytes;
    const auto pos = edited.find("\"channels\":16");
    REQUIRE(pos != std::string::npos);
    edited.replace(pos, 13, "\"channels\":24");
    CHECK_THROWS_AS(load_checkpoint(write(edited)), Error);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), Error);

    ModelConfig other = testing::toy_config();
    other.channels = 32;
    ChsNet wrong(other, 1);
    CHECK_THROWS_AS(restore_checkpoint(load_checkpoint(path), wrong, nullptr), Error);
  }
}
