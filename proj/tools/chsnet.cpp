// chsnet: dataset generation, training, evaluation, prediction, plots and
// ablation sweeps from one config surface.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "chsnet/ablate.hpp"
#include "chsnet/error.hpp"
#include "chsnet/plot.hpp"
#include "chsnet/settings.hpp"
#include "chsnet/synth_data.hpp"
#include "chsnet/train_eval.hpp"

using namespace chsnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key=value config file");
  app->add_option("--set", c.overrides, "override, key=value (repeatable)");
  app->add_option("--seed", c.seed, "sets scene, noise, training and ablation seeds");
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--deterministic", c.deterministic, "fixed thread schedule");
}

Settings resolve(const Common& c) {
  Settings s;
  if (!c.config.empty()) s.apply_file(c.config);
  if (c.seed) s.set("seed", std::to_string(*c.seed));
  for (const auto& o : c.overrides) s.apply_override(o);
  if (c.deterministic) s.train.deterministic = true;
  return s;
}

fs::path out_dir(const Common& c, const fs::path& fallback) {
  return c.out.empty() ? fallback : fs::path(c.out);
}

void write_json(const fs::path& path, const json& doc) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json report_json(const EvalReport& r) {
  json counts = json::array();
  for (const auto& [p, t] : r.counts) counts.push_back({p, t});
  return json{{"head", to_string(r.head)}, {"mae", r.mae},         {"mse", r.mse},
              {"easy_mae", r.easy_mae},    {"easy_mse", r.easy_mse}, {"hard_mae", r.hard_mae},
              {"hard_mse", r.hard_mse},    {"n_easy", r.n_easy},   {"n_hard", r.n_hard},
              {"counts", counts}};
}

void check_input_size(const cv::Mat& image, const ModelConfig& cfg, const std::string& what) {
  require(image.rows % cfg.encoder_stride == 0 && image.cols % cfg.encoder_stride == 0,
          ErrorKind::config,
          what + " is " + std::to_string(image.cols) + "x" + std::to_string(image.rows) +
              ", not a multiple of the encoder stride " + std::to_string(cfg.encoder_stride));
}

DensityMap average_map(const DensityMap& a, const DensityMap& b) {
  DensityMap avg = a;
  for (std::size_t i = 0; i < avg.size(); ++i) avg.cells[i] = 0.5 * (a.cells[i] + b.cells[i]);
  return avg;
}

int cmd_synth_gen(const Common& c) {
  const Settings s = resolve(c);
  const fs::path dir = out_dir(c, s.dataset_dir);
  const auto summary = build_dataset(s.scene, s.n_train, s.n_val, s.noise, dir, s.overwrite);
  std::cout << "wrote " << summary.n_train << " train / " << summary.n_val << " val images to "
            << dir.string() << " (" << summary.clean_points << " clean train points, "
            << summary.train_points << " after corruption)\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& resume, int stop_after, bool quiet) {
  const Settings s = resolve(c);
  const fs::path dir = out_dir(c, "run");
  const Dataset data = load_dataset(s.dataset_dir);
  TrainOptions options;
  if (!resume.empty()) options.resume_from = fs::path(resume);
  options.stop_after_epoch = stop_after;
  options.verbose = !quiet;
  const TrainResult result = train(s.model, s.train, data, dir, options);
  std::cout << "last checkpoint " << result.last_checkpoint.string() << ", best val MAE "
            << result.best_val_mae << '\n';
  return 0;
}

int cmd_eval(const Common& c) {
  const Settings s = resolve(c);
  require(!s.checkpoint.empty(), ErrorKind::config, "eval needs eval.checkpoint");
  const EvalReport r = evaluate(s.checkpoint, s.dataset_dir, s.eval_head);
  const json doc = report_json(r);
  if (!c.out.empty()) write_json(fs::path(c.out) / ("eval_" + to_string(r.head) + ".json"), doc);
  std::printf("head %s  MAE %.3f  MSE %.3f  easy %.3f/%.3f  hard %.3f/%.3f\n",
              to_string(r.head).c_str(), r.mae, r.mse, r.easy_mae, r.easy_mse, r.hard_mae,
              r.hard_mse);
  return 0;
}

int cmd_predict(const Common& c) {
  const Settings s = resolve(c);
  require(!s.checkpoint.empty(), ErrorKind::config, "predict needs eval.checkpoint");
  require(!s.image.empty(), ErrorKind::config, "predict needs predict.image");
  ChsNet model = load_model(s.checkpoint);
  const cv::Mat image = read_image(s.image);
  check_input_size(image, model.config(), s.image.string());
  const Prediction pred = model.forward(images_to_tensor(std::vector<cv::Mat>{image}), Mode::eval);
  const int stride = model.config().output_stride();
  const DensityMap conv = to_density_maps(pred.conv, stride).front();
  const DensityMap tran = to_density_maps(pred.tran, stride).front();
  const DensityMap avg = average_map(conv, tran);
  const fs::path dir = out_dir(c, "predict");
  fs::create_directories(dir);
  write_density_map(dir / "conv.dmap", conv);
  write_density_map(dir / "tran.dmap", tran);
  write_density_map(dir / "average.dmap", avg);
  const json counts{{"image", s.image.string()},
                    {"conv", total_count(conv)},
                    {"tran", total_count(tran)},
                    {"average", total_count(avg)}};
  write_json(dir / "counts.json", counts);
  std::cout << counts.dump() << '\n';
  return 0;
}

int cmd_plot(const Common& c) {
  const Settings s = resolve(c);
  require(!s.checkpoint.empty(), ErrorKind::config, "plot needs eval.checkpoint");
  ChsNet model = load_model(s.checkpoint);
  const auto val = load_split(s.dataset_dir, DatasetLayout::kVal);
  require(!val.empty(), ErrorKind::invalid_argument, "validation split is empty");
  const int stride = model.config().output_stride();
  const fs::path dir = out_dir(c, "plots");
  fs::create_directories(dir);
  fs::remove(dir / "captions.csv");
  const int n = std::min<int>(s.plot_count, static_cast<int>(val.size()));
  for (int i = 0; i < n; ++i) {
    const Sample& sample = val[static_cast<std::size_t>(i)];
    check_input_size(sample.pixels, model.config(), sample.image);
    const Prediction pred =
        model.forward(images_to_tensor(std::vector<cv::Mat>{sample.pixels}), Mode::eval);
    const DensityMap conv = to_density_maps(pred.conv, stride).front();
    const DensityMap tran = to_density_maps(pred.tran, stride).front();
    const DensityMap gt = generate_density_map(sample.annotations, s.train.kernel, stride);
    const auto panels = make_panels(sample.pixels, static_cast<double>(sample.annotations.count()),
                                    {{"GT", gt}, {"conv", conv}, {"tran", tran}, {"avg", average_map(conv, tran)}});
    const auto path = write_panel_set(dir, fs::path(sample.image).stem().string(), panels);
    std::cout << path.string() << '\n';
  }
  return 0;
}

int cmd_ablate(const Common& c, bool quiet) {
  const Settings s = resolve(c);
  const fs::path dir = out_dir(c, "ablation");
  const AblationTable table = run_ablation(s, dir, !quiet);
  write_ablation(table, dir);
  std::cout << format_ablation_text(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chsnet: crowd counting with cross-head supervision"};
  app.require_subcommand(1);
  Common common;
  std::string resume;
  int stop_after = 0;
  bool quiet = false;

  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic crowd dataset");
  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  auto* predict = app.add_subcommand("predict", "density maps and counts for one image");
  auto* plot = app.add_subcommand("plot", "image / GT / prediction panels for validation images");
  auto* ablate = app.add_subcommand("ablate", "delta_max sweep over several seeds");
  for (auto* sub : {synth, train_cmd, eval_cmd, predict, plot, ablate}) add_common(sub, common);
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");
  train_cmd->add_option("--stop-after", stop_after, "stop after this epoch");
  for (auto* sub : {train_cmd, ablate}) sub->add_flag("--quiet", quiet, "no per-epoch progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[usage]: " << e.what() << '\n';
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth_gen(common);
    if (train_cmd->parsed()) return cmd_train(common, resume, stop_after, quiet);
    if (eval_cmd->parsed()) return cmd_eval(common);
    if (predict->parsed()) return cmd_predict(common);
    if (plot->parsed()) return cmd_plot(common);
    if (ablate->parsed()) return cmd_ablate(common, quiet);
  } catch (const Error& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error[" << to_string(e.kind()) << "]: " << msg << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 9;
  }
  return 1;
}
