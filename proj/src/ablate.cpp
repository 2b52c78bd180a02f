#include "chsnet/ablate.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "chsnet/error.hpp"

namespace chsnet {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string run_name(double delta_max, std::uint64_t seed) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "dmax_%g_seed_%llu", delta_max,
                static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

std::uint64_t ablation_seed(std::uint64_t master_seed, int repetition) {
  return master_seed + static_cast<std::uint64_t>(repetition);
}

AblationTable summarize(std::vector<AblationRow> rows) {
  AblationTable table;
  std::vector<std::pair<double, EvalHead>> keys;
  std::map<std::pair<double, int>, std::array<double, 3>> sums;  // mae, mse, n
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.delta_max, static_cast<int>(r.head));
    auto [it, fresh] = sums.try_emplace(key, std::array<double, 3>{0, 0, 0});
    if (fresh) keys.emplace_back(r.delta_max, r.head);
    it->second[0] += r.mae;
    it->second[1] += r.mse;
    it->second[2] += 1.0;
  }
  for (const auto& [d, head] : keys) {
    const auto& s = sums.at({d, static_cast<int>(head)});
    table.means.push_back({d, head, s[0] / s[2], s[1] / s[2]});
  }
  table.rows = std::move(rows);
  return table;
}

AblationTable run_ablation(const Settings& settings, const std::filesystem::path& out_dir,
                           bool verbose) {
  const auto& sweep = settings.ablation.delta_max;
  require(!sweep.empty(), ErrorKind::config, "ablation sweep is empty");
  for (double d : sweep)
    require(d >= 0.0 && d <= 1.0, ErrorKind::invalid_argument,
            "sweep value " + fixed(d, 6) + " lies outside [0, 1]");
  require(settings.ablation.seeds >= 1, ErrorKind::config, "ablate.seeds must be >= 1");
  settings.model.validate();

  const Dataset data = load_dataset(settings.dataset_dir);
  require(!data.val.empty(), ErrorKind::invalid_argument, "ablation needs a validation split");

  std::vector<AblationRow> rows;
  for (double d : sweep) {
    for (int s = 0; s < settings.ablation.seeds; ++s) {
      TrainConfig cfg = settings.train;
      cfg.delta_max = d;
      cfg.seed = ablation_seed(settings.ablation.master_seed, s);
      const auto run_dir = out_dir / "runs" / run_name(d, cfg.seed);
      if (verbose) std::cerr << "[ablate] " << run_dir.filename().string() << '\n';
      TrainOptions options;
      options.verbose = verbose;
      const TrainResult result = train(settings.model, cfg, data, run_dir, options);
      ChsNet model = load_model(result.last_checkpoint);
      const auto reports = evaluate_model(model, data.val);
      for (const auto& r : reports) rows.push_back({d, cfg.seed, r.head, r.mae, r.mse});
    }
  }
  return summarize(std::move(rows));
}

std::string format_ablation_text(const AblationTable& table) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-8s %-8s %10s %10s\n", "delta_max", "seed", "head", "MAE", "MSE");
  os << line;
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof line, "%-10g %-8llu %-8s %10.3f %10.3f\n", r.delta_max,
                  static_cast<unsigned long long>(r.seed), to_string(r.head).c_str(), r.mae, r.mse);
    os << line;
  }
  os << '\n';
  std::snprintf(line, sizeof line, "%-10s %-8s %-8s %10s %10s\n", "delta_max", "", "head", "mean MAE", "mean MSE");
  os << line;
  for (const auto& m : table.means) {
    std::snprintf(line, sizeof line, "%-10g %-8s %-8s %10.3f %10.3f\n", m.delta_max, "",
                  to_string(m.head).c_str(), m.mean_mae, m.mean_mse);
    os << line;
  }
  return os.str();
}

void write_ablation(const AblationTable& table, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "ablation.csv");
    require(out.good(), ErrorKind::io, "cannot write ablation.csv");
    out << "delta_max,seed,head,mae,mse\n";
    for (const auto& r : table.rows)
      out << fixed(r.delta_max, 6) << ',' << r.seed << ',' << to_string(r.head) << ','
          << fixed(r.mae, 9) << ',' << fixed(r.mse, 9) << '\n';
  }
  {
    std::ofstream out(out_dir / "ablation_means.csv");
    require(out.good(), ErrorKind::io, "cannot write ablation_means.csv");
    out << "delta_max,head,mean_mae,mean_mse\n";
    for (const auto& m : table.means)
      out << fixed(m.delta_max, 6) << ',' << to_string(m.head) << ',' << fixed(m.mean_mae, 9)
          << ',' << fixed(m.mean_mse, 9) << '\n';
  }
  std::ofstream txt(out_dir / "ablation.txt");
  require(txt.good(), ErrorKind::io, "cannot write ablation.txt");
  txt << format_ablation_text(table);
}

}  // namespace chsnet
