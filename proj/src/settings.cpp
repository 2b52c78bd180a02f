#include "chsnet/settings.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "chsnet/error.hpp"

namespace chsnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::config, key + ": expected a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), ErrorKind::config,
          key + ": expected an integer, got '" + v + "'");
  return out;
}

int to_i32(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  require(x >= INT32_MIN && x <= INT32_MAX, ErrorKind::config, key + ": out of range");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), ErrorKind::config,
          key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::config, key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

template <class F>
auto wrap(const std::string& key, F&& f) {
  // Parsers from other modules throw invalid_argument; report as config.
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(ErrorKind::config, key + ": " + e.what());
  }
}

struct Entry {
  std::function<void(Settings&, const std::string&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> table = [] {
    std::map<std::string, Entry> t;
#define REAL(k, field) \
  t[k] = {[](Settings& s, const std::string& key, const std::string& v) { s.field = to_real(key, v); }, \
          [](const Settings& s) { return fmt(s.field); }}
#define INT(k, field) \
  t[k] = {[](Settings& s, const std::string& key, const std::string& v) { s.field = to_i32(key, v); }, \
          [](const Settings& s) { return std::to_string(s.field); }}
#define U64(k, field) \
  t[k] = {[](Settings& s, const std::string& key, const std::string& v) { s.field = to_u64(key, v); }, \
          [](const Settings& s) { return std::to_string(s.field); }}
#define BOOL(k, field) \
  t[k] = {[](Settings& s, const std::string& key, const std::string& v) { s.field = to_bool(key, v); }, \
          [](const Settings& s) { return std::string(s.field ? "true" : "false"); }}
#define PATH(k, field) \
  t[k] = {[](Settings& s, const std::string&, const std::string& v) { s.field = v; }, \
          [](const Settings& s) { return s.field.string(); }}
#define ENUM(k, field, parse) \
  t[k] = {[](Settings& s, const std::string& key, const std::string& v) { \
            s.field = wrap(key, [&] { return parse(v); }); }, \
          [](const Settings& s) { return to_string(s.field); }}

    INT("scene.image_size", scene.image_size);
    INT("scene.count_min", scene.count_min);
    INT("scene.count_max", scene.count_max);
    REAL("scene.radius_min", scene.radius_min);
    REAL("scene.radius_max", scene.radius_max);
    ENUM("scene.background", scene.background, parse_background);
    U64("scene.seed", scene.seed);

    REAL("noise.missing_rate", noise.missing_rate);
    REAL("noise.shift_sigma", noise.shift_sigma);
    U64("noise.seed", noise.seed);

    INT("dataset.n_train", n_train);
    INT("dataset.n_val", n_val);
    BOOL("dataset.overwrite", overwrite);
    PATH("dataset.dir", dataset_dir);

    INT("density.kernel_size", train.kernel.size);
    REAL("density.sigma", train.kernel.sigma);

    ENUM("model.encoder", model.encoder, parse_encoder);
    INT("model.channels", model.channels);
    INT("model.encoder_stride", model.encoder_stride);
    INT("model.regression_upsample", model.regression_upsample);
    INT("model.input_size", model.input_size);
    INT("model.conv_head.n_blocks", model.conv_head.n_blocks);
    INT("model.conv_head.dilation", model.conv_head.dilation);
    t["model.conv_head.channels"] = {
        [](Settings& s, const std::string& key, const std::string& v) {
          s.model.conv_head.channel_schedule.clear();
          for (const auto& item : split_list(v)) s.model.conv_head.channel_schedule.push_back(to_i32(key, item));
        },
        [](const Settings& s) {
          std::string out;
          for (int c : s.model.conv_head.channel_schedule) out += (out.empty() ? "" : ",") + std::to_string(c);
          return out;
        }};
    INT("model.tran_head.n_layers", model.tran_head.n_layers);
    INT("model.tran_head.n_heads", model.tran_head.n_attention_heads);
    INT("model.tran_head.ffn_multiplier", model.tran_head.ffn_multiplier);
    ENUM("model.tran_head.positional_encoding", model.tran_head.positional_encoding,
         parse_positional_encoding);

    REAL("train.learning_rate", train.learning_rate);
    REAL("train.weight_decay", train.weight_decay);
    INT("train.max_epochs", train.max_epochs);
    ENUM("train.lr_schedule", train.lr_schedule, parse_lr_schedule);
    INT("train.crop_size", train.crop_size);
    REAL("train.scale_min", train.scale_min);
    REAL("train.scale_max", train.scale_max);
    REAL("train.hflip_prob", train.hflip_prob);
    INT("train.batch_size", train.batch_size);
    U64("train.seed", train.seed);
    REAL("train.delta_max", train.delta_max);
    REAL("train.alpha_max", train.alpha_max);
    ENUM("train.reduction", train.reduction, parse_reduction);
    ENUM("train.loss", train.loss, parse_loss_mode);
    BOOL("train.deterministic", train.deterministic);

    ENUM("eval.head", eval_head, parse_eval_head);
    PATH("eval.checkpoint", checkpoint);
    PATH("predict.image", image);

    t["ablate.delta_max"] = {
        [](Settings& s, const std::string& key, const std::string& v) {
          s.ablation.delta_max.clear();
          for (const auto& item : split_list(v)) s.ablation.delta_max.push_back(to_real(key, item));
          require(!s.ablation.delta_max.empty(), ErrorKind::config, key + ": empty sweep");
        },
        [](const Settings& s) {
          std::string out;
          for (double d : s.ablation.delta_max) out += (out.empty() ? "" : ",") + fmt(d);
          return out;
        }};
    INT("plot.count", plot_count);
    INT("ablate.seeds", ablation.seeds);
    U64("ablate.master_seed", ablation.master_seed);

    t["seed"] = {[](Settings& s, const std::string& key, const std::string& v) {
                   const std::uint64_t seed = to_u64(key, v);
                   s.scene.seed = seed;
                   s.noise.seed = seed;
                   s.train.seed = seed;
                   s.ablation.master_seed = seed;
                 },
                 [](const Settings& s) { return std::to_string(s.train.seed); }};
#undef REAL
#undef INT
#undef U64
#undef BOOL
#undef PATH
#undef ENUM
    return t;
  }();
  return table;
}

}  // namespace

void Settings::set(const std::string& key, const std::string& value) {
  const auto& table = registry();
  const auto it = table.find(key);
  require(it != table.end(), ErrorKind::config, "unknown key '" + key + "'");
  it->second.set(*this, key, value);
}

void Settings::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrorKind::config,
          "override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Settings::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open config " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(line);
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::map<std::string, std::string> Settings::dump() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, entry] : registry())
    if (key != "seed") out[key] = entry.get(*this);
  return out;
}

std::vector<std::string> Settings::keys() {
  std::vector<std::string> out;
  for (const auto& kv : registry()) out.push_back(kv.first);
  return out;
}

}  // namespace chsnet
