#include "chsnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "chsnet/error.hpp"

namespace chsnet {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");

namespace {

constexpr char kMagic[8] = {'C', 'H', 'S', 'N', 'E', 'T', 'C', 'K'};

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

json state_to_json(const TrainingState& s) {
  return json{{"epoch", s.epoch},
              {"total_epochs", s.total_epochs},
              {"delta", s.delta},
              {"alpha", s.alpha},
              {"delta_max", s.delta_max},
              {"alpha_max", s.alpha_max},
              {"best_val_mae", s.best_val_mae},
              {"optimizer_steps", s.optimizer_steps},
              {"train_config", s.train_config}};
}

TrainingState state_from_json(const json& doc) {
  TrainingState s;
  s.epoch = doc.at("epoch").get<int>();
  s.total_epochs = doc.at("total_epochs").get<int>();
  s.delta = doc.at("delta").get<double>();
  s.alpha = doc.at("alpha").get<double>();
  s.delta_max = doc.at("delta_max").get<double>();
  s.alpha_max = doc.at("alpha_max").get<double>();
  s.best_val_mae = doc.at("best_val_mae").get<double>();
  s.optimizer_steps = doc.at("optimizer_steps").get<std::int64_t>();
  s.train_config = doc.value("train_config", json::object());
  return s;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  json header;
  header["format_version"] = Checkpoint::kFormatVersion;
  header["model_config"] = checkpoint.model_config.to_json();
  header["config_hash"] = hex(checkpoint.model_config.hash());
  header["state"] = state_to_json(checkpoint.state);
  json index = json::array();
  for (const auto& [name, tensor] : checkpoint.tensors)
    index.push_back({{"name", name}, {"shape", tensor.shape()}});
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  // Write to a sibling file first so an interrupted save never leaves a
  // truncated checkpoint behind.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot write checkpoint " + tmp.string());
    const std::uint32_t version = Checkpoint::kFormatVersion;
    const std::uint64_t length = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, tensor] : checkpoint.tensors)
      out.write(reinterpret_cast<const char*>(tensor.data()),
                static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    require(out.good(), ErrorKind::io, "failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::format,
          path.string() + " is not a chsnet checkpoint");
  require(version == Checkpoint::kFormatVersion, ErrorKind::format,
          path.string() + ": unsupported checkpoint version " + std::to_string(version));
  require(length < (1u << 30), ErrorKind::format, path.string() + ": implausible header size");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  require(in.good(), ErrorKind::format, path.string() + ": truncated header");

  Checkpoint checkpoint;
  try {
    const json header = json::parse(text);
    checkpoint.model_config = ModelConfig::from_json(header.at("model_config"));
    require(header.at("config_hash").get<std::string>() == hex(checkpoint.model_config.hash()),
            ErrorKind::format, path.string() + ": model config hash mismatch");
    checkpoint.state = state_from_json(header.at("state"));
    for (const auto& entry : header.at("tensors")) {
      Tensor t(entry.at("shape").get<std::vector<int>>());
      in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
      require(in.good(), ErrorKind::format,
              path.string() + ": truncated tensor " + entry.at("name").get<std::string>());
      checkpoint.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, path.string() + ": bad checkpoint header (" + e.what() + ")");
  }
  in.peek();
  require(in.eof(), ErrorKind::format, path.string() + ": trailing bytes after payload");
  return checkpoint;
}

Checkpoint capture_checkpoint(ChsNet& model, AdamW* optimizer, const TrainingState& state) {
  Checkpoint checkpoint;
  checkpoint.model_config = model.config();
  checkpoint.state = state;
  const auto params = model.params();
  for (Param* p : params) checkpoint.tensors.emplace(p->name, p->value);
  for (const Buffer& b : model.buffers()) checkpoint.tensors.emplace(b.name, *b.tensor);
  if (optimizer != nullptr) {
    checkpoint.state.optimizer_steps = optimizer->steps();
    for (std::size_t k = 0; k < params.size(); ++k) {
      checkpoint.tensors.emplace("adam.m/" + params[k]->name, optimizer->first_moments()[k]);
      checkpoint.tensors.emplace("adam.v/" + params[k]->name, optimizer->second_moments()[k]);
    }
  }
  return checkpoint;
}

void restore_checkpoint(const Checkpoint& checkpoint, ChsNet& model, AdamW* optimizer) {
  require(checkpoint.model_config == model.config(), ErrorKind::config,
          "checkpoint model config does not match the model being restored");
  auto fetch = [&](const std::string& name, Tensor& dst) {
    const auto it = checkpoint.tensors.find(name);
    require(it != checkpoint.tensors.end(), ErrorKind::format, "checkpoint lacks tensor " + name);
    require(it->second.same_shape(dst), ErrorKind::format,
            "checkpoint tensor " + name + " has shape " + shape_string(it->second.shape()) +
                ", expected " + shape_string(dst.shape()));
    dst = it->second;
  };
  const auto params = model.params();
  for (Param* p : params) fetch(p->name, p->value);
  for (const Buffer& b : model.buffers()) fetch(b.name, *b.tensor);
  if (optimizer != nullptr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      fetch("adam.m/" + params[k]->name, optimizer->first_moments()[k]);
      fetch("adam.v/" + params[k]->name, optimizer->second_moments()[k]);
    }
    optimizer->set_steps(checkpoint.state.optimizer_steps);
  }
}

}  // namespace chsnet
