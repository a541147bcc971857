#include "semsmooth/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "semsmooth/errors.hpp"

namespace semsmooth {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'M', 'C', 'K', 'P', 'T', '1'};

nlohmann::json config_to_json(const ModelConfig& config) {
  return {{"n_layers", config.n_layers},   {"d_model", config.d_model},
          {"n_heads", config.n_heads},     {"d_ff", config.d_ff},
          {"dropout", config.dropout},     {"max_context", config.max_context},
          {"vocab_size", config.vocab_size}, {"seed", config.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig config;
  config.n_layers = j.at("n_layers").get<int>();
  config.d_model = j.at("d_model").get<int>();
  config.n_heads = j.at("n_heads").get<int>();
  config.d_ff = j.at("d_ff").get<int>();
  config.dropout = j.at("dropout").get<double>();
  config.max_context = j.at("max_context").get<int>();
  config.vocab_size = j.at("vocab_size").get<int>();
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParameters& params,
                     const Vocabulary& vocab, std::uint64_t seed, int epoch) {
  if (vocab.size() != params.config.vocab_size) {
    throw ConfigError("vocabulary size does not match the model config");
  }
  // for_each_tensor needs mutable access for the flat views; the data is only
  // read here.
  auto views = tensor_views(const_cast<ModelParameters&>(params));

  nlohmann::json header;
  header["config"] = config_to_json(params.config);
  header["seed"] = seed;
  header["epoch"] = epoch;
  header["vocab"] = std::vector<std::string>(vocab.tokens().begin() + kNumSpecialTokens,
                                             vocab.tokens().end());
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& view : views) {
    tensors.push_back({{"name", view.name}, {"rows", view.rows}, {"cols", view.cols}});
  }
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write checkpoint: " + path);
  }
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& view : views) {
    out.write(reinterpret_cast<const char*>(view.data),
              static_cast<std::streamsize>(view.size() * sizeof(double)));
  }
  if (!out) {
    throw FormatError("short write while saving checkpoint: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open checkpoint: " + path);
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) {
    throw FormatError("truncated checkpoint header: " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("corrupt checkpoint header: " + std::string(e.what()));
  }

  Checkpoint checkpoint;
  const ModelConfig config = config_from_json(header.at("config"));
  checkpoint.params = make_parameters(config);
  checkpoint.seed = header.at("seed").get<std::uint64_t>();
  checkpoint.epoch = header.at("epoch").get<int>();
  checkpoint.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
  if (checkpoint.vocab.size() != config.vocab_size) {
    throw FormatError("checkpoint vocabulary does not match its config");
  }

  auto views = tensor_views(checkpoint.params);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != views.size()) {
    throw FormatError("checkpoint tensor manifest does not match the model layout");
  }
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& entry = tensors.at(i);
    if (entry.at("name").get<std::string>() != views[i].name ||
        entry.at("rows").get<Index>() != views[i].rows ||
        entry.at("cols").get<Index>() != views[i].cols) {
      throw FormatError("checkpoint tensor mismatch at '" + views[i].name + "'");
    }
    in.read(reinterpret_cast<char*>(views[i].data),
            static_cast<std::streamsize>(views[i].size() * sizeof(double)));
  }
  if (!in) {
    throw FormatError("truncated checkpoint tensors: " + path);
  }
  return checkpoint;
}

}  // namespace semsmooth
