#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reqx/error.hpp"
#include "reqx/model.hpp"
#include "reqx/training.hpp"
#include "reqx/vocabulary.hpp"

namespace reqx {

inline constexpr const char* kCheckpointFormat = "reqx-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// A trained model plus everything inference needs.
struct Checkpoint {
  ModelParams params;
  Vocabulary vocab;
  std::size_t max_length = 0;
  nlohmann::json config;  // effective training config, for provenance

  bool operator==(const Checkpoint& o) const {
    return params == o.params && vocab == o.vocab && max_length == o.max_length;
  }
};

// Doubles are written in shortest round-trip form, so save/load is bit-exact.
inline nlohmann::json to_json(const Checkpoint& ck) {
  const auto d = ck.params.dims();
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& [name, t] : ck.params.blocks()) {
    blocks[name] = {{"rows", t->rows()},
                    {"cols", t->cols()},
                    {"data", std::vector<double>(t->flat().begin(), t->flat().end())}};
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"dims",
           {{"embedding_dim", d.embedding_dim},
            {"hidden_enc", d.hidden_enc},
            {"attention_dim", d.attention_dim},
            {"hidden_dec", d.hidden_dec},
            {"tag_dim", d.tag_dim}}},
          {"embedding_trainable", ck.params.embedding.trainable},
          {"vocabulary", ck.vocab.tokens()},
          {"max_length", ck.max_length},
          {"config", ck.config},
          {"parameters", std::move(blocks)}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j, const std::string& source) {
  try {
    if (j.at("format") != kCheckpointFormat) throw SchemaError(source + ": not a checkpoint file");
    if (j.at("version") != kCheckpointVersion) {
      throw SchemaError(source + ": unsupported checkpoint version " + j.at("version").dump());
    }
    Checkpoint ck;
    const auto& jd = j.at("dims");
    ModelDims d{jd.at("embedding_dim").get<std::size_t>(), jd.at("hidden_enc").get<std::size_t>(),
                jd.at("attention_dim").get<std::size_t>(), jd.at("hidden_dec").get<std::size_t>(),
                jd.at("tag_dim").get<std::size_t>()};
    ck.vocab = Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
    ck.max_length = j.at("max_length").get<std::size_t>();
    ck.config = j.value("config", nlohmann::json::object());
    ck.params = ModelParams::zeros(d, ck.vocab.size());
    ck.params.embedding.trainable = j.at("embedding_trainable").get<bool>();
    const auto& jp = j.at("parameters");
    for (auto& [name, t] : ck.params.blocks()) {
      if (!jp.contains(name)) throw SchemaError(source + ": missing parameter block " + name);
      const auto& b = jp.at(name);
      const auto rows = b.at("rows").get<std::size_t>();
      const auto cols = b.at("cols").get<std::size_t>();
      if (rows != t->rows() || cols != t->cols()) {
        throw SchemaError(source + ": block " + name + " is " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " but dims and vocabulary imply " + t->shape());
      }
      auto data = b.at("data").get<std::vector<double>>();
      if (data.size() != rows * cols) {
        throw SchemaError(source + ": block " + name + " has " + std::to_string(data.size()) +
                          " values, expected " + std::to_string(rows * cols));
      }
      std::copy(data.begin(), data.end(), t->flat().begin());
    }
    if (jp.size() != ck.params.blocks().size()) {
      throw SchemaError(source + ": unexpected extra parameter blocks");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << to_json(ck).dump() << '\n';
  if (!out) throw Error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return checkpoint_from_json(j, path);
}

inline Checkpoint make_checkpoint(const TrainResult& r, const TrainConfig& cfg) {
  return {r.params, r.vocab, r.max_length, cfg.to_json()};
}

}  // namespace reqx
