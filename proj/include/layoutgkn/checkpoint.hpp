#pragma once

// JSON checkpoints: a header describing the architecture plus name -> {shape, row-major data}.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "errors.hpp"
#include "kernel.hpp"
#include "model.hpp"

namespace lgkn {

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Provenance of the training run, checked by eval against its test fold.
struct TrainingProvenance {
  int fold = -1;              // -1: not trained on a recorded fold
  std::string split_hash;     // hash of the sorted training graph ids
  std::optional<double> mu;   // kernel bandwidth used in training (unset: 1/d)
};

struct Checkpoint {
  Model model;
  TrainingProvenance provenance;
  std::string hash;  // FNV-1a of the serialized file
};

namespace detail {
inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json j;
  j["shape"] = {m.rows(), m.cols()};
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(data.size()))
    throw MalformedInput(0, "checkpoint tensor '" + name + "' has inconsistent shape/data");
  Matrix m(shape[0], shape[1]);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}
}  // namespace detail

inline std::string serialize_checkpoint(const Model& m, const TrainingProvenance& prov = {}) {
  const ModelConfig& c = m.config();
  nlohmann::ordered_json j;
  j["format"] = "layoutgkn-checkpoint/1";
  j["header"] = {{"mode", to_string(c.mode)}, {"d", c.d},
                 {"L", c.layers},             {"d_g", c.graph_dim()},
                 {"delta", c.delta},          {"layer_norm", c.layer_norm},
                 {"batch_norm", c.batch_norm}, {"seed", c.seed},
                 {"fold", prov.fold},         {"split_hash", prov.split_hash}};
  if (prov.mu) j["header"]["mu"] = *prov.mu;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  for (const auto& p : m.parameters()) tensors[p.name] = detail::matrix_json(p.tensor.value());
  j["tensors"] = tensors;
  nlohmann::ordered_json bn = nlohmann::ordered_json::array();
  for (const auto& s : m.bn_states)
    bn.push_back({{"mean", detail::matrix_json(s.running_mean)}, {"var", detail::matrix_json(s.running_var)}});
  j["batchnorm"] = bn;
  return j.dump() + "\n";
}

inline Checkpoint parse_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedInput(0, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "layoutgkn-checkpoint/1") throw MalformedInput(0, "unrecognized checkpoint format");
    const auto& h = j.at("header");
    ModelConfig c;
    c.mode = parse_mode(h.at("mode").get<std::string>());
    c.d = h.at("d").get<int>();
    c.layers = h.at("L").get<int>();
    c.d_g = h.at("d_g").get<int>();
    c.delta = h.at("delta").get<int>();
    c.layer_norm = h.at("layer_norm").get<bool>();
    c.batch_norm = h.at("batch_norm").get<bool>();
    c.seed = h.at("seed").get<std::uint64_t>();
    Checkpoint ck{Model(c), {}, hex64(fnv1a(text))};
    ck.provenance.fold = h.value("fold", -1);
    ck.provenance.split_hash = h.value("split_hash", "");
    if (h.contains("mu")) ck.provenance.mu = h.at("mu").get<double>();
    const auto& tensors = j.at("tensors");
    auto params = ck.model.parameters();
    if (tensors.size() != params.size())
      throw MalformedInput(0, "checkpoint has " + std::to_string(tensors.size()) + " tensors, architecture needs " +
                                  std::to_string(params.size()));
    for (auto& p : params) {
      if (!tensors.contains(p.name)) throw MalformedInput(0, "checkpoint is missing tensor '" + p.name + "'");
      Matrix v = detail::matrix_from_json(tensors.at(p.name), p.name);
      if (v.rows() != p.tensor.rows() || v.cols() != p.tensor.cols())
        throw MalformedInput(0, "checkpoint tensor '" + p.name + "' has wrong shape");
      p.tensor.mutable_value() = std::move(v);
    }
    const auto& bn = j.at("batchnorm");
    if (bn.size() != ck.model.bn_states.size()) throw MalformedInput(0, "checkpoint batchnorm layer count mismatch");
    for (std::size_t l = 0; l < bn.size(); ++l) {
      ck.model.bn_states[l].running_mean = detail::matrix_from_json(bn[l].at("mean"), "bn.mean");
      ck.model.bn_states[l].running_var = detail::matrix_from_json(bn[l].at("var"), "bn.var");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(0, std::string("checkpoint field error: ") + e.what());
  }
}

inline std::string checkpoint_hash(const Model& m, const TrainingProvenance& prov = {}) {
  return hex64(fnv1a(serialize_checkpoint(m, prov)));
}

inline void save_checkpoint(const std::string& path, const Model& m, const TrainingProvenance& prov = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write checkpoint '" + path + "'");
  out << serialize_checkpoint(m, prov);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

inline KernelConfig kernel_config(const Checkpoint& ck) {
  KernelConfig k;
  k.mu = ck.provenance.mu;
  k.delta = ck.model.config().delta;
  return k;
}

}  // namespace lgkn
