/* Copyright (c) 2026 The sherdmatch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/nn/adam.hpp"
#include "sherdmatch/rng.hpp"
#include "sherdmatch/vae/config.hpp"
#include "sherdmatch/vae/model.hpp"

// Byte layout (all integers little-endian):
//   8 bytes   magic "SHRDVAE1"
//   u32       format version
//   u64       header length L
//   L bytes   canonical JSON header: config, epoch, adam settings and step,
//             rng state, and the ordered tensor list (name, shape)
//   per tensor, in header order:
//     u64     element count
//     f64[]   values
// Tensor order: every layer's weights then bias in declaration order,
// followed by all first moments, then all second moments.

namespace sherdmatch::vae {

inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'R', 'D', 'V', 'A', 'E', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

/// Everything needed to resume training bit-exactly.
template <typename T>
struct TrainState {
  explicit TrainState(const VaeConfig& c)
      : model(c), adam(nn::make_adam_state(model.parameters(), hyper_for(c))), rng(c.rng_seed) {}

  static nn::AdamHyper hyper_for(const VaeConfig& c) {
    nn::AdamHyper h;
    h.learning_rate = c.learning_rate;
    return h;
  }

  Vae<T> model;
  nn::AdamState<T> adam;
  int epoch = 0;  // completed epochs
  Rng rng;
};

namespace detail {

template <typename T>
std::vector<const nn::Tensor<T>*> checkpoint_tensors(const TrainState<T>& s,
                                                     std::vector<std::string>* names) {
  std::vector<const nn::Tensor<T>*> out;
  const auto params = s.model.parameters();
  const auto layer_names = Vae<T>::parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(&params[i]->weights);
    out.push_back(&params[i]->bias);
    if (names) {
      names->push_back(layer_names[i] + ".weights");
      names->push_back(layer_names[i] + ".bias");
    }
  }
  for (const char* which : {"adam.m.", "adam.v."}) {
    const auto& moments = which[5] == 'm' ? s.adam.first_moment : s.adam.second_moment;
    for (std::size_t i = 0; i < moments.size(); ++i) {
      out.push_back(&moments[i]);
      if (names) names->push_back(which + (*names)[i]);
    }
  }
  return out;
}

template <typename U>
void put(std::string& out, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.append(b, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw IntegrityError("checkpoint truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const TrainState<T>& s) {
  std::vector<std::string> names;
  const auto tensors = detail::checkpoint_tensors(s, &names);
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    list.push_back({{"name", names[i]}, {"shape", tensors[i]->shape()}});
  }
  const nlohmann::json header{
      {"config", to_json(s.model.config())},
      {"epoch", s.epoch},
      {"adam",
       {{"step", s.adam.step},
        {"learning_rate", s.adam.hyper.learning_rate},
        {"beta1", s.adam.hyper.beta1},
        {"beta2", s.adam.hyper.beta2},
        {"epsilon", s.adam.hyper.epsilon}}},
      {"rng_state", s.rng.state()},
      {"tensors", list}};
  const std::string text = canonical_dump(header);

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto* t : tensors) {
    detail::put<std::uint64_t>(out, t->size());
    for (std::size_t i = 0; i < t->size(); ++i) detail::put<double>(out, static_cast<double>((*t)[i]));
  }
  return out;
}

struct CheckpointHeader {
  VaeConfig config;
  nlohmann::json json;
  std::size_t payload_offset = 0;
};

inline CheckpointHeader parse_checkpoint_header(const std::string& bytes) {
  if (bytes.size() < sizeof kCheckpointMagic ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic)");
  }
  std::size_t pos = sizeof kCheckpointMagic;
  const auto version = detail::get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = detail::get<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) throw IntegrityError("checkpoint truncated");
  CheckpointHeader h;
  try {
    h.json = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header: ") + e.what());
  }
  h.config = config_from_json(h.json.at("config"));
  h.payload_offset = pos + len;
  return h;
}

template <typename T>
TrainState<T> deserialize_checkpoint(const std::string& bytes) {
  const CheckpointHeader h = parse_checkpoint_header(bytes);
  TrainState<T> s(h.config);
  try {
    s.epoch = h.json.at("epoch").get<int>();
    const auto& a = h.json.at("adam");
    s.adam.step = a.at("step").get<std::uint64_t>();
    s.adam.hyper.learning_rate = a.at("learning_rate").get<double>();
    s.adam.hyper.beta1 = a.at("beta1").get<double>();
    s.adam.hyper.beta2 = a.at("beta2").get<double>();
    s.adam.hyper.epsilon = a.at("epsilon").get<double>();
    s.rng.set_state(h.json.at("rng_state").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header: ") + e.what());
  }
  std::vector<std::string> names;
  auto tensors = detail::checkpoint_tensors(s, &names);
  const auto& listed = h.json.at("tensors");
  if (listed.size() != tensors.size()) throw IntegrityError("checkpoint tensor list does not match the model");
  std::size_t pos = h.payload_offset;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto* t = const_cast<nn::Tensor<T>*>(tensors[i]);
    if (listed[i].at("name").get<std::string>() != names[i] ||
        listed[i].at("shape").get<nn::Shape>() != t->shape()) {
      throw IntegrityError("checkpoint tensor '" + names[i] + "' does not match the model");
    }
    const auto count = detail::get<std::uint64_t>(bytes, pos);
    if (count != t->size()) throw IntegrityError("checkpoint tensor '" + names[i] + "' has the wrong size");
    for (std::size_t j = 0; j < count; ++j) (*t)[j] = static_cast<T>(detail::get<double>(bytes, pos));
  }
  if (pos != bytes.size()) throw IntegrityError("trailing bytes after checkpoint payload");
  return s;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const TrainState<T>& s) {
  write_file(path, serialize_checkpoint(s));
}

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint<T>(read_file(path));
}

inline VaeConfig read_checkpoint_config(const std::filesystem::path& path) {
  return parse_checkpoint_header(read_file(path)).config;
}

}  // namespace sherdmatch::vae
