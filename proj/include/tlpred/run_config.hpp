// Copyright 2026 The tlpred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef TLPRED__RUN_CONFIG_HPP_
#define TLPRED__RUN_CONFIG_HPP_

#include "tlpred/predictor.hpp"
#include "tlpred/synth_sim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace tlpred
{

/// Raised for invalid user configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig
{
  std::string command;
  std::uint64_t seed = 1;

  // generate
  ScenarioConfig scenario;
  int frames = 600;

  // train / eval
  HyperParams hyper;
  std::string data_dir;
  std::string checkpoint_dir;
  std::string split = "test";
  bool dump_masks = false;

  // gradcheck
  double tolerance = 1e-4;

  /// Fields that influence the command's outputs, keys sorted.
  nlohmann::json canonical() const;
  static RunConfig from_json(const nlohmann::json & j);
  /// FNV-1a 64 of the compact canonical JSON, as 16 hex digits.
  std::string hash() const;
};

std::uint64_t fnv1a64(const std::string & bytes);

}  // namespace tlpred

#endif  // TLPRED__RUN_CONFIG_HPP_
