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


#include "tlpred/run_config.hpp"

#include <cstdio>

namespace tlpred
{

std::uint64_t fnv1a64(const std::string & bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json RunConfig::canonical() const
{
  nlohmann::json j = {{"command", command}, {"seed", seed}};
  if (command == "generate") {
    j["scenario"] = scenario.to_json();
    j["frames"] = frames;
  } else if (command == "train") {
    j["hyper"] = hyper.to_json();
    j["data_dir"] = data_dir;
  } else if (command == "eval") {
    j["checkpoint_dir"] = checkpoint_dir;
    j["data_dir"] = data_dir;
    j["split"] = split;
    j["k_samples"] = hyper.k_samples;
    j["dump_masks"] = dump_masks;
  } else if (command == "gradcheck") {
    j["tolerance"] = tolerance;
  }
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json & j)
{
  RunConfig c;
  c.command = j.at("command").get<std::string>();
  c.seed = j.value("seed", c.seed);
  if (j.contains("scenario")) {
    c.scenario = ScenarioConfig::from_json(j.at("scenario"));
  }
  c.frames = j.value("frames", c.frames);
  if (j.contains("hyper")) {
    c.hyper = HyperParams::from_json(j.at("hyper"));
  }
  c.data_dir = j.value("data_dir", c.data_dir);
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
  c.split = j.value("split", c.split);
  c.hyper.k_samples = j.value("k_samples", c.hyper.k_samples);
  c.dump_masks = j.value("dump_masks", c.dump_masks);
  c.tolerance = j.value("tolerance", c.tolerance);
  return c;
}

std::string RunConfig::hash() const
{
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical().dump())));
  return buf;
}

}  // namespace tlpred
