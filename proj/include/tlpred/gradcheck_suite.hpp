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


#ifndef TLPRED__GRADCHECK_SUITE_HPP_
#define TLPRED__GRADCHECK_SUITE_HPP_

#include "tlpred/predictor.hpp"
#include "tlpred/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tlpred
{

struct NamedGradReport
{
  std::string name;
  GradReport report;
};

/// 2 agents, 3 observed and 2 predicted frames, window 2, hidden width 8.
HyperParams miniature_hyperparams();
TrajectoryWindow miniature_window(std::uint64_t seed);

/// Finite-difference checks of every layer and of the miniature model in each configuration.
std::vector<NamedGradReport> run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace tlpred

#endif  // TLPRED__GRADCHECK_SUITE_HPP_
