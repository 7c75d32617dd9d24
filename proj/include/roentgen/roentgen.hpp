// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header for the engine (everything except the HTTP service).

#pragma once

#include "roentgen/diagnosis.hpp"
#include "roentgen/error.hpp"
#include "roentgen/evaluation.hpp"
#include "roentgen/imaging.hpp"
#include "roentgen/knowledge_base.hpp"
#include "roentgen/model.hpp"
#include "roentgen/network.hpp"
#include "roentgen/ops.hpp"
#include "roentgen/random.hpp"
#include "roentgen/tensor.hpp"
#include "roentgen/train.hpp"
