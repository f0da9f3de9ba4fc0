// Copyright 2026 The LPM Authors. All Rights Reserved.
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

// Umbrella header. The HTTP service lives in lpm/service.hpp and is not
// included here.

#pragma once

#include "lpm/autodiff.hpp"
#include "lpm/checkpoint.hpp"
#include "lpm/cloud.hpp"
#include "lpm/config.hpp"
#include "lpm/distances.hpp"
#include "lpm/generative.hpp"
#include "lpm/gradcheck.hpp"
#include "lpm/latent_edit.hpp"
#include "lpm/layers.hpp"
#include "lpm/losses.hpp"
#include "lpm/metrics.hpp"
#include "lpm/model.hpp"
#include "lpm/optim.hpp"
#include "lpm/pooling.hpp"
#include "lpm/tensor.hpp"
