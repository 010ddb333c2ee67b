/*
 * Copyright 2026 The MFF Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "mff/audio_features.hpp"
#include "mff/calibration.hpp"
#include "mff/checkpoint.hpp"
#include "mff/common.hpp"
#include "mff/dataset.hpp"
#include "mff/image.hpp"
#include "mff/layers.hpp"
#include "mff/loss.hpp"
#include "mff/mc_dropout.hpp"
#include "mff/networks.hpp"
#include "mff/optimizer.hpp"
#include "mff/plot.hpp"
#include "mff/tensor.hpp"
#include "mff/training.hpp"
#include "mff/wav.hpp"
