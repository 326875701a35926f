/*
 * Copyright 2026 The pebias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header.

#pragma once

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/estimators.hpp"
#include "pebias/evaluation.hpp"
#include "pebias/experiment.hpp"
#include "pebias/expomf.hpp"
#include "pebias/io.hpp"
#include "pebias/pe_simulation.hpp"
#include "pebias/seeding.hpp"
#include "pebias/synth.hpp"
#include "pebias/topics.hpp"
