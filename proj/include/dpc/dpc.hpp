/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DPC_DPC_HPP_
#define DPC_DPC_HPP_

#include "dpc/analysis.hpp"
#include "dpc/backbone.hpp"
#include "dpc/cell.hpp"
#include "dpc/config.hpp"
#include "dpc/dataset.hpp"
#include "dpc/dpct_io.hpp"
#include "dpc/errors.hpp"
#include "dpc/feature_cache.hpp"
#include "dpc/gradcheck.hpp"
#include "dpc/metrics.hpp"
#include "dpc/ops.hpp"
#include "dpc/optim.hpp"
#include "dpc/pipeline.hpp"
#include "dpc/proxy.hpp"
#include "dpc/search.hpp"
#include "dpc/search_space.hpp"
#include "dpc/tensor.hpp"

#endif  // DPC_DPC_HPP_
