// Copyright 2026 The dgpflow Authors. All Rights Reserved.
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

// Umbrella header: deep sparse GP regression with a convolutional
// normalizing-flow posterior over the stacked inducing outputs, trained by
// Monte-Carlo ELBO ascent, plus the Gaussian mean-field baseline.

#ifndef DGPFLOW_DGPFLOW_HPP_
#define DGPFLOW_DGPFLOW_HPP_

#include "dgpflow/checkpoint.hpp"
#include "dgpflow/dataset.hpp"
#include "dgpflow/errors.hpp"
#include "dgpflow/flow.hpp"
#include "dgpflow/gp.hpp"
#include "dgpflow/gradcheck.hpp"
#include "dgpflow/kernels.hpp"
#include "dgpflow/linalg.hpp"
#include "dgpflow/matrix.hpp"
#include "dgpflow/model.hpp"
#include "dgpflow/report.hpp"
#include "dgpflow/rng.hpp"
#include "dgpflow/tape.hpp"

#endif  // DGPFLOW_DGPFLOW_HPP_
