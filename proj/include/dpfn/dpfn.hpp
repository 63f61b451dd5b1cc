// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "dpfn/checkpoint.hpp"
#include "dpfn/common.hpp"
#include "dpfn/data.hpp"
#include "dpfn/loss.hpp"
#include "dpfn/model.hpp"
#include "dpfn/nn.hpp"
#include "dpfn/ops.hpp"
#include "dpfn/optim.hpp"
#include "dpfn/params.hpp"
#include "dpfn/random.hpp"
#include "dpfn/rnn.hpp"
#include "dpfn/separator.hpp"
#include "dpfn/signal.hpp"
#include "dpfn/speaker.hpp"
#include "dpfn/tensor.hpp"
#include "dpfn/train.hpp"
#include "dpfn/wav.hpp"
