#pragma once

#include "mhui/attack.hpp"
#include "mhui/checkpoint.hpp"
#include "mhui/config.hpp"
#include "mhui/data.hpp"
#include "mhui/dirichlet.hpp"
#include "mhui/error.hpp"
#include "mhui/eval.hpp"
#include "mhui/harness.hpp"
#include "mhui/model.hpp"
#include "mhui/nn.hpp"
#include "mhui/rng.hpp"
#include "mhui/tensor.hpp"
#include "mhui/train.hpp"
