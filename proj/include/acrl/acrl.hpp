#pragma once

#include "acrl/common.hpp"
#include "acrl/constraints.hpp"
#include "acrl/density.hpp"
#include "acrl/envs.hpp"
#include "acrl/harness.hpp"
#include "acrl/lp.hpp"
#include "acrl/mappings.hpp"
#include "acrl/nn.hpp"
#include "acrl/projection.hpp"
#include "acrl/rl/replay.hpp"
#include "acrl/rl/trainer.hpp"
#include "acrl/rl/variants.hpp"
