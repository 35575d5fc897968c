#pragma once

#include "flatland/rail_grid.hpp"
#include "flatland/random.hpp"
#include "flatland/rail_gen.hpp"
#include "flatland/sim_core.hpp"
#include "flatland/observations.hpp"
#include "flatland/rewards.hpp"
#include "flatland/policies.hpp"
#include "flatland/env_file.hpp"
#include "flatland/trace.hpp"
#include "flatland/harness.hpp"
#include "flatland/svg.hpp"
#include "flatland/remote.hpp"
