#pragma once

#include "agedist/model.hpp"
#include "agedist/state_tree.hpp"
#include "agedist/solver.hpp"
#include "agedist/strategies.hpp"
#include "agedist/buffer_ignorant.hpp"
#include "agedist/sim.hpp"
#include "agedist/policy_io.hpp"
