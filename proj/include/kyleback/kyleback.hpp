#pragma once

#include "kyleback/numerics.hpp"
#include "kyleback/ou_core.hpp"
#include "kyleback/rng.hpp"
#include "kyleback/sde_engine.hpp"
#include "kyleback/equilibrium_run.hpp"
#include "kyleback/bernoulli_equilibrium.hpp"
#include "kyleback/payoff.hpp"
#include "kyleback/general_equilibrium.hpp"
#include "kyleback/verify_mc.hpp"
