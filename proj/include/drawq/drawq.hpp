#pragma once

// Umbrella header for the drawq library: replay-memory fitted Q-learning
// for episodic fixed-horizon process control, with a stochastic deep-drawing
// surrogate plant and exact enumeration oracles.

#include "drawq/drawsim.hpp"
#include "drawq/errors.hpp"
#include "drawq/harness.hpp"
#include "drawq/mdp.hpp"
#include "drawq/neural.hpp"
#include "drawq/observer.hpp"
#include "drawq/oracle.hpp"
#include "drawq/parallel.hpp"
#include "drawq/qlearn.hpp"
#include "drawq/rng.hpp"
