#pragma once

// Umbrella header: the l^p geometry kit, grid/convex operators, the exact
// lattice backend, the KS iteration, and the reporting/checking layers.

#include "space.hpp"
#include "lp_geometry.hpp"
#include "grid_functional.hpp"
#include "minimize.hpp"
#include "convex_ops.hpp"
#include "lattice.hpp"
#include "ks_iteration.hpp"
#include "config.hpp"
#include "reporting.hpp"
#include "lemma_checks.hpp"
#include "harness.hpp"
