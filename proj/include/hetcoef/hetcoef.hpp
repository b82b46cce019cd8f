#pragma once

// Umbrella header for the hetcoef library: identification diagnostics and
// average-treatment-effect estimation for the multi-treatment heterogeneous
// coefficients model with control variables.

#include "hetcoef/algebra.hpp"
#include "hetcoef/csv.hpp"
#include "hetcoef/error.hpp"
#include "hetcoef/estimation.hpp"
#include "hetcoef/identification.hpp"
#include "hetcoef/json_io.hpp"
#include "hetcoef/rng.hpp"
#include "hetcoef/simulation.hpp"
