#pragma once

// Umbrella header for the mesc toolkit.

#include "mesc/adam.hpp"
#include "mesc/affinity.hpp"
#include "mesc/cli.hpp"
#include "mesc/data.hpp"
#include "mesc/eigen.hpp"
#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"
#include "mesc/metrics.hpp"
#include "mesc/network.hpp"
#include "mesc/rng.hpp"
#include "mesc/run_config.hpp"
#include "mesc/spectral.hpp"
