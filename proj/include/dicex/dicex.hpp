#pragma once

// Umbrella header.

#include "dicex/error.hpp"
#include "dicex/rng.hpp"
#include "dicex/linalg.hpp"
#include "dicex/csv.hpp"
#include "dicex/data.hpp"
#include "dicex/model.hpp"
#include "dicex/cfgen.hpp"
#include "dicex/metrics.hpp"
#include "dicex/fidelity.hpp"
#include "dicex/stats.hpp"
#include "dicex/harness.hpp"
