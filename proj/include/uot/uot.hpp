#pragma once

// Umbrella header for the uot library.

#include "uot/common.hpp"
#include "uot/entropy.hpp"
#include "uot/estimator.hpp"
#include "uot/legendre.hpp"
#include "uot/measures.hpp"
#include "uot/point.hpp"
#include "uot/potentials.hpp"
#include "uot/primal.hpp"
#include "uot/random.hpp"
#include "uot/rates.hpp"
#include "uot/semidual.hpp"
#include "uot/svg.hpp"
