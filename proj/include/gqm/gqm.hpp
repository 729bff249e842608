#pragma once

// Umbrella header for the Gaussian quantum metrology toolkit.

#include "gqm/phase_space.hpp"
#include "gqm/catalog.hpp"
#include "gqm/williamson.hpp"
#include "gqm/family.hpp"
#include "gqm/qfim.hpp"
#include "gqm/sld.hpp"
#include "gqm/scenario.hpp"
