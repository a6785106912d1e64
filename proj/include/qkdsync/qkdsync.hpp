#pragma once

#include "clock.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "mc_sim.hpp"
#include "metrics.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "pdf_engine.hpp"
#include "physics.hpp"
#include "plant.hpp"
#include "rng.hpp"
#include "sync.hpp"
#include "trajectory.hpp"
#include "units.hpp"
