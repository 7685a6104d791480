#pragma once

#include "fedcarbon/carbon_model.hpp"
#include "fedcarbon/config.hpp"
#include "fedcarbon/error.hpp"
#include "fedcarbon/fl_sim.hpp"
#include "fedcarbon/optimizer.hpp"
#include "fedcarbon/partitioner.hpp"
#include "fedcarbon/profiles.hpp"
#include "fedcarbon/report.hpp"
#include "fedcarbon/rng.hpp"
