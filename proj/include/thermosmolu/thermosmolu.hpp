#pragma once

#include "config.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "initial_data.hpp"
#include "kinetics.hpp"
#include "linear_solve.hpp"
#include "mollifier.hpp"
#include "output.hpp"
#include "simulation.hpp"
#include "snapshot_io.hpp"
#include "study.hpp"
#include "timestepper.hpp"
#include "version.hpp"
