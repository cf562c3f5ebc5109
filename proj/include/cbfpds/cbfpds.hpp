#pragma once

#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/expr.hpp"
#include "cbfpds/barrier.hpp"
#include "cbfpds/projection.hpp"
#include "cbfpds/sampling.hpp"
#include "cbfpds/scenario.hpp"
#include "cbfpds/cbf.hpp"
#include "cbfpds/pds.hpp"
#include "cbfpds/bounds.hpp"
#include "cbfpds/sim.hpp"
#include "cbfpds/analysis.hpp"
#include "cbfpds/validation.hpp"
#include "cbfpds/io.hpp"
