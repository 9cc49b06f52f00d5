#pragma once

#include "dat/analysis.hpp"
#include "dat/error.hpp"
#include "dat/feasibility.hpp"
#include "dat/grid.hpp"
#include "dat/io.hpp"
#include "dat/kernels.hpp"
#include "dat/matrix.hpp"
#include "dat/network.hpp"
#include "dat/oracle.hpp"
#include "dat/scenario.hpp"
#include "dat/semiring.hpp"
#include "dat/sinkhorn.hpp"
