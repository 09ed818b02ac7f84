#pragma once

#include "cdm/binary_operator.hpp"
#include "cdm/cg.hpp"
#include "cdm/dft.hpp"
#include "cdm/dm_baseline.hpp"
#include "cdm/errors.hpp"
#include "cdm/gradient.hpp"
#include "cdm/grid.hpp"
#include "cdm/harness.hpp"
#include "cdm/io.hpp"
#include "cdm/pbm.hpp"
#include "cdm/random.hpp"
#include "cdm/reconstruction.hpp"
#include "cdm/recovery.hpp"
#include "cdm/sensing.hpp"
#include "cdm/state.hpp"
#include "cdm/weak_sim.hpp"
