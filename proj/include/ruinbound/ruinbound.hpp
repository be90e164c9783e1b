#pragma once

#include "ruinbound/bounds.hpp"
#include "ruinbound/config.hpp"
#include "ruinbound/errors.hpp"
#include "ruinbound/estimators.hpp"
#include "ruinbound/experiment.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/grid.hpp"
#include "ruinbound/normal.hpp"
#include "ruinbound/parallel.hpp"
#include "ruinbound/processes.hpp"
#include "ruinbound/rng.hpp"
#include "ruinbound/ruin_set.hpp"
#include "ruinbound/stats.hpp"
#include "ruinbound/transform.hpp"
#include "ruinbound/trend.hpp"
