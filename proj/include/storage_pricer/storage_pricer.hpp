#pragma once

#include "storage_pricer/errors.hpp"
#include "storage_pricer/rng.hpp"
#include "storage_pricer/parallel.hpp"
#include "storage_pricer/csv.hpp"
#include "storage_pricer/distributions.hpp"
#include "storage_pricer/costs.hpp"
#include "storage_pricer/reformulation.hpp"
#include "storage_pricer/solver.hpp"
#include "storage_pricer/dispatch.hpp"
#include "storage_pricer/theory.hpp"
#include "storage_pricer/scenarios.hpp"
#include "storage_pricer/baseline.hpp"
