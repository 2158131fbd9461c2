#pragma once

// Everything in one include.

#include "fab/data.hpp"
#include "fab/distributions.hpp"
#include "fab/error.hpp"
#include "fab/fab_t.hpp"
#include "fab/fab_z.hpp"
#include "fab/hierarchy.hpp"
#include "fab/interval.hpp"
#include "fab/io.hpp"
#include "fab/multigroup.hpp"
#include "fab/numerics.hpp"
#include "fab/parallel.hpp"
#include "fab/sim.hpp"
