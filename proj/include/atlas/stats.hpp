#pragma once

#include "atlas/stats/correlation.hpp"
#include "atlas/stats/forest.hpp"
#include "atlas/stats/linear.hpp"
#include "atlas/stats/smoothing.hpp"
