#pragma once

#include "hyperop/dataset.hpp"
#include "hyperop/model.hpp"
#include "hyperop/regression.hpp"
#include "hyperop/rng.hpp"
#include "hyperop/statistics.hpp"
#include "hyperop/sweep.hpp"
#include "hyperop/toy.hpp"
#include "hyperop/union_find.hpp"
