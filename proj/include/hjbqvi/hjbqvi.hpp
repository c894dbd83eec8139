#pragma once

#include "hjbqvi/error.hpp"
#include "hjbqvi/grid.hpp"
#include "hjbqvi/problem.hpp"
#include "hjbqvi/sparse.hpp"
#include "hjbqvi/operators.hpp"
#include "hjbqvi/linsolve.hpp"
#include "hjbqvi/solver.hpp"
#include "hjbqvi/forest.hpp"
#include "hjbqvi/rng.hpp"
#include "hjbqvi/validate.hpp"
