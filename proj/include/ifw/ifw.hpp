#pragma once

#include "ifw/linalg.hpp"
#include "ifw/problem.hpp"
#include "ifw/face.hpp"
#include "ifw/solver.hpp"
#include "ifw/bench.hpp"
