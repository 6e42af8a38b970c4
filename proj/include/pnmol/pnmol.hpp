#pragma once

#include "pnmol/bench.hpp"
#include "pnmol/discretize.hpp"
#include "pnmol/inference.hpp"
#include "pnmol/kernels.hpp"
#include "pnmol/linalg.hpp"
#include "pnmol/problems.hpp"
#include "pnmol/solver.hpp"
#include "pnmol/statespace.hpp"
