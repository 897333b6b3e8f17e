#pragma once

#include "compress.hpp"
#include "config.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "objective.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "solver.hpp"
#include "theory.hpp"
