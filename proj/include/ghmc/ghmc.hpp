#pragma once

#include "linalg.hpp"
#include "manifold.hpp"
#include "subspace.hpp"
#include "state.hpp"
#include "hmc.hpp"
#include "data.hpp"
#include "models.hpp"
#include "predict.hpp"
#include "csv.hpp"
#include "experiments.hpp"
