#pragma once

// Umbrella header: continuous-time dynamic survival prediction with a
// partial-likelihood risk-score network, the classical time-dependent Cox
// comparator, Breslow-based dynamic prediction, IPCW accuracy metrics, and
// the longitudinal survival simulator.

#include "tdsurv/breslow.hpp"
#include "tdsurv/coxph.hpp"
#include "tdsurv/csv.hpp"
#include "tdsurv/dataset.hpp"
#include "tdsurv/dataset_io.hpp"
#include "tdsurv/metrics.hpp"
#include "tdsurv/model_io.hpp"
#include "tdsurv/network.hpp"
#include "tdsurv/parallel.hpp"
#include "tdsurv/partial_likelihood.hpp"
#include "tdsurv/rng.hpp"
#include "tdsurv/simulate.hpp"
#include "tdsurv/training.hpp"
