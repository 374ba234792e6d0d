#pragma once

// Umbrella header: pulls in the full multivariate spatial Fay-Herriot toolkit.

#include "mvfh/adjacency.hpp"
#include "mvfh/car.hpp"
#include "mvfh/concurrency.hpp"
#include "mvfh/convergence.hpp"
#include "mvfh/covstruct.hpp"
#include "mvfh/dataset.hpp"
#include "mvfh/distributions.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/evaluate.hpp"
#include "mvfh/io.hpp"
#include "mvfh/linalg.hpp"
#include "mvfh/metrics.hpp"
#include "mvfh/mh.hpp"
#include "mvfh/morans.hpp"
#include "mvfh/ols.hpp"
#include "mvfh/priors.hpp"
#include "mvfh/rng.hpp"
#include "mvfh/sampler.hpp"
#include "mvfh/simulate.hpp"
