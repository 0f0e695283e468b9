#pragma once

// Umbrella header.

#include "mchmm/errors.hpp"
#include "mchmm/rng.hpp"
#include "mchmm/model.hpp"
#include "mchmm/transition.hpp"
#include "mchmm/params.hpp"
#include "mchmm/ffbs.hpp"
#include "mchmm/iffbs.hpp"
#include "mchmm/fffbs.hpp"
#include "mchmm/particle.hpp"
#include "mchmm/sampler.hpp"
#include "mchmm/parallel.hpp"
#include "mchmm/priors/horseshoe.hpp"
#include "mchmm/mh.hpp"
#include "mchmm/conjugate.hpp"
#include "mchmm/mixture.hpp"
#include "mchmm/gibbs.hpp"
#include "mchmm/simulate.hpp"
#include "mchmm/diagnostics.hpp"
#include "mchmm/io.hpp"
#include "mchmm/bench.hpp"
#include "mchmm/config.hpp"
#include "mchmm/commands.hpp"
