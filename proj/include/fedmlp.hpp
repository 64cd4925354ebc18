// Umbrella header.
#pragma once

#include "fedmlp/annotation.hpp"
#include "fedmlp/cli.hpp"
#include "fedmlp/config.hpp"
#include "fedmlp/core_model.hpp"
#include "fedmlp/data_synth.hpp"
#include "fedmlp/errors.hpp"
#include "fedmlp/fed_protocol.hpp"
#include "fedmlp/fixtures.hpp"
#include "fedmlp/metrics.hpp"
#include "fedmlp/prototype_engine.hpp"
