#pragma once

// Convenience umbrella header.

#include "taal/acquisition.hpp"
#include "taal/augment.hpp"
#include "taal/config.hpp"
#include "taal/data.hpp"
#include "taal/divergence.hpp"
#include "taal/experiment.hpp"
#include "taal/metrics.hpp"
#include "taal/net.hpp"
#include "taal/plot.hpp"
#include "taal/rng.hpp"
#include "taal/tensor.hpp"
#include "taal/training.hpp"
