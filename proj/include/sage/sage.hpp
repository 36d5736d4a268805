#pragma once

#include "sage/bounds.hpp"
#include "sage/checkpoint.hpp"
#include "sage/common.hpp"
#include "sage/config.hpp"
#include "sage/experiment.hpp"
#include "sage/interaction_log.hpp"
#include "sage/metrics.hpp"
#include "sage/policy.hpp"
#include "sage/report.hpp"
#include "sage/signal.hpp"
#include "sage/simenv.hpp"
#include "sage/trainer.hpp"
