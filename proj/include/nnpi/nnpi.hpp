#pragma once

#include "nnpi/bootstrap.hpp"
#include "nnpi/config.hpp"
#include "nnpi/core.hpp"
#include "nnpi/data.hpp"
#include "nnpi/kmeans.hpp"
#include "nnpi/losses.hpp"
#include "nnpi/metrics.hpp"
#include "nnpi/network.hpp"
#include "nnpi/optimizers.hpp"
#include "nnpi/parallel.hpp"
#include "nnpi/report.hpp"
#include "nnpi/scenarios.hpp"
