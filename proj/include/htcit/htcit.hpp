// Umbrella header.
#pragma once

#include "htcit/graph.hpp"
#include "htcit/harness.hpp"
#include "htcit/io.hpp"
#include "htcit/kernels.hpp"
#include "htcit/kerneltest.hpp"
#include "htcit/metrics.hpp"
#include "htcit/ordering.hpp"
#include "htcit/prune.hpp"
#include "htcit/rng.hpp"
#include "htcit/simgen.hpp"
