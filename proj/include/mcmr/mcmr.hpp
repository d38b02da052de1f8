#pragma once

#include "core.hpp"
#include "random.hpp"
#include "parallel.hpp"
#include "fft.hpp"
#include "operators.hpp"
#include "cg.hpp"
#include "motion.hpp"
#include "phantom.hpp"
#include "metrics.hpp"
#include "validate.hpp"
#include "container.hpp"
#include "pipeline.hpp"
