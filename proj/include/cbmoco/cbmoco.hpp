#pragma once

// Differentiable cone-beam CT geometry and rigid motion compensation.

#include "cbmoco/akima.hpp"
#include "cbmoco/backproject.hpp"
#include "cbmoco/errors.hpp"
#include "cbmoco/evaluate.hpp"
#include "cbmoco/experiment.hpp"
#include "cbmoco/fft.hpp"
#include "cbmoco/geometry.hpp"
#include "cbmoco/io.hpp"
#include "cbmoco/math.hpp"
#include "cbmoco/metrics.hpp"
#include "cbmoco/motion.hpp"
#include "cbmoco/optimize.hpp"
#include "cbmoco/parallel.hpp"
#include "cbmoco/phantom.hpp"
#include "cbmoco/project.hpp"
#include "cbmoco/ramp.hpp"
#include "cbmoco/stack.hpp"
#include "cbmoco/volume.hpp"
