#pragma once

/// Umbrella header.

#include "ccad/geometry.hpp"
#include "ccad/eval.hpp"
#include "ccad/rng.hpp"
#include "ccad/synthetic.hpp"
#include "ccad/pool.hpp"
#include "ccad/anchors.hpp"
#include "ccad/layers.hpp"
#include "ccad/detector.hpp"
#include "ccad/losses.hpp"
#include "ccad/optim.hpp"
#include "ccad/acquisition.hpp"
#include "ccad/dataset.hpp"
#include "ccad/config.hpp"
#include "ccad/checkpoint.hpp"
#include "ccad/active_loop.hpp"
#include "ccad/report.hpp"
