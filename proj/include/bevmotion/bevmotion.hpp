#pragma once

#include "bevmotion/bev.hpp"
#include "bevmotion/errors.hpp"
#include "bevmotion/eval.hpp"
#include "bevmotion/geometry.hpp"
#include "bevmotion/ground.hpp"
#include "bevmotion/io.hpp"
#include "bevmotion/losses.hpp"
#include "bevmotion/optimize.hpp"
#include "bevmotion/rng.hpp"
#include "bevmotion/segmentation.hpp"
#include "bevmotion/spatial.hpp"
#include "bevmotion/synth.hpp"
