#pragma once

#include "don/error.hpp"
#include "don/raster.hpp"
#include "don/parallel.hpp"
#include "don/geometry.hpp"
#include "don/scenegen.hpp"
#include "don/fusion.hpp"
#include "don/correspond.hpp"
#include "don/adam.hpp"
#include "don/descriptor.hpp"
#include "don/keypoints.hpp"
#include "don/policy.hpp"
#include "don/metrics.hpp"
#include "don/io.hpp"
#include "don/config.hpp"
