#pragma once

#include "retreg/enhancement.hpp"
#include "retreg/error.hpp"
#include "retreg/features.hpp"
#include "retreg/io.hpp"
#include "retreg/matching.hpp"
#include "retreg/phantom.hpp"
#include "retreg/pipeline.hpp"
#include "retreg/random.hpp"
#include "retreg/ransac.hpp"
#include "retreg/raster.hpp"
#include "retreg/segmentation.hpp"
#include "retreg/serialize.hpp"
#include "retreg/transform.hpp"
