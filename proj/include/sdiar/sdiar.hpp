#pragma once

#include "sdiar/aggregation.hpp"
#include "sdiar/assignment.hpp"
#include "sdiar/clustering.hpp"
#include "sdiar/config.hpp"
#include "sdiar/errors.hpp"
#include "sdiar/fixtures.hpp"
#include "sdiar/matrix.hpp"
#include "sdiar/metrics.hpp"
#include "sdiar/pipeline.hpp"
#include "sdiar/pooling.hpp"
#include "sdiar/rttm.hpp"
#include "sdiar/segmentation.hpp"
#include "sdiar/stream.hpp"
#include "sdiar/timebase.hpp"
