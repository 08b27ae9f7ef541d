#pragma once

#include "fidreg/cloud.hpp"
#include "fidreg/config.hpp"
#include "fidreg/detector.hpp"
#include "fidreg/error.hpp"
#include "fidreg/evaluation.hpp"
#include "fidreg/factor_graph.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/graph.hpp"
#include "fidreg/intensity_image.hpp"
#include "fidreg/io.hpp"
#include "fidreg/map_locate.hpp"
#include "fidreg/marker.hpp"
#include "fidreg/metrics.hpp"
#include "fidreg/registration.hpp"
#include "fidreg/simulator.hpp"
#include "fidreg/tag_family.hpp"
