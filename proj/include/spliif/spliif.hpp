#pragma once

// Library umbrella header (the CLI layer in spliif/cli/ is not included).

#include "spliif/error.hpp"
#include "spliif/io.hpp"

#include "spliif/numerics/adam.hpp"
#include "spliif/numerics/graph.hpp"
#include "spliif/numerics/ops.hpp"
#include "spliif/numerics/random.hpp"
#include "spliif/numerics/tensor.hpp"
#include "spliif/numerics/window.hpp"

#include "spliif/interp/bilinear.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/interp/idw.hpp"

#include "spliif/model/checkpoint.hpp"
#include "spliif/model/config.hpp"
#include "spliif/model/params.hpp"
#include "spliif/model/spliif.hpp"

#include "spliif/data/ascii_grid.hpp"
#include "spliif/data/dataset.hpp"
#include "spliif/data/normalize.hpp"
#include "spliif/data/station.hpp"
#include "spliif/data/station_csv.hpp"
#include "spliif/data/synth_world.hpp"

#include "spliif/training/train.hpp"

#include "spliif/eval/evaluate.hpp"
#include "spliif/eval/histogram.hpp"
#include "spliif/eval/metrics.hpp"
#include "spliif/eval/render.hpp"
