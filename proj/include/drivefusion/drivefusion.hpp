#pragma once

#include "drivefusion/autodiff/tape.hpp"
#include "drivefusion/core/error.hpp"
#include "drivefusion/core/rng.hpp"
#include "drivefusion/core/strings.hpp"
#include "drivefusion/core/tensor.hpp"
#include "drivefusion/data/generate.hpp"
#include "drivefusion/data/load.hpp"
#include "drivefusion/data/types.hpp"
#include "drivefusion/ensemble.hpp"
#include "drivefusion/evaluate.hpp"
#include "drivefusion/io/csv.hpp"
#include "drivefusion/io/png.hpp"
#include "drivefusion/nn/backbone.hpp"
#include "drivefusion/nn/checkpoint.hpp"
#include "drivefusion/nn/model.hpp"
#include "drivefusion/nn/modules.hpp"
#include "drivefusion/plot.hpp"
#include "drivefusion/presets.hpp"
#include "drivefusion/preprocess.hpp"
#include "drivefusion/trainer.hpp"
#include "drivefusion/trajectory.hpp"
