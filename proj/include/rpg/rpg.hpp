#pragma once

#include "rpg/core/errors.hpp"
#include "rpg/core/image.hpp"
#include "rpg/core/parallel.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/crease/bezier.hpp"
#include "rpg/crease/raster.hpp"
#include "rpg/crease/toy_palm.hpp"
#include "rpg/eval/metrics.hpp"
#include "rpg/eval/split.hpp"
#include "rpg/model/convert.hpp"
#include "rpg/model/dataset.hpp"
#include "rpg/model/networks.hpp"
#include "rpg/model/trainer.hpp"
#include "rpg/nn/checkpoint.hpp"
#include "rpg/nn/layers.hpp"
#include "rpg/nn/losses.hpp"
#include "rpg/nn/ops.hpp"
#include "rpg/nn/optim.hpp"
#include "rpg/nn/tape.hpp"
#include "rpg/nn/tensor.hpp"
#include "rpg/recog/embedding.hpp"
#include "rpg/recog/trainer.hpp"
#include "rpg/rloc/rloc.hpp"
