#pragma once

#include "disc/batchnorm.hpp"
#include "disc/checkpoint.hpp"
#include "disc/cluster.hpp"
#include "disc/config.hpp"
#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/io.hpp"
#include "disc/matrix.hpp"
#include "disc/metrics.hpp"
#include "disc/model.hpp"
#include "disc/ops.hpp"
#include "disc/optim.hpp"
#include "disc/pca.hpp"
#include "disc/pipeline.hpp"
#include "disc/refine.hpp"
#include "disc/synthetic.hpp"
#include "disc/tensor.hpp"
#include "disc/train.hpp"
