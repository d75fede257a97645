#pragma once

#include "svbr/augmentation.hpp"
#include "svbr/baseline.hpp"
#include "svbr/dataset.hpp"
#include "svbr/error.hpp"
#include "svbr/gradcheck.hpp"
#include "svbr/image.hpp"
#include "svbr/io/bmap.hpp"
#include "svbr/io/checkpoint.hpp"
#include "svbr/io/raster.hpp"
#include "svbr/kernels.hpp"
#include "svbr/metrics.hpp"
#include "svbr/network.hpp"
#include "svbr/synthesis.hpp"
#include "svbr/training.hpp"
