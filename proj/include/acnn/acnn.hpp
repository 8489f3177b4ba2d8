#pragma once

// Point-cloud deep-learning kernels built around the annular convolution
// operator stack: ring-constrained neighbor search, tangent-plane ordering,
// circular 1-D convolution, ring pooling, feature interpolation, plus the
// minimal differentiable substrate and training harness around them.

#include "acnn/adam.hpp"
#include "acnn/annular.hpp"
#include "acnn/checkpoint.hpp"
#include "acnn/config.hpp"
#include "acnn/data.hpp"
#include "acnn/encoder.hpp"
#include "acnn/errors.hpp"
#include "acnn/geometry.hpp"
#include "acnn/gradcheck.hpp"
#include "acnn/interpolate.hpp"
#include "acnn/model.hpp"
#include "acnn/nn.hpp"
#include "acnn/parallel.hpp"
#include "acnn/point_cloud.hpp"
#include "acnn/pts_io.hpp"
#include "acnn/rng.hpp"
#include "acnn/run_record.hpp"
#include "acnn/tensor.hpp"
#include "acnn/train.hpp"
#include "acnn/vec3.hpp"
