#pragma once

// Umbrella header for the sparse product quantization library.

#include "spq/binary_io.hpp"
#include "spq/codebook.hpp"
#include "spq/config.hpp"
#include "spq/dataset_io.hpp"
#include "spq/error.hpp"
#include "spq/eval.hpp"
#include "spq/ivf.hpp"
#include "spq/kernels.hpp"
#include "spq/parallel.hpp"
#include "spq/pipeline.hpp"
#include "spq/pq.hpp"
#include "spq/rng.hpp"
#include "spq/sparse_coder.hpp"
#include "spq/spq_index.hpp"
#include "spq/timing.hpp"
#include "spq/training.hpp"
#include "spq/vector_set.hpp"
