#pragma once

#include "mfgl/acquisition.hpp"
#include "mfgl/bench.hpp"
#include "mfgl/block_krylov.hpp"
#include "mfgl/core_types.hpp"
#include "mfgl/error.hpp"
#include "mfgl/graph.hpp"
#include "mfgl/krylov_solvers.hpp"
#include "mfgl/matrix_io.hpp"
#include "mfgl/nystrom.hpp"
#include "mfgl/parallel.hpp"
#include "mfgl/pipeline.hpp"
#include "mfgl/posterior.hpp"
#include "mfgl/random.hpp"
#include "mfgl/spectral.hpp"
