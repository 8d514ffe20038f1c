#pragma once

#include "sparlow/errors.hpp"
#include "sparlow/graphs.hpp"
#include "sparlow/io.hpp"
#include "sparlow/manifold.hpp"
#include "sparlow/objective.hpp"
#include "sparlow/optimizer.hpp"
#include "sparlow/pipeline.hpp"
#include "sparlow/sparse.hpp"
