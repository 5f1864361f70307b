#pragma once

#include "attngeom/core.hpp"
#include "attngeom/npy.hpp"
#include "attngeom/dump_io.hpp"
#include "attngeom/parallel.hpp"
#include "attngeom/geometry.hpp"
#include "attngeom/assumptions.hpp"
#include "attngeom/bounds.hpp"
#include "attngeom/synthetic.hpp"
#include "attngeom/taxonomy.hpp"
#include "attngeom/sparsify.hpp"
#include "attngeom/report.hpp"
