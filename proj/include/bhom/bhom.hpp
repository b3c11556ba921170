#pragma once

#include "bhom/types.hpp"
#include "bhom/quadrature.hpp"
#include "bhom/extrapolation.hpp"
#include "bhom/kernel.hpp"
#include "bhom/geometry.hpp"
#include "bhom/corrector.hpp"
#include "bhom/sparse.hpp"
#include "bhom/fem.hpp"
#include "bhom/expression.hpp"
#include "bhom/harness.hpp"
#include "bhom/config.hpp"
#include "bhom/report_io.hpp"
