#pragma once

#include "tldd/common.hpp"
#include "tldd/coupling.hpp"
#include "tldd/dd_solver.hpp"
#include "tldd/experiments.hpp"
#include "tldd/fem.hpp"
#include "tldd/fitted.hpp"
#include "tldd/io.hpp"
#include "tldd/linalg.hpp"
#include "tldd/mesh.hpp"
#include "tldd/nonlinear.hpp"
#include "tldd/quadrature.hpp"
