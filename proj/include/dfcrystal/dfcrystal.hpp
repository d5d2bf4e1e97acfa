#pragma once

#include "errors.hpp"
#include "lattice.hpp"
#include "dirac.hpp"
#include "potentials.hpp"
#include "density.hpp"
#include "constants.hpp"
#include "meanfield.hpp"
#include "scf.hpp"
#include "config.hpp"
