#ifndef DIRAC_DIRAC_HPP
#define DIRAC_DIRAC_HPP

#include "acceptance.hpp"
#include "clifford.hpp"
#include "config.hpp"
#include "critical.hpp"
#include "eigensolve.hpp"
#include "expr.hpp"
#include "fiber.hpp"
#include "lab.hpp"
#include "torus.hpp"

#endif
