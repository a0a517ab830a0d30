#pragma once

#include "posmap/errors.hpp"
#include "posmap/extraction.hpp"
#include "posmap/forms.hpp"
#include "posmap/io.hpp"
#include "posmap/moments.hpp"
#include "posmap/monomials.hpp"
#include "posmap/oracle.hpp"
#include "posmap/polynomial.hpp"
#include "posmap/positivity.hpp"
#include "posmap/relaxation.hpp"
#include "posmap/sdp.hpp"
#include "posmap/separability.hpp"
