#pragma once

// Core library. The experiment runner lives in mcsmf/bench.hpp and needs
// OpenSSL (target mcsmf_bench).
#include "mcsmf/conic_program.hpp"
#include "mcsmf/dynamics.hpp"
#include "mcsmf/ellipsoid.hpp"
#include "mcsmf/errors.hpp"
#include "mcsmf/interior_point.hpp"
#include "mcsmf/interval.hpp"
#include "mcsmf/particle_filter.hpp"
#include "mcsmf/remainder_bounding.hpp"
#include "mcsmf/sampling.hpp"
#include "mcsmf/scenario.hpp"
#include "mcsmf/smf.hpp"
