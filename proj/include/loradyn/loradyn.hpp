#pragma once

#include "loradyn/errors.hpp"
#include "loradyn/numerics.hpp"
#include "loradyn/problem.hpp"
#include "loradyn/dynamics.hpp"
#include "loradyn/init.hpp"
#include "loradyn/metrics.hpp"
#include "loradyn/scalar_oracle.hpp"
#include "loradyn/harness/config.hpp"
#include "loradyn/harness/csv.hpp"
#include "loradyn/harness/svg.hpp"
#include "loradyn/harness/sweep.hpp"
#include "loradyn/harness/verify.hpp"
