#pragma once

#include "dopeplus/cmdp.hpp"
#include "dopeplus/environment.hpp"
#include "dopeplus/errors.hpp"
#include "dopeplus/estimation.hpp"
#include "dopeplus/extended_lp.hpp"
#include "dopeplus/runner.hpp"
#include "dopeplus/simplex.hpp"
#include "dopeplus/tensor.hpp"
