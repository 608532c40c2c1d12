// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "slspec/bc.hpp"
#include "slspec/errors.hpp"
#include "slspec/experiments.hpp"
#include "slspec/io.hpp"
#include "slspec/matrix.hpp"
#include "slspec/problem.hpp"
#include "slspec/shooting.hpp"
