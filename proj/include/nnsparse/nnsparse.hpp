#pragma once

#include "nnsparse/bench.hpp"
#include "nnsparse/conditions.hpp"
#include "nnsparse/core.hpp"
#include "nnsparse/io.hpp"
#include "nnsparse/oracle.hpp"
#include "nnsparse/rng.hpp"
#include "nnsparse/solvers.hpp"
