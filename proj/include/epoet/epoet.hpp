#pragma once

#include "epoet/adam.hpp"
#include "epoet/checkpoint.hpp"
#include "epoet/config.hpp"
#include "epoet/cppn.hpp"
#include "epoet/environment.hpp"
#include "epoet/error.hpp"
#include "epoet/es.hpp"
#include "epoet/eval_suite.hpp"
#include "epoet/mlp.hpp"
#include "epoet/neat.hpp"
#include "epoet/numeric.hpp"
#include "epoet/orchestrator.hpp"
#include "epoet/point_mass.hpp"
#include "epoet/random.hpp"
#include "epoet/sac.hpp"
#include "epoet/serialize.hpp"
#include "epoet/terrain.hpp"
#include "epoet/walker.hpp"
#include "epoet/worker_pool.hpp"
