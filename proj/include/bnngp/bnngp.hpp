#pragma once

#include "bnngp/core.hpp"
#include "bnngp/kernel.hpp"
#include "bnngp/lowrank.hpp"
#include "bnngp/map_train.hpp"
#include "bnngp/predict.hpp"
#include "bnngp/simulate.hpp"
#include "bnngp/bnn_oracle.hpp"
#include "bnngp/datasets.hpp"
#include "bnngp/sweep.hpp"
#include "bnngp/io.hpp"
