#pragma once

#include "midlevel/nn/checkpoint.hpp"
#include "midlevel/nn/layers.hpp"
#include "midlevel/nn/network.hpp"
#include "midlevel/nn/optim.hpp"
#include "midlevel/nn/tensor.hpp"
#include "midlevel/nn/train.hpp"
